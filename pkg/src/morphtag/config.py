"""Training configuration and the ``key = value`` config/grid file format.

One key per line; ``#`` starts a comment.  Values are numbers, ``inf``,
``true``/``false`` or bare strings; a bracketed comma-separated list
(``hidden_size = [64, 128]``) makes the key a grid dimension.
"""

import hashlib
import itertools
import json
import math
from dataclasses import MISSING, asdict, dataclass, fields

from .tagger import CONTEXTS, FEATURE_LEVELS, MODEL_KINDS, FeatureConfig


class ConfigError(ValueError):
    pass


GRID_DROPOUT = (0.0, 0.1, 0.2, 0.3)
GRID_CLIP = (0.5, 1.0, 2.0, 4.0, math.inf)
GRID_HIDDEN = tuple(2**x for x in range(6, 12))


@dataclass(frozen=True)
class TrainConfig:
    lr: float
    hidden_size: int
    model_kind: str
    context: str
    feature_level: str = "morpheme"
    lowercase: bool = False
    embedding_dim: int = 128
    weight_decay: float = 0.0
    dropout_p: float = 0.0
    clip_norm: float = math.inf
    max_epochs: int = 100
    patience: int = 10
    batch_size: int = 32
    seed: int = 0
    min_count: int = 2

    def __post_init__(self):
        if self.model_kind not in MODEL_KINDS:
            raise ConfigError(f"model_kind must be one of {MODEL_KINDS}, got {self.model_kind!r}")
        if self.context not in CONTEXTS:
            raise ConfigError(f"context must be one of {CONTEXTS}, got {self.context!r}")
        if self.feature_level not in FEATURE_LEVELS:
            raise ConfigError(f"feature_level must be one of {FEATURE_LEVELS}, got {self.feature_level!r}")
        if not self.lr > 0:
            raise ConfigError(f"lr must be positive, got {self.lr}")
        if self.weight_decay < 0:
            raise ConfigError(f"weight_decay must be non-negative, got {self.weight_decay}")
        if not 0.0 <= self.dropout_p < 1.0:
            raise ConfigError(f"dropout_p must be in [0, 1), got {self.dropout_p}")
        if not self.clip_norm > 0:
            raise ConfigError(f"clip_norm must be positive or inf, got {self.clip_norm}")
        for name in ("hidden_size", "embedding_dim", "max_epochs", "batch_size", "min_count"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be at least 1, got {getattr(self, name)}")
        if self.patience < 0:
            raise ConfigError(f"patience must be non-negative, got {self.patience}")

    @property
    def feature_config(self):
        return FeatureConfig(self.feature_level, self.lowercase, self.embedding_dim)

    def check_grid_ranges(self):
        """Raise ConfigError unless the hyperparameters lie in the tuning grid's ranges."""
        problems = []
        if not 1e-6 <= self.lr <= 1e-1:
            problems.append(f"lr {self.lr} outside [1e-6, 1e-1]")
        if not (self.weight_decay == 0 or 1e-10 <= self.weight_decay <= 1e-3):
            problems.append(f"weight_decay {self.weight_decay} outside {{0}} U [1e-10, 1e-3]")
        if self.hidden_size not in GRID_HIDDEN:
            problems.append(f"hidden_size {self.hidden_size} not in {GRID_HIDDEN}")
        if self.dropout_p not in GRID_DROPOUT:
            problems.append(f"dropout_p {self.dropout_p} not in {GRID_DROPOUT}")
        if self.clip_norm not in GRID_CLIP:
            problems.append(f"clip_norm {self.clip_norm} not in {GRID_CLIP}")
        if problems:
            raise ConfigError("; ".join(problems))

    def to_dict(self):
        return asdict(self)

    def config_hash(self):
        blob = json.dumps(self.to_dict(), sort_keys=True).encode("utf-8")
        return hashlib.sha256(blob).hexdigest()[:16]


CONFIG_KEYS = tuple(f.name for f in fields(TrainConfig))
REQUIRED_KEYS = tuple(f.name for f in fields(TrainConfig) if f.default is MISSING and f.default_factory is MISSING)
_INT_KEYS = {"hidden_size", "embedding_dim", "max_epochs", "patience", "batch_size", "seed", "min_count"}
_FLOAT_KEYS = {"lr", "weight_decay", "dropout_p", "clip_norm"}


def parse_scalar(text):
    text = text.strip()
    if len(text) >= 2 and text[0] == text[-1] and text[0] in "\"'":
        return text[1:-1]
    low = text.lower()
    if low in ("true", "false"):
        return low == "true"
    if low in ("inf", "+inf", "infinity", "∞"):
        return math.inf
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        return text


def parse_value(text):
    text = text.strip()
    if text.startswith("["):
        if not text.endswith("]"):
            raise ConfigError(f"unterminated list: {text!r}")
        inner = text[1:-1].strip()
        return [parse_scalar(v) for v in inner.split(",")] if inner else []
    return parse_scalar(text)


def parse_config_text(text, source="<config>"):
    values = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ConfigError(f"{source}:{lineno}: empty key")
        if key in values:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        values[key] = parse_value(value)
    return values


def read_config_file(path):
    with open(path, encoding="utf-8") as fh:
        return parse_config_text(fh.read(), str(path))


def _coerce(key, value):
    if key in _INT_KEYS:
        if isinstance(value, bool) or not isinstance(value, (int, float)) or int(value) != value:
            raise ConfigError(f"{key} must be an integer, got {value!r}")
        return int(value)
    if key in _FLOAT_KEYS:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{key} must be a number, got {value!r}")
        return float(value)
    if key == "lowercase":
        if not isinstance(value, bool):
            raise ConfigError(f"lowercase must be true or false, got {value!r}")
        return value
    return str(value)


def config_from_dict(values, **overrides):
    merged = {**values, **{k: v for k, v in overrides.items() if v is not None}}
    unknown = sorted(set(merged) - set(CONFIG_KEYS))
    if unknown:
        raise ConfigError(f"unknown config key {unknown[0]!r}")
    for key in REQUIRED_KEYS:
        if key not in merged:
            raise ConfigError(f"missing config key {key!r}")
    for key, value in merged.items():
        if isinstance(value, list):
            raise ConfigError(f"{key} is a list; lists are only allowed in grid files")
    return TrainConfig(**{k: _coerce(k, v) for k, v in merged.items()})


def expand_grid(values, **overrides):
    """Cross product over list-valued keys, in file order."""
    if not values:
        raise ConfigError("empty grid")
    keys = list(values)
    axes = [values[k] if isinstance(values[k], list) else [values[k]] for k in keys]
    for k, axis in zip(keys, axes):
        if not axis:
            raise ConfigError(f"empty grid: {k!r} has no values")
    return [config_from_dict(dict(zip(keys, combo)), **overrides) for combo in itertools.product(*axes)]


def format_config(config):
    lines = []
    for key, value in config.to_dict().items():
        if isinstance(value, bool):
            value = "true" if value else "false"
        elif isinstance(value, float) and math.isinf(value):
            value = "inf"
        lines.append(f"{key} = {value}")
    return "\n".join(lines) + "\n"
