"""Bi-LSTM and bi-LSTM-CRF morpheme taggers.

Batches are time-major: position ``t`` of sequence ``b`` lives in row
``t * B + b`` of every flattened (L*B, ...) matrix.  Sequences are left-aligned
and padded; padded steps leave the LSTM state untouched, which keeps the
right-to-left pass exact for short sequences.

In sentence context the word-boundary positions get an extra output column
(index ``n_tags``).  It is forced at boundaries and forbidden elsewhere through
an additive mask, so the CRF chain runs unbroken across words while the
boundary never shows up in predictions or in the loss.
"""

import math
from dataclasses import asdict, dataclass

import numpy as np

from . import corpus as C
from .crf import CrfLayer, batch_log_partition, batch_path_score_total, viterbi_decode
from .errors import CheckpointError, EmptyInput
from .numerics import Tensor, concat, dropout, gather, index, log_softmax, reshape, sigmoid, sum, tanh, where
from .numerics import checkpoint, no_grad

MODEL_KINDS = ("bilstm", "bilstm_crf")
CONTEXTS = ("word", "sentence")
FEATURE_LEVELS = ("morpheme", "char_sum")

# additive score for disallowed (position, tag) cells; exp() of it is exactly 0
FORBIDDEN = -1e4


@dataclass(frozen=True)
class FeatureConfig:
    feature_level: str = "morpheme"
    lowercase: bool = False
    embedding_dim: int = 128

    def __post_init__(self):
        if self.feature_level not in FEATURE_LEVELS:
            raise ValueError(f"feature_level must be one of {FEATURE_LEVELS}, got {self.feature_level!r}")


@dataclass
class Batch:
    instances: list
    lengths: np.ndarray
    mask: np.ndarray  # (L, B) real positions
    boundary: np.ndarray  # (L, B) word-boundary positions

    @property
    def shape(self):
        return self.mask.shape


def make_batch(instances):
    lengths = np.array([len(x.inputs) for x in instances], dtype=np.int64)
    L, B = int(lengths.max()), len(instances)
    mask = np.zeros((L, B), dtype=bool)
    boundary = np.zeros((L, B), dtype=bool)
    for b, x in enumerate(instances):
        mask[: lengths[b], b] = True
        boundary[: lengths[b], b] = x.boundary
    return Batch(list(instances), lengths, mask, boundary)


class TaggerModel:
    def __init__(self, vocab, feature_config, hidden_size, model_kind="bilstm", context="word",
                 dropout_p=0.0, params=None, segmentation_kind="canonical", language_id=""):
        if model_kind not in MODEL_KINDS:
            raise ValueError(f"model_kind must be one of {MODEL_KINDS}, got {model_kind!r}")
        if context not in CONTEXTS:
            raise ValueError(f"context must be one of {CONTEXTS}, got {context!r}")
        self.vocab = vocab
        self.feature_config = feature_config
        self.hidden_size = hidden_size
        self.model_kind = model_kind
        self.context = context
        self.dropout_p = dropout_p
        self.segmentation_kind = segmentation_kind
        self.language_id = language_id
        self.params = params if params is not None else {}

    # -- construction -------------------------------------------------------

    @property
    def n_tags(self):
        return self.vocab.n_tags

    @property
    def n_outputs(self):
        return self.n_tags + (1 if self.context == "sentence" else 0)

    @property
    def boundary_tag(self):
        return self.n_tags

    @classmethod
    def initialise(cls, vocab, feature_config, hidden_size, model_kind="bilstm", context="word",
                   dropout_p=0.0, rng=None, segmentation_kind="canonical", language_id=""):
        rng = rng if rng is not None else np.random.default_rng(0)
        model = cls(vocab, feature_config, hidden_size, model_kind, context, dropout_p,
                    segmentation_kind=segmentation_kind, language_id=language_id)
        d, h, T = feature_config.embedding_dim, hidden_size, model.n_outputs
        table_size = len(vocab.char_to_id) if feature_config.feature_level == "char_sum" else len(vocab.morpheme_to_id)
        arrays = {"embeddings": rng.normal(0.0, 1.0 / math.sqrt(d), (table_size, d))}
        bound = math.sqrt(1.0 / h)
        for direction in ("fwd", "bwd"):
            arrays[f"{direction}.W_ih"] = rng.uniform(-bound, bound, (d, 4 * h))
            arrays[f"{direction}.W_hh"] = rng.uniform(-bound, bound, (h, 4 * h))
            bias = np.zeros(4 * h)
            bias[h : 2 * h] = 1.0  # forget gate
            arrays[f"{direction}.b"] = bias
        pbound = math.sqrt(1.0 / (2 * h))
        arrays["proj.W"] = rng.uniform(-pbound, pbound, (2 * h, T))
        arrays["proj.b"] = np.zeros(T)
        if model_kind == "bilstm_crf":
            arrays["crf.transitions"] = np.zeros((T, T))
            arrays["crf.start"] = np.zeros(T)
            arrays["crf.end"] = np.zeros(T)
        model.params = {k: Tensor(v, requires_grad=True, name=k) for k, v in arrays.items()}
        return model

    def expected_shapes(self):
        d, h, T = self.feature_config.embedding_dim, self.hidden_size, self.n_outputs
        level = self.feature_config.feature_level
        rows = len(self.vocab.char_to_id) if level == "char_sum" else len(self.vocab.morpheme_to_id)
        shapes = {"embeddings": (rows, d)}
        for direction in ("fwd", "bwd"):
            shapes[f"{direction}.W_ih"] = (d, 4 * h)
            shapes[f"{direction}.W_hh"] = (h, 4 * h)
            shapes[f"{direction}.b"] = (4 * h,)
        shapes["proj.W"] = (2 * h, T)
        shapes["proj.b"] = (T,)
        if self.model_kind == "bilstm_crf":
            shapes.update({"crf.transitions": (T, T), "crf.start": (T,), "crf.end": (T,)})
        return shapes

    @property
    def crf(self):
        if self.model_kind != "bilstm_crf":
            return None
        p = self.params
        return CrfLayer(p["crf.transitions"], p["crf.start"], p["crf.end"])

    def config_dict(self):
        return {
            "model_kind": self.model_kind,
            "context": self.context,
            "hidden_size": self.hidden_size,
            "dropout_p": self.dropout_p,
            "feature": asdict(self.feature_config),
        }

    def snapshot(self):
        return {k: v.data.copy() for k, v in self.params.items()}

    def restore(self, arrays):
        for k, v in arrays.items():
            self.params[k].data = v.copy()

    # -- encoding -----------------------------------------------------------

    def encode(self, unit, train=True):
        return C.encode(unit, self.vocab, self.context, self.feature_config.feature_level, train)

    def encode_corpus(self, corpus, train=True, context=None):
        return C.encode_corpus(corpus, self.vocab, context or self.context, self.feature_config.feature_level, train)

    # -- forward ------------------------------------------------------------

    def _embed(self, batch):
        L, B = batch.shape
        table = self.params["embeddings"]
        if self.feature_config.feature_level == "morpheme":
            ids = np.full((L, B), C.PAD, dtype=np.int64)
            for b, x in enumerate(batch.instances):
                ids[: len(x.inputs), b] = x.inputs
            return gather(table, ids.reshape(-1))
        counts = np.zeros((L * B, table.shape[0]))
        for b, x in enumerate(batch.instances):
            for t, chars in enumerate(x.inputs):
                for c in chars:
                    counts[t * B + b, c] += 1.0
        return Tensor(counts) @ table

    def _lstm(self, x_proj, W_hh, mask, reverse):
        L, B = mask.shape
        H = self.hidden_size
        h = Tensor(np.zeros((B, H)))
        c = Tensor(np.zeros((B, H)))
        outputs = [None] * L
        for t in (range(L - 1, -1, -1) if reverse else range(L)):
            gates = x_proj[t * B : (t + 1) * B] + h @ W_hh
            act = sigmoid(gates)
            i, f, o = act[:, :H], act[:, H : 2 * H], act[:, 3 * H :]
            cand = tanh(gates[:, 2 * H : 3 * H])
            c_new = f * c + i * cand
            h_new = o * tanh(c_new)
            if mask[t].all():
                h, c = h_new, c_new
            else:
                m = mask[t][:, None]
                h, c = where(m, h_new, h), where(m, c_new, c)
            outputs[t] = h
        return concat(outputs, axis=0)

    def _states(self, emb, mask, train, rng):
        p = self.params
        emb = dropout(emb, self.dropout_p, train, rng)
        fwd = self._lstm(emb @ p["fwd.W_ih"] + p["fwd.b"], p["fwd.W_hh"], mask, reverse=False)
        bwd = self._lstm(emb @ p["bwd.W_ih"] + p["bwd.b"], p["bwd.W_hh"], mask, reverse=True)
        states = concat([fwd, bwd], axis=1)
        return dropout(states, self.dropout_p, train, rng)

    def _emissions(self, states):
        return states @ self.params["proj.W"] + self.params["proj.b"]

    def constraint(self, batch):
        """Additive (L, B, T') mask tying the boundary column to boundary positions."""
        L, B = batch.shape
        out = np.zeros((L, B, self.n_outputs))
        if self.context == "sentence":
            word = batch.mask & ~batch.boundary
            out[batch.boundary, : self.n_tags] = FORBIDDEN
            out[word, self.boundary_tag] = FORBIDDEN
        return out

    def forward(self, batch, train=False, rng=None):
        """Constrained emission scores, shape (L, B, T')."""
        L, B = batch.shape
        states = self._states(self._embed(batch), batch.mask, train, rng)
        em = reshape(self._emissions(states), (L, B, self.n_outputs))
        if self.context == "sentence":
            em = em + self.constraint(batch)
        return em

    # -- loss ---------------------------------------------------------------

    def loss(self, instances, train=True, rng=None):
        """Mean token cross-entropy (bilstm) or mean sequence NLL (bilstm_crf)."""
        batch = make_batch(instances)
        L, B = batch.shape
        em = self.forward(batch, train, rng)
        if self.model_kind == "bilstm":
            logp = log_softmax(reshape(em, (L * B, self.n_outputs)), axis=1)
            rows, cols = [], []
            for b, x in enumerate(instances):
                for t, tag in enumerate(x.tags):
                    if tag != C.IGNORE:
                        rows.append(t * B + b)
                        cols.append(tag)
            picked = index(logp, (np.array(rows), np.array(cols)))
            return sum(picked) * (-1.0 / len(rows))
        tags = np.zeros((L, B), dtype=np.int64)
        for b, x in enumerate(instances):
            seq = [self.boundary_tag if is_b else tag for tag, is_b in zip(x.tags, x.boundary)]
            if any(t == C.IGNORE for t in seq):
                raise ValueError("CRF loss needs gold tags at every position")
            tags[: len(seq), b] = seq
        log_z = batch_log_partition(em, self.crf, batch.mask)
        gold = batch_path_score_total(em, self.crf, tags, batch.lengths)
        return (sum(log_z) - gold) * (1.0 / B)

    # -- decoding -----------------------------------------------------------

    def decode(self, instances, batch_size=64):
        """Predicted tag ids per instance, boundary positions included."""
        out = []
        for start in range(0, len(instances), batch_size):
            chunk = instances[start : start + batch_size]
            batch = make_batch(chunk)
            em = self.forward(batch, train=False).data
            for b, x in enumerate(chunk):
                e = em[: len(x.inputs), b]
                if self.model_kind == "bilstm_crf":
                    path, _ = viterbi_decode(e, self.crf.arrays())
                else:
                    path = softmax_decode(e)
                out.append(path)
        return out

    # -- persistence --------------------------------------------------------

    def header(self):
        return {
            "format": "morphtag-model",
            "config": self.config_dict(),
            "vocabulary": self.vocab.to_dict(),
            "segmentation_kind": self.segmentation_kind,
            "language_id": self.language_id,
        }

    def to_bytes(self):
        return checkpoint.dumps(self.header(), ((k, v.data) for k, v in self.params.items()))

    def save(self, path):
        with open(path, "wb") as fh:
            fh.write(self.to_bytes())

    @classmethod
    def from_bytes(cls, blob):
        header, entries = checkpoint.loads(blob)
        if header.get("format") != "morphtag-model":
            raise CheckpointError("checkpoint does not hold a tagger model")
        try:
            cfg = header["config"]
            model = cls(
                C.Vocabulary.from_dict(header["vocabulary"]),
                FeatureConfig(**cfg["feature"]),
                cfg["hidden_size"],
                cfg["model_kind"],
                cfg["context"],
                cfg["dropout_p"],
                params={k: Tensor(v, requires_grad=True, name=k) for k, v in entries.items()},
                segmentation_kind=header.get("segmentation_kind", "canonical"),
                language_id=header.get("language_id", ""),
            )
        except (KeyError, TypeError, ValueError) as err:
            raise CheckpointError(f"malformed checkpoint header: {err}") from None
        expected = model.expected_shapes()
        if set(entries) != set(expected):
            raise CheckpointError(f"checkpoint parameters {sorted(entries)} do not match {sorted(expected)}")
        for name, shape in expected.items():
            if entries[name].shape != shape:
                raise CheckpointError(f"parameter {name!r} has shape {entries[name].shape}, expected {shape}")
        return model

    @classmethod
    def load(cls, path):
        with open(path, "rb") as fh:
            return cls.from_bytes(fh.read())


# -- single-sequence API ----------------------------------------------------------


def _single_batch(inputs):
    return make_batch([C.Encoded(list(inputs), [C.IGNORE] * len(inputs), [None] * len(inputs), [
        (x == C.WORD_BOUNDARY if isinstance(x, (int, np.integer)) else tuple(x) == (C.BOUNDARY_CHAR,)) for x in inputs
    ])])


def embed(inputs, model):
    """(L, embedding_dim) input vectors for one encoded sequence."""
    return model._embed(_single_batch(inputs))


def encode_states(embedded, model, train=False, rng=None):
    """(L, 2*hidden) bi-LSTM states for one sequence of embeddings."""
    L = embedded.shape[0]
    return model._states(embedded, np.ones((L, 1), dtype=bool), train, rng)


def emission_scores(states, model):
    return model._emissions(states)


def softmax_decode(emissions):
    """Per-position argmax; np.argmax already returns the lowest id on ties."""
    e = emissions.data if isinstance(emissions, Tensor) else np.asarray(emissions)
    return [int(i) for i in np.argmax(e, axis=1)]


def _morphemes_of(word):
    if isinstance(word, (C.AnnotatedWord, C.SegmentedWord)):
        return word.morphemes
    return tuple(word)


def _raw_of(word, morphemes):
    raw = getattr(word, "raw_word", None)
    return raw if raw is not None else "".join(m.text for m in morphemes if not m.elided)


def _instance(model, words_morphemes):
    inputs, boundary = C.encode_inputs(words_morphemes, model.vocab, model.feature_config.feature_level)
    n = len(inputs)
    return C.Encoded(inputs, [C.IGNORE] * n, [None] * n, boundary)


def tag_words(model, words, batch_size=64):
    """Tag each word in isolation; ``words`` hold morphemes (SegmentedWord, AnnotatedWord or sequences)."""
    words = list(words)
    if not words:
        raise EmptyInput("nothing to tag")
    morphemes = [_morphemes_of(w) for w in words]
    for w, ms in zip(words, morphemes):
        if not ms:
            raise EmptyInput(f"word {_raw_of(w, ms)!r} has no morphemes")
    with no_grad():
        paths = model.decode([_instance(model, [ms]) for ms in morphemes], batch_size)
    tags = model.vocab.id_to_tag
    return [C.AnnotatedWord(_raw_of(w, ms), tuple((m, tags[t]) for m, t in zip(ms, path)))
            for w, ms, path in zip(words, morphemes, paths)]


def tag_word(model, word):
    return tag_words(model, [word])[0]


def tag_sentences(model, sentences, batch_size=16):
    """Tag whole sentences with inter-word context; returns lists of AnnotatedWord."""
    sentences = [list(s) for s in sentences]
    if not sentences or any(not s for s in sentences):
        raise EmptyInput("nothing to tag")
    morphemes = [[_morphemes_of(w) for w in s] for s in sentences]
    with no_grad():
        paths = model.decode([_instance(model, ms) for ms in morphemes], batch_size)
    tags = model.vocab.id_to_tag
    out = []
    for words, ms, path in zip(sentences, morphemes, paths):
        tagged, pos = [], 0
        for w, wm in zip(words, ms):
            if pos:
                pos += 1  # boundary position
            ids = path[pos : pos + len(wm)]
            pos += len(wm)
            tagged.append(C.AnnotatedWord(_raw_of(w, wm), tuple((m, tags[t]) for m, t in zip(wm, ids))))
        out.append(tagged)
    return out


def tag_sentence(model, sentence):
    return tag_sentences(model, [sentence])[0]


def tag_corpus(model, sentences, context=None):
    """Tag sentences of words with the model's own context unless overridden."""
    context = context or model.context
    if context == "sentence" and model.context == "sentence":
        return tag_sentences(model, sentences)
    flat = [w for s in sentences for w in s]
    tagged = tag_words(model, flat) if flat else []
    out, pos = [], 0
    for s in sentences:
        out.append(tagged[pos : pos + len(s)])
        pos += len(s)
    return out

