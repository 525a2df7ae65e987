"""Training loop, grid search and multi-seed runs."""

import json
import logging
import math
import os
import statistics
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .corpus import build_vocabulary
from .errors import NonFiniteGradient
from .evaluation import evaluate_sentences
from .numerics import Tape, adam_step
from .tagger import TaggerModel, tag_corpus

log = logging.getLogger(__name__)


def loss(model, instances, train=False, rng=None):
    return model.loss(instances, train=train, rng=rng)


def evaluate_model(model, corpus, context=None):
    """Tag the corpus' own (gold) segmentations and score them against its tags."""
    inputs = [list(s.words) for s in corpus.sentences]
    predicted = tag_corpus(model, inputs, context)
    return evaluate_sentences([s.words for s in corpus.sentences], predicted)


@dataclass
class TrialResult:
    config: dict
    config_hash: str
    train_losses: list = field(default_factory=list)
    valid_macro_f1: list = field(default_factory=list)
    valid_micro_f1: list = field(default_factory=list)
    best_epoch: int = 0
    epochs_run: int = 0
    seconds: float = 0.0
    status: str = "ok"
    error: Optional[str] = None
    test_report: Optional[dict] = None

    @property
    def best_macro_f1(self):
        if not self.valid_macro_f1 or self.best_epoch < 1:
            return -math.inf
        return self.valid_macro_f1[self.best_epoch - 1]

    @property
    def best_micro_f1(self):
        if not self.valid_micro_f1 or self.best_epoch < 1:
            return -math.inf
        return self.valid_micro_f1[self.best_epoch - 1]

    def to_dict(self):
        return {
            "config": self.config,
            "config_hash": self.config_hash,
            "train_losses": self.train_losses,
            "valid_macro_f1": self.valid_macro_f1,
            "valid_micro_f1": self.valid_micro_f1,
            "best_epoch": self.best_epoch,
            "epochs_run": self.epochs_run,
            "seconds": self.seconds,
            "status": self.status,
            "error": self.error,
            "test_report": self.test_report,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(**d)

    def comparable(self):
        """Everything except wall-clock time."""
        d = self.to_dict()
        d.pop("seconds")
        return d

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, path):
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def _rngs(seed):
    init, shuffle, drop = np.random.SeedSequence(seed).spawn(3)
    return np.random.default_rng(init), np.random.default_rng(shuffle), np.random.default_rng(drop)


def train(config, train_corpus, valid_corpus=None, progress=None):
    """Train one model; returns (model, TrialResult).

    With a validation corpus the model selected is the one from the epoch with
    the best validation macro F1, and training stops after ``patience`` epochs
    without improvement.  Without one, all ``max_epochs`` epochs run and the
    final parameters are kept.
    """
    if valid_corpus is not None and valid_corpus.segmentation_kind != train_corpus.segmentation_kind:
        raise ValueError("training and validation corpora have different segmentation kinds")
    started = time.perf_counter()
    init_rng, shuffle_rng, dropout_rng = _rngs(config.seed)
    vocab = build_vocabulary(train_corpus, config.min_count, config.lowercase)
    model = TaggerModel.initialise(
        vocab, config.feature_config, config.hidden_size, config.model_kind, config.context,
        config.dropout_p, rng=init_rng, segmentation_kind=train_corpus.segmentation_kind,
        language_id=train_corpus.language_id,
    )
    instances = model.encode_corpus(train_corpus, train=True)
    result = TrialResult(config.to_dict(), config.config_hash())
    params = model.params
    arrays = {k: p.data for k, p in params.items()}
    state = None
    best, best_snapshot, since_best = -math.inf, None, 0

    for epoch in range(1, config.max_epochs + 1):
        order = shuffle_rng.permutation(len(instances))
        batch_losses = []
        for step, start in enumerate(range(0, len(order), config.batch_size), start=1):
            batch = [instances[i] for i in order[start : start + config.batch_size]]
            for p in params.values():
                p.grad = None
            with Tape() as tape:
                value = model.loss(batch, train=True, rng=dropout_rng)
            tape.backward(value, params.values())
            try:
                state = adam_step(arrays, {k: p.grad for k, p in params.items()}, config.lr,
                                  config.weight_decay, config.clip_norm, state)
            except NonFiniteGradient as err:
                raise NonFiniteGradient(err.name, f"{err} at epoch {epoch}, step {step}") from None
            batch_losses.append(value.item())
        result.train_losses.append(float(np.mean(batch_losses)))
        result.epochs_run = epoch

        if valid_corpus is None:
            result.best_epoch = epoch
            if progress:
                progress(epoch, result)
            continue
        report = evaluate_model(model, valid_corpus)
        result.valid_macro_f1.append(report.macro_f1)
        result.valid_micro_f1.append(report.micro_f1)
        if report.macro_f1 > best:
            best, best_snapshot, since_best = report.macro_f1, model.snapshot(), 0
            result.best_epoch = epoch
        else:
            since_best += 1
        if progress:
            progress(epoch, result)
        if since_best >= config.patience:
            break

    if best_snapshot is not None:
        model.restore(best_snapshot)
    result.seconds = time.perf_counter() - started
    return model, result


def _run_trial(config, train_corpus, valid_corpus):
    started = time.perf_counter()
    try:
        _, result = train(config, train_corpus, valid_corpus)
    except Exception as err:  # a failed trial must not abort the sweep
        log.warning("trial %s failed: %s", config.config_hash(), err)
        return TrialResult(config.to_dict(), config.config_hash(), status="failed",
                           error=f"{type(err).__name__}: {err}", seconds=time.perf_counter() - started)
    return result


def trial_path(out_dir, config):
    return os.path.join(out_dir, f"trial-{config.config_hash()}.json")


def rank_trials(results):
    """Validation macro F1 descending, then micro F1, then original order."""
    indexed = list(enumerate(results))
    indexed.sort(key=lambda item: (item[1].status != "ok", -item[1].best_macro_f1, -item[1].best_micro_f1, item[0]))
    return [r for _, r in indexed]


def grid_search(configs, train_corpus, valid_corpus, out_dir=None, jobs=1):
    """Train every configuration once and rank the results.

    With ``out_dir`` each finished trial is written to
    ``trial-<config hash>.json`` and trials already completed there are
    loaded instead of retrained.
    """
    configs = list(configs)
    results = [None] * len(configs)
    pending = []
    for i, cfg in enumerate(configs):
        path = trial_path(out_dir, cfg) if out_dir else None
        if path and os.path.exists(path):
            done = TrialResult.load(path)
            if done.status == "ok":
                results[i] = done
                continue
        pending.append(i)

    def finish(i, result):
        results[i] = result
        if out_dir:
            result.save(trial_path(out_dir, configs[i]))

    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
    if jobs <= 1 or len(pending) <= 1:
        for i in pending:
            finish(i, _run_trial(configs[i], train_corpus, valid_corpus))
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = {i: pool.submit(_run_trial, configs[i], train_corpus, valid_corpus) for i in pending}
            for i in pending:
                finish(i, futures[i].result())
    ranked = rank_trials(results)
    if out_dir:
        write_summary(out_dir, ranked)
    return ranked


def write_summary(out_dir, ranked):
    rows = []
    for rank, r in enumerate(ranked, start=1):
        rows.append({
            "rank": rank,
            "config_hash": r.config_hash,
            "status": r.status,
            "best_epoch": r.best_epoch,
            "valid_macro_f1": r.best_macro_f1 if r.status == "ok" else None,
            "valid_micro_f1": r.best_micro_f1 if r.status == "ok" else None,
            "config": r.config,
        })
    with open(os.path.join(out_dir, "summary.json"), "w", encoding="utf-8") as fh:
        json.dump(rows, fh, indent=2, sort_keys=True)
        fh.write("\n")
    with open(os.path.join(out_dir, "summary.tsv"), "w", encoding="utf-8") as fh:
        fh.write("rank\tconfig_hash\tstatus\tbest_epoch\tvalid_macro_f1\tvalid_micro_f1\n")
        for row in rows:
            macro = "" if row["valid_macro_f1"] is None else f"{row['valid_macro_f1']:.6f}"
            micro = "" if row["valid_micro_f1"] is None else f"{row['valid_micro_f1']:.6f}"
            fh.write(f"{row['rank']}\t{row['config_hash']}\t{row['status']}\t{row['best_epoch']}\t{macro}\t{micro}\n")


@dataclass
class SeedsReport:
    seeds: list
    reports: list
    trials: list
    macro_f1_mean: float = 0.0
    macro_f1_std: float = 0.0
    micro_f1_mean: float = 0.0
    micro_f1_std: float = 0.0

    def to_dict(self):
        return {
            "seeds": self.seeds,
            "macro_f1_mean": self.macro_f1_mean,
            "macro_f1_std": self.macro_f1_std,
            "micro_f1_mean": self.micro_f1_mean,
            "micro_f1_std": self.micro_f1_std,
            "per_seed": [
                {"seed": s, "macro_f1": r.macro_f1, "micro_f1": r.micro_f1}
                for s, r in zip(self.seeds, self.reports)
            ],
        }


class SeedRunError(RuntimeError):
    def __init__(self, message, partial):
        super().__init__(message)
        self.partial = partial


def _mean_std(values):
    mean = statistics.fmean(values)
    std = statistics.stdev(values) if len(values) > 1 else 0.0
    return mean, std


def aggregate(seeds, reports, trials):
    macro = [r.macro_f1 for r in reports]
    micro = [r.micro_f1 for r in reports]
    out = SeedsReport(list(seeds), list(reports), list(trials))
    if reports:
        out.macro_f1_mean, out.macro_f1_std = _mean_std(macro)
        out.micro_f1_mean, out.micro_f1_std = _mean_std(micro)
    return out


def run_seeds(config, train_full, test, seeds, valid=None, on_seed=None):
    """Retrain ``config`` once per seed on ``train_full`` and score each model on ``test``.

    ``on_seed(seed, model, trial, report)`` is called after each seed, which
    lets callers persist per-seed artifacts.  A failing seed raises
    SeedRunError carrying the aggregate of the seeds that finished.
    """
    reports, trials, done = [], [], []
    for seed in seeds:
        cfg = replace(config, seed=seed)
        try:
            model, trial = train(cfg, train_full, valid)
            report = evaluate_model(model, test)
        except Exception as err:
            partial = aggregate(done, reports, trials)
            raise SeedRunError(f"seed {seed} failed: {type(err).__name__}: {err}", partial) from err
        trial.test_report = report.to_dict()
        reports.append(report)
        trials.append(trial)
        done.append(seed)
        if on_seed:
            on_seed(seed, model, trial, report)
    return aggregate(done, reports, trials)
