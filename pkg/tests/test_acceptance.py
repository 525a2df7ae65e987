"""Acceptance criteria.

Each test records one PASS/FAIL line, printed together at the end of the
pytest run, and then asserts the same condition.
"""

import importlib.util
import json
import math
import os
import time
from pathlib import Path

import numpy as np
import pytest

from morphtag import corpus as C
from morphtag import synthetic
from morphtag.cli import main
from morphtag.config import TrainConfig
from morphtag.crf import crf_log_partition, viterbi_decode
from morphtag.evaluation import evaluate_files, evaluate_sentences
from morphtag.tagger import TaggerModel, tag_corpus
from morphtag.training import TrialResult, evaluate_model, train
from helpers import model_gradient_error, randomise, record, small_model
from oracles import brute_best, enumerate_paths, path_score

ROOT = Path(__file__).resolve().parent.parent


# -- CRF oracle and normalisation -------------------------------------------------------


@pytest.fixture(scope="module")
def crf_instances():
    rng = np.random.default_rng(2024)
    out = []
    for _ in range(500):
        L, T = int(rng.integers(1, 6)), int(rng.integers(1, 7))
        out.append((rng.normal(0, 2, (L, T)), rng.normal(0, 2, (T, T)), rng.normal(0, 2, T), rng.normal(0, 2, T)))
    return out


def test_crf_oracle_equivalence(crf_instances):
    started = time.perf_counter()
    worst_z, worst_score, path_mismatches = 0.0, 0.0, 0
    for e, trans, start, end in crf_instances:
        paths = enumerate_paths(e, trans, start, end)
        scores = [s for _, s in paths]
        m = max(scores)
        brute_z = m + math.log(math.fsum(math.exp(s - m) for s in scores))
        worst_z = max(worst_z, abs(crf_log_partition(e, (trans, start, end)).item() - brute_z))
        path, score = viterbi_decode(e, (trans, start, end))
        best_path, best_score = brute_best(e, trans, start, end)
        worst_score = max(worst_score, abs(score - best_score), abs(path_score(e, trans, start, end, path) - best_score))
        path_mismatches += path != best_path
    seconds = time.perf_counter() - started
    ok = worst_z <= 1e-8 and worst_score <= 1e-8 and path_mismatches == 0 and seconds < 30
    record("CRF oracle equivalence", ok,
           f"500 instances, max |logZ err| {worst_z:.2e}, max score err {worst_score:.2e}, "
           f"{path_mismatches} path mismatches, {seconds:.1f}s")
    assert ok


def test_crf_normalisation(crf_instances):
    worst = 0.0
    for e, trans, start, end in crf_instances:
        z = crf_log_partition(e, (trans, start, end)).item()
        total = math.fsum(math.exp(s - z) for _, s in enumerate_paths(e, trans, start, end))
        worst = max(worst, abs(total - 1.0))
    ok = worst <= 1e-8
    record("Normalisation", ok, f"max |sum_paths p - 1| = {worst:.2e} over 500 instances")
    assert ok


# -- gradient checks ------------------------------------------------------------------------


def random_labelled_corpus(rng, n_tags, context):
    """Random short sentences; sentence sequences stay within 6 positions."""
    morphs = ["ka", "ba", "zi", "lo", "mu", "te"]
    tags = [f"T{i}" for i in range(n_tags)]
    sentences = []
    for _ in range(3):
        lengths = [int(rng.integers(1, 4)), int(rng.integers(1, 3))] if context == "sentence" else [int(rng.integers(1, 7))]
        words = []
        for n in lengths:
            units = tuple((C.Morpheme(morphs[int(rng.integers(len(morphs)))]), tags[int(rng.integers(n_tags))])
                          for _ in range(n))
            words.append(C.AnnotatedWord("".join(m.text for m, _ in units), units))
        sentences.append(C.Sentence(tuple(words)))
    # every tag must occur so the vocabulary has exactly n_tags entries
    extra = tuple((C.Morpheme("ka"), t) for t in tags[:6])
    sentences.append(C.Sentence((C.AnnotatedWord("x", extra),)))
    if n_tags > 6:
        sentences.append(C.Sentence((C.AnnotatedWord("y", tuple((C.Morpheme("ba"), t) for t in tags[6:])),)))
    return C.Corpus(tuple(sentences))


def test_gradient_checks():
    started = time.perf_counter()
    rng = np.random.default_rng(99)
    worst = {"bilstm": 0.0, "bilstm_crf": 0.0}
    runs = 0
    for kind in worst:
        for context in ("word", "sentence"):
            for level in ("morpheme", "char_sum"):
                n_tags = int(rng.integers(2, 8))  # sentence context adds the boundary column: <= 8 outputs
                hidden = int(rng.choice([4, 8, 16]))
                corpus = random_labelled_corpus(rng, n_tags, context)
                model = small_model(corpus, kind, context, level, hidden=hidden, dim=4, seed=int(rng.integers(1000)))
                randomise(model, seed=int(rng.integers(1000)))
                instances = [x for x in model.encode_corpus(corpus) if len(x.inputs) <= 6][:3]
                assert model.n_outputs <= 8 and all(len(x.inputs) <= 6 for x in instances)
                worst[kind] = max(worst[kind], model_gradient_error(model, instances))
                runs += 1
    seconds = time.perf_counter() - started
    ok = max(worst.values()) < 1e-4 and seconds < 120
    record("Gradient checks", ok,
           f"{runs} random models, max rel err cross-entropy {worst['bilstm']:.2e}, "
           f"CRF NLL {worst['bilstm_crf']:.2e} (eps 1e-5), {seconds:.1f}s")
    assert ok


# -- synthetic convergence -------------------------------------------------------------------


def context_subset_f1(model, synth):
    corpus = synth.corpus
    predicted = tag_corpus(model, [list(s.words) for s in corpus.sentences])
    gold = [[corpus.sentences[s].words[w]] for s, w in synth.context_words]
    pred = [[predicted[s][w]] for s, w in synth.context_words]
    return evaluate_sentences(gold, pred).micro_f1


def smoothed_non_increasing(losses, start=5, window=3, slack=1e-3):
    smooth = np.convolve(losses, np.ones(window) / window, mode="valid")
    tail = smooth[start:]
    return bool(np.all(np.diff(tail) <= slack * max(1.0, abs(tail[0])))) if len(tail) > 1 else True


def test_synthetic_convergence():
    started = time.perf_counter()
    synth = synthetic.generate(n_words=200, context_fraction=0.10, seed=0)
    plain = synthetic.generate(n_words=200, context_fraction=0.0, seed=0)
    base = dict(lr=0.01, hidden_size=32, embedding_dim=16, batch_size=8, max_epochs=50, min_count=1)
    train_f1, ctx_f1, monotone = {}, {}, {}
    for kind in ("bilstm", "bilstm_crf"):
        for context in ("word", "sentence"):
            model, result = train(TrainConfig(model_kind=kind, context=context, **base), synth.corpus)
            train_f1[kind, context] = evaluate_model(model, synth.corpus).micro_f1
            ctx_f1[kind, context] = context_subset_f1(model, synth)
            if context == "sentence":
                monotone[kind, "sentence"] = smoothed_non_increasing(result.train_losses)
        # word models cannot see the cue for the ambiguous tag, so their loss on
        # the corpus above bottoms out at a noisy floor; check them where the
        # input determines every tag
        model, result = train(TrainConfig(model_kind=kind, context="word", **base), plain.corpus)
        train_f1[kind, "word/no-context-tags"] = evaluate_model(model, plain.corpus).micro_f1
        monotone[kind, "word/no-context-tags"] = smoothed_non_increasing(result.train_losses)
    seconds = time.perf_counter() - started

    converged = all(train_f1[k, "sentence"] >= 0.99 for k in ("bilstm", "bilstm_crf"))
    word_ok = all(train_f1[k, "word/no-context-tags"] >= 0.99 for k in ("bilstm", "bilstm_crf"))
    sentence_wins = all(ctx_f1[k, "sentence"] > ctx_f1[k, "word"] for k in ("bilstm", "bilstm_crf"))
    ok = converged and word_ok and sentence_wins and all(monotone.values()) and seconds < 300
    detail = "; ".join(f"{k}/{c} train {v:.4f}" for (k, c), v in train_f1.items())
    detail += "; context subset " + ", ".join(f"{k}/{c} {v:.3f}" for (k, c), v in ctx_f1.items())
    detail += f"; {seconds:.0f}s"
    detail += "; loss non-increasing after epoch 5 " + ", ".join(
        f"{k}/{c} {'yes' if v else 'no'}" for (k, c), v in monotone.items())
    record("Synthetic-corpus convergence", ok, detail)
    assert ok


# -- metric oracle ------------------------------------------------------------------------------


def test_metric_oracle(data_dir):
    checks = []
    r = evaluate_files(data_dir / "gold.tsv", data_dir / "pred.tsv")
    expected = (7 / 8, 7 / 10, 7 / 9, 13 / 21)
    checks.append(max(abs(a - b) for a, b in zip((r.micro_precision, r.micro_recall, r.micro_f1, r.macro_f1), expected)))
    m = evaluate_files(data_dir / "mismatch_gold.tsv", data_dir / "mismatch_pred.tsv")
    checks.append(max(abs(m.micro_precision - 1.0), abs(m.micro_recall - 0.5), abs(m.micro_f1 - 2 / 3)))
    gold = C.load_corpus(data_dir / "accuracy_gold.tsv").words
    pred = C.load_corpus(data_dir / "accuracy_pred.tsv").words
    acc = sum(g == p for gw, pw in zip(gold, pred) for g, p in zip(gw.tags, pw.tags)) / sum(len(w.tags) for w in gold)
    a = evaluate_files(data_dir / "accuracy_gold.tsv", data_dir / "accuracy_pred.tsv")
    checks.append(abs(a.micro_f1 - acc))
    worst = max(checks)
    ok = worst <= 1e-12
    record("Metric oracle", ok,
           f"hand-scored fixture, 2-vs-4 mismatch (P {m.micro_precision}, R {m.micro_recall}, F {m.micro_f1:.6f}), "
           f"accuracy {acc:.2f} = micro F1; max deviation {worst:.1e}")
    assert ok


# -- determinism and persistence ------------------------------------------------------------------


CONFIG = """\
lr = 0.02
hidden_size = 8
embedding_dim = 8
model_kind = bilstm_crf
context = sentence
dropout_p = 0.1
max_epochs = 4
patience = 2
batch_size = 4
min_count = 1
"""


def test_determinism_and_persistence(tmp_path):
    train_c = synthetic.generate(n_words=60, seed=11).corpus
    valid_c = synthetic.generate(n_words=30, seed=12).corpus
    tr, va = tmp_path / "train.tsv", tmp_path / "valid.tsv"
    C.write_corpus(tr, train_c)
    C.write_corpus(va, valid_c)
    cfg = tmp_path / "m.cfg"
    cfg.write_text(CONFIG)

    blobs = []
    for name in ("a", "b"):
        out = tmp_path / f"{name}.ckpt"
        assert main(["train", "--config", str(cfg), "--train", str(tr), "--valid", str(va), "--out-model", str(out)]) == 0
        blobs.append(out.read_bytes())
    identical = blobs[0] == blobs[1]

    config = TrainConfig(**{**dict(lr=0.02, hidden_size=8, embedding_dim=8, model_kind="bilstm_crf",
                                   context="sentence", dropout_p=0.1, max_epochs=4, patience=2,
                                   batch_size=4, min_count=1)})
    model, _ = train(config, C.load_corpus(tr), C.load_corpus(va))
    in_memory = evaluate_model(model, valid_c)
    reloaded = evaluate_model(TaggerModel.from_bytes(model.to_bytes()), valid_c)
    from_disk = evaluate_model(TaggerModel.load(tmp_path / "a.ckpt"), valid_c)
    persistence = in_memory == reloaded == from_disk and model.to_bytes() == blobs[0]

    grid = tmp_path / "grid.cfg"
    grid.write_text(CONFIG.replace("lr = 0.02", "lr = [0.02, 0.005]").replace("hidden_size = 8", "hidden_size = [4, 8]"))
    results = {}
    for jobs in (1, 4):
        out_dir = tmp_path / f"sweep{jobs}"
        assert main(["gridsearch", "--grid", str(grid), "--train", str(tr), "--valid", str(va),
                     "--out-dir", str(out_dir), "--jobs", str(jobs)]) == 0
        results[jobs] = {p.name: TrialResult.load(p).comparable() for p in sorted(out_dir.glob("trial-*.json"))}
    parallel_same = len(results[1]) == 4 and results[1] == results[4]

    ok = identical and persistence and parallel_same
    record("Determinism & persistence", ok,
           f"bit-identical checkpoints {identical}; save/load evaluation equal {persistence}; "
           f"gridsearch --jobs 1 vs 4 identical over {len(results[1])} trials {parallel_same}")
    assert ok


# -- round-trip fuzz -------------------------------------------------------------------------------


def test_roundtrip_fuzz():
    rng = np.random.default_rng(7)
    alphabet = list("abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789'_.!?ŋɓçéáñʼ")
    tag_alphabet = alphabet + list("()-")
    failures, n = 0, 100_000
    for _ in range(n):
        units = []
        for _ in range(int(rng.integers(1, 9))):
            text = "".join(alphabet[i] for i in rng.integers(len(alphabet), size=int(rng.integers(1, 8))))
            tag = "".join(tag_alphabet[i] for i in rng.integers(len(tag_alphabet), size=int(rng.integers(1, 10))))
            units.append(f"({text})[{tag}]" if rng.random() < 0.15 else f"{text}[{tag}]")
        s = "-".join(units)
        try:
            if C.format_analysis(C.parse_analysis(s)) != s:
                failures += 1
        except Exception:
            failures += 1
    ok = failures == 0
    record("Round-trip", ok, f"{n} generated analyses, {failures} failures")
    assert ok


# -- optional: real corpus --------------------------------------------------------------------------


DATA_ENV = "MORPHTAG_ZULU_DIR"


@pytest.mark.skipif(not os.environ.get(DATA_ENV), reason=f"set {DATA_ENV} to a directory with train.tsv and test.tsv")
def test_optional_corpus_reproduction(tmp_path):
    spec = importlib.util.spec_from_file_location("reproduce", ROOT / "scripts" / "reproduce_subgrid.py")
    module = importlib.util.module_from_spec(spec)
    spec.loader.exec_module(module)
    summary = module.run(Path(os.environ[DATA_ENV]), tmp_path / "run", jobs=int(os.environ.get("MORPHTAG_JOBS", "1")))
    ok = summary["n_configs"] >= 8 and summary["micro_f1_mean"] >= 0.85 and summary["macro_f1_mean"] >= 0.55
    record("Corpus reproduction (optional)", ok, json.dumps(summary, sort_keys=True))
    assert ok
