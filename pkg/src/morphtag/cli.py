"""Command-line interface.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.
``MORPHTAG_OUTPUT_DIR`` sets the default output directory for ``gridsearch``
and ``seeds``.
"""

import argparse
import datetime
import hashlib
import json
import logging
import os
import sys

from . import __version__
from .config import ConfigError, config_from_dict, expand_grid, read_config_file
from .corpus import load_corpus, load_segmented, merge_corpora, split_validation, write_corpus
from .errors import DataError, KindMismatch, NumericError
from .evaluation import evaluate_sentences
from .tagger import TaggerModel, tag_corpus
from .training import SeedRunError, evaluate_model, grid_search, run_seeds, train

log = logging.getLogger("morphtag")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3
OUTPUT_DIR_ENV = "MORPHTAG_OUTPUT_DIR"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _digest(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _now():
    return datetime.datetime.now(datetime.timezone.utc).isoformat(timespec="seconds")


def write_manifest(path, argv, inputs, started, config=None, seeds=None, extra=None):
    manifest = {
        "command": list(argv),
        "toolkit_version": __version__,
        "config_hash": config.config_hash() if config is not None else None,
        "config": config.to_dict() if config is not None else None,
        "inputs": {str(p): _digest(p) for p in inputs if p and os.path.exists(p)},
        "seeds": seeds,
        "started": started,
        "finished": _now(),
    }
    if extra:
        manifest.update(extra)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _check_writable(paths, force):
    for p in paths:
        if p and p != "-" and os.path.exists(p) and not force:
            raise UsageError(f"{p} exists; pass --force to overwrite")


def _load_train_config(args):
    try:
        values = read_config_file(args.config)
    except OSError as err:
        raise UsageError(f"cannot read config: {err}") from None
    return config_from_dict(values, seed=getattr(args, "seed", None))


# -- commands -------------------------------------------------------------------


def cmd_split(args, argv):
    if not 0.0 < args.ratio < 1.0:
        raise UsageError(f"--ratio must be strictly between 0 and 1, got {args.ratio}")
    _check_writable([args.out_train, args.out_valid], args.force)
    corpus = load_corpus(args.input, args.kind)
    kept, held = split_validation(corpus, args.ratio, args.seed)
    write_corpus(args.out_train, kept)
    write_corpus(args.out_valid, held)
    print(f"{len(kept)} training sentences -> {args.out_train}")
    print(f"{len(held)} validation sentences -> {args.out_valid}")


def cmd_train(args, argv):
    started = _now()
    config = _load_train_config(args)
    if args.check_grid:
        config.check_grid_ranges()
    _check_writable([args.out_model], args.force)
    train_corpus = load_corpus(args.train, args.kind)
    valid_corpus = load_corpus(args.valid, args.kind) if args.valid else None

    def progress(epoch, result):
        msg = f"epoch {epoch}: loss {result.train_losses[-1]:.4f}"
        if result.valid_macro_f1:
            msg += f"  valid macro {result.valid_macro_f1[-1]:.4f} micro {result.valid_micro_f1[-1]:.4f}"
        log.info(msg)

    model, result = train(config, train_corpus, valid_corpus, progress=progress)
    model.save(args.out_model)
    result.save(args.out_model + ".trial.json")
    write_manifest(args.out_model + ".manifest.json", argv, [args.config, args.train, args.valid],
                   started, config, [config.seed])
    print(f"best epoch {result.best_epoch} of {result.epochs_run}; model -> {args.out_model}")


def cmd_gridsearch(args, argv):
    started = _now()
    try:
        values = read_config_file(args.grid)
    except OSError as err:
        raise UsageError(f"cannot read grid: {err}") from None
    configs = expand_grid(values, seed=args.seed)
    if args.check_grid:
        for cfg in configs:
            cfg.check_grid_ranges()
    if args.jobs < 1:
        raise UsageError("--jobs must be at least 1")
    out_dir = args.out_dir or os.environ.get(OUTPUT_DIR_ENV) or "runs"
    train_corpus = load_corpus(args.train, args.kind)
    valid_corpus = load_corpus(args.valid, args.kind)
    ranked = grid_search(configs, train_corpus, valid_corpus, out_dir=out_dir, jobs=args.jobs)
    write_manifest(os.path.join(out_dir, "manifest.json"), argv, [args.grid, args.train, args.valid], started,
                   extra={"trials": [r.config_hash for r in ranked]})
    for rank, r in enumerate(ranked, start=1):
        if r.status == "ok":
            print(f"{rank}\t{r.config_hash}\tmacro {r.best_macro_f1:.4f}\tmicro {r.best_micro_f1:.4f}\tepoch {r.best_epoch}")
        else:
            print(f"{rank}\t{r.config_hash}\tFAILED\t{r.error}")
    failed = sum(r.status != "ok" for r in ranked)
    if failed:
        log.warning("%d of %d trials failed", failed, len(ranked))


def _resolve_context(model, requested):
    if requested == "sentence" and model.context == "word":
        log.warning("model was trained in word context; tagging words in isolation")
        return "word"
    return requested or model.context


def cmd_tag(args, argv):
    _check_writable([args.out], args.force)
    model = TaggerModel.load(args.model)
    sentences = load_segmented(args.input)
    context = _resolve_context(model, args.context)
    tagged = tag_corpus(model, sentences, context) if sentences else []
    if args.out == "-":
        write_corpus(sys.stdout, tagged, segmentation_kind=model.segmentation_kind)
    else:
        write_corpus(args.out, tagged, segmentation_kind=model.segmentation_kind)


def _check_kinds(expected, actual, allow, what):
    if expected != actual and not allow:
        raise KindMismatch(f"{what}: {expected} vs {actual} segmentation; pass --allow-kind-mismatch to compare anyway")


def cmd_evaluate(args, argv):
    if args.pred and args.model:
        raise UsageError("give either --pred or --model/--test, not both")
    if args.pred:
        if not args.gold:
            raise UsageError("--pred needs --gold")
        gold = load_corpus(args.gold)
        pred = load_corpus(args.pred)
        _check_kinds(gold.segmentation_kind, pred.segmentation_kind, args.allow_kind_mismatch, "gold and predictions")
        report = evaluate_sentences(gold.sentences, pred.sentences)
    elif args.model:
        test_path = args.test or args.gold
        if not test_path:
            raise UsageError("--model needs --test")
        model = TaggerModel.load(args.model)
        test = load_corpus(test_path)
        _check_kinds(model.segmentation_kind, test.segmentation_kind, args.allow_kind_mismatch, "model and test corpus")
        report = evaluate_model(model, test, _resolve_context(model, args.context))
    else:
        raise UsageError("give --gold with --pred, or --model with --test")
    sys.stdout.write(report.to_text())
    if args.report:
        with open(args.report, "w", encoding="utf-8") as fh:
            fh.write(report.to_json() + "\n")


def cmd_seeds(args, argv):
    started = _now()
    config = _load_train_config(args)
    try:
        if "," in args.seeds:
            seeds = [int(s) for s in args.seeds.split(",") if s.strip()]
        else:
            seeds = [config.seed + i for i in range(int(args.seeds))]
    except ValueError:
        raise UsageError(f"--seeds takes a count or a comma-separated list, got {args.seeds!r}") from None
    if not seeds:
        raise UsageError("no seeds given")
    out_dir = args.out_dir or os.environ.get(OUTPUT_DIR_ENV) or "runs"
    os.makedirs(out_dir, exist_ok=True)
    train_parts = [load_corpus(p, args.kind) for p in args.train_full]
    train_full = merge_corpora(*train_parts)
    test = load_corpus(args.test, args.kind)

    def save_seed(seed, model, trial, report):
        stem = os.path.join(out_dir, f"seed-{seed}")
        model.save(stem + ".model")
        trial.save(stem + ".trial.json")
        with open(stem + ".report.json", "w", encoding="utf-8") as fh:
            fh.write(report.to_json() + "\n")
        log.info("seed %d: macro %.4f micro %.4f", seed, report.macro_f1, report.micro_f1)

    def write_aggregate(agg, status):
        with open(os.path.join(out_dir, "aggregate.json"), "w", encoding="utf-8") as fh:
            json.dump({**agg.to_dict(), "status": status}, fh, indent=2, sort_keys=True)
            fh.write("\n")
        write_manifest(os.path.join(out_dir, "manifest.json"), argv, [args.config, *args.train_full, args.test],
                       started, config, seeds)

    try:
        agg = run_seeds(config, train_full, test, seeds, on_seed=save_seed)
    except SeedRunError as err:
        write_aggregate(err.partial, "failed")
        raise
    write_aggregate(agg, "ok")
    print(f"macro F1 {agg.macro_f1_mean:.4f} +/- {agg.macro_f1_std:.4f}")
    print(f"micro F1 {agg.micro_f1_mean:.4f} +/- {agg.micro_f1_std:.4f}")


# -- parser -----------------------------------------------------------------------


def build_parser():
    parser = _Parser(prog="morphtag", description="Morpheme taggers for agglutinative languages.")
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def kind(p):
        p.add_argument("--kind", choices=("canonical", "surface"),
                       help="segmentation kind of the corpora (default: from file header, else canonical)")

    p = sub.add_parser("split", help="hold out a validation set")
    p.add_argument("--input", required=True)
    p.add_argument("--ratio", type=float, default=0.10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-train", required=True)
    p.add_argument("--out-valid", required=True)
    p.add_argument("--force", action="store_true")
    kind(p)
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("train", help="train one model")
    p.add_argument("--config", required=True)
    p.add_argument("--train", required=True)
    p.add_argument("--valid")
    p.add_argument("--out-model", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--check-grid", action="store_true", help="reject hyperparameters outside the tuning grid")
    p.add_argument("--force", action="store_true")
    kind(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("gridsearch", help="train every configuration of a grid")
    p.add_argument("--grid", required=True)
    p.add_argument("--train", required=True)
    p.add_argument("--valid", required=True)
    p.add_argument("--out-dir")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--seed", type=int)
    p.add_argument("--check-grid", action="store_true")
    kind(p)
    p.set_defaults(func=cmd_gridsearch)

    p = sub.add_parser("tag", help="tag segmented text")
    p.add_argument("--model", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--context", choices=("word", "sentence"))
    p.add_argument("--out", default="-")
    p.add_argument("--force", action="store_true")
    p.set_defaults(func=cmd_tag)

    p = sub.add_parser("evaluate", help="score predictions against gold tags")
    p.add_argument("--gold")
    p.add_argument("--pred")
    p.add_argument("--model")
    p.add_argument("--test")
    p.add_argument("--context", choices=("word", "sentence"))
    p.add_argument("--report", help="write the JSON report here")
    p.add_argument("--allow-kind-mismatch", action="store_true")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("seeds", help="retrain with several seeds and average test scores")
    p.add_argument("--config", required=True)
    p.add_argument("--train-full", required=True, nargs="+", help="training corpus file(s), merged")
    p.add_argument("--test", required=True)
    p.add_argument("--seeds", default="5", help="a count (seeds from the config seed upwards) or a comma list")
    p.add_argument("--out-dir")
    kind(p)
    p.set_defaults(func=cmd_seeds)
    return parser


def main(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args, ["morphtag", *argv])
    except (UsageError, ConfigError) as err:
        print(f"morphtag: error: {err}", file=sys.stderr)
        return EXIT_USAGE
    except SeedRunError as err:
        print(f"morphtag: {err}", file=sys.stderr)
        return EXIT_NUMERIC if isinstance(err.__cause__, NumericError) else EXIT_DATA
    except NumericError as err:
        print(f"morphtag: numeric failure: {err}", file=sys.stderr)
        return EXIT_NUMERIC
    except (DataError, OSError, UnicodeDecodeError) as err:
        print(f"morphtag: data error: {err}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
