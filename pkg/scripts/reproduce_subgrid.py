#!/usr/bin/env python3
"""Tune on a held-out split, then retrain the best configuration with five seeds.

Expects ``DATA_DIR/train.tsv`` and ``DATA_DIR/test.tsv`` in the corpus TSV
format (canonical gold segmentations).  Steps:

1. hold out 10% of the training sentences for validation (seed 0);
2. grid search ``grids/subgrid.cfg`` on that split;
3. retrain the top configuration on the full training file with five seeds,
   for as many epochs as it needed during tuning, and score each on the test file.

Results go to OUT_DIR; a summary dict is printed and returned by ``run``.
"""

import argparse
import json
import logging
from dataclasses import replace
from pathlib import Path

from morphtag.config import expand_grid, read_config_file
from morphtag.corpus import load_corpus, split_validation
from morphtag.training import grid_search, run_seeds

GRID = Path(__file__).resolve().parent / "grids" / "subgrid.cfg"


def run(data_dir, out_dir, jobs=1, grid=GRID, seeds=(0, 1, 2, 3, 4)):
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    train_full = load_corpus(Path(data_dir) / "train.tsv", "canonical")
    test = load_corpus(Path(data_dir) / "test.tsv", "canonical")
    train, valid = split_validation(train_full, 0.10, seed=0)

    configs = expand_grid(read_config_file(grid))
    for cfg in configs:
        cfg.check_grid_ranges()
    ranked = grid_search(configs, train, valid, out_dir=out_dir / "sweep", jobs=jobs)
    best = next(r for r in ranked if r.status == "ok")
    config = next(c for c in configs if c.config_hash() == best.config_hash)
    # no validation set when retraining on everything: stop where tuning peaked
    final = replace(config, max_epochs=best.best_epoch)

    agg = run_seeds(final, train_full, test, list(seeds))
    summary = {
        "n_configs": len(configs),
        "best_config_hash": best.config_hash,
        "best_epoch": best.best_epoch,
        "valid_macro_f1": best.best_macro_f1,
        **agg.to_dict(),
    }
    (out_dir / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    return summary


def main():
    parser = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("data_dir", type=Path)
    parser.add_argument("out_dir", type=Path)
    parser.add_argument("--jobs", type=int, default=1)
    parser.add_argument("--grid", type=Path, default=GRID)
    args = parser.parse_args()
    logging.basicConfig(level=logging.INFO)
    summary = run(args.data_dir, args.out_dir, args.jobs, args.grid)
    print(json.dumps(summary, indent=2, sort_keys=True))


if __name__ == "__main__":
    main()
