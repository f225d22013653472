"""Compare the four training methods on small synthetic training subsets.

Generates s800-like synthetic splits, runs the method x size x seed grid and
prints the per-cell mean test F1 with 95% t half-widths.

    python scripts/low_resource_benchmark.py --out runs/bench --sizes 20 50 --seeds 10 --jobs 4
"""

import argparse
import csv
import json
import logging
from pathlib import Path

from ovaner.corpus import write_conll
from ovaner.experiment import ExperimentSpec, run_grid, summarize
from ovaner.synthetic import SyntheticConfig, make_splits
from ovaner.training import METHODS


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", required=True)
    ap.add_argument("--sizes", type=int, nargs="+", default=[20, 50])
    ap.add_argument("--entity-pcts", type=float, nargs="*", default=None)
    ap.add_argument("--seeds", type=int, default=10)
    ap.add_argument("--methods", nargs="+", default=list(METHODS))
    ap.add_argument("--jobs", type=int, default=1)
    ap.add_argument("--data-seed", type=int, default=0)
    ap.add_argument("--cue-prob", type=float, default=SyntheticConfig.cue_prob)
    ap.add_argument("--train-config", default=None, help="JSON file with TrainConfig overrides")
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")

    out = Path(args.out)
    data = out / "data"
    data.mkdir(parents=True, exist_ok=True)
    splits = make_splits(2000, 200, 1000, seed=args.data_seed, cfg=SyntheticConfig(cue_prob=args.cue_prob),
                         name="s800like")
    for split, corpus in zip(("train", "dev", "test"), splits):
        write_conll(corpus, data / f"{split}.conll")

    overrides = json.loads(Path(args.train_config).read_text()) if args.train_config else {}
    spec = ExperimentSpec(train=str(data / "train.conll"), dev=str(data / "dev.conll"),
                          test=str(data / "test.conll"), methods=tuple(args.methods), sizes=tuple(args.sizes),
                          entity_pcts=args.entity_pcts or None, seeds=tuple(range(args.seeds)),
                          train_config=overrides)
    run_grid(spec, out / "grid", jobs=args.jobs)
    summary, _ = summarize(out / "grid", out / "summary.csv")

    with open(summary, newline="") as fh:
        for row in csv.DictReader(fh):
            pct = f" pct={row['entity_pct']}" if row["entity_pct"] else ""
            print(f"{row['method']:<13} n={row['train_size']:<4}{pct}  F1 {100 * float(row['mean_f1']):5.1f}"
                  f" +/- {100 * float(row['ci95_half_width']):4.1f}  ({row['n']} runs) {row['flag']}")


if __name__ == "__main__":
    main()
