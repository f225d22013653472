"""Write synthetic train/dev/test CoNLL files with s800-like label proportions.

    python scripts/make_synthetic.py --out data/synth --train 2000 --dev 200 --test 1000 --seed 0
"""

import argparse
from pathlib import Path

from ovaner.corpus import corpus_stats, format_stats_table, write_conll
from ovaner.synthetic import SyntheticConfig, make_splits


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", required=True, help="output directory")
    ap.add_argument("--train", type=int, default=2000)
    ap.add_argument("--dev", type=int, default=200)
    ap.add_argument("--test", type=int, default=1000)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--cue-prob", type=float, default=SyntheticConfig.cue_prob)
    ap.add_argument("--proper-prob", type=float, default=SyntheticConfig.proper_prob)
    args = ap.parse_args()

    cfg = SyntheticConfig(cue_prob=args.cue_prob, proper_prob=args.proper_prob)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    splits = make_splits(args.train, args.dev, args.test, seed=args.seed, cfg=cfg)
    for split, corpus in zip(("train", "dev", "test"), splits):
        write_conll(corpus, out / f"{split}.conll")
    print(format_stats_table([corpus_stats(c) for c in splits]), end="")


if __name__ == "__main__":
    main()
