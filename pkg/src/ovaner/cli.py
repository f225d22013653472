"""Command line entry point: ``ovaner <subcommand> ...``.

Exit codes: 0 success, 1 runtime error, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .corpus import corpus_stats, format_stats_table, load_conll, write_conll
from .evaluation import evaluate, export_probs, metrics_header, metrics_row, write_csv
from .experiment import ExperimentSpec, run_grid, summarize
from .model import MODEL_FILENAME, load_model, save_model
from .sampling import SampleSpec, sample
from .training import TrainConfig, train

log = logging.getLogger("ovaner")


def _global_flags(suppress: bool = False) -> argparse.ArgumentParser:
    # subcommands re-declare the flags with suppressed defaults so that a flag
    # given before the subcommand is not reset by the subparser
    p = argparse.ArgumentParser(add_help=False)
    g = p.add_argument_group("global options")
    kw = {"default": argparse.SUPPRESS} if suppress else {}
    g.add_argument("--seed", type=int, help="overrides any seed in the config", **({"default": None} | kw))
    g.add_argument("--quiet", action="store_true", help="warnings only, no timestamps", **kw)
    g.add_argument("--log-file", help="also append log records to this file", **({"default": None} | kw))
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _global_flags(suppress=True)
    parser = argparse.ArgumentParser(prog="ovaner", description=__doc__.splitlines()[0],
                                     parents=[_global_flags()])
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")

    p = sub.add_parser("stats", parents=[common], help="corpus statistics table")
    p.add_argument("--data", required=True, nargs="+", help="CoNLL file(s)")

    p = sub.add_parser("sample", parents=[common], help="draw a training subset")
    p.add_argument("--data", required=True)
    p.add_argument("--size", required=True, type=int)
    p.add_argument("--entity-pct", type=float, default=None)
    p.add_argument("--tolerance-pp", type=float, default=0.5)
    p.add_argument("--out", required=True)

    p = sub.add_parser("train", parents=[common], help="train one model")
    p.add_argument("--config", required=True, help="flat JSON object of training options")
    p.add_argument("--train", required=True)
    p.add_argument("--dev", required=True)
    p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("eval", parents=[common], help="score a model on a test file")
    p.add_argument("--model", required=True)
    p.add_argument("--test", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("probs", parents=[common], help="export per-token head scores")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("experiment", parents=[common], help="run a method x size x seed grid")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--jobs", type=int, default=1)

    p = sub.add_parser("report", parents=[common], help="summarize a grid's results")
    p.add_argument("--results", required=True)
    p.add_argument("--out", required=True)
    return parser


def setup_logging(quiet: bool, log_file: str | None) -> None:
    fmt = "%(levelname)s %(name)s: %(message)s" if quiet else "%(asctime)s %(levelname)s %(name)s: %(message)s"
    handlers: list[logging.Handler] = [logging.StreamHandler(sys.stderr)]
    if log_file:
        handlers.append(logging.FileHandler(log_file, encoding="utf-8"))
    logging.basicConfig(level=logging.WARNING if quiet else logging.INFO, format=fmt, handlers=handlers,
                        force=True)


def cmd_stats(args) -> None:
    stats = [corpus_stats(load_conll(path)) for path in args.data]
    sys.stdout.write(format_stats_table(stats))


def cmd_sample(args) -> None:
    corpus = load_conll(args.data)
    spec = SampleSpec(args.size, seed=args.seed or 0, entity_pct=args.entity_pct, tolerance_pp=args.tolerance_pp)
    write_conll(sample(corpus, spec), args.out)
    log.info("wrote %d sentences to %s", args.size, args.out)


def cmd_train(args) -> None:
    data = json.loads(Path(args.config).read_text(encoding="utf-8"))
    if not isinstance(data, dict):
        raise ValueError("train config must be a JSON object")
    if args.seed is not None:
        data["seed"] = args.seed
    cfg = TrainConfig.from_dict(data)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    state, train_log = train(load_conll(args.train), load_conll(args.dev), cfg)
    save_model(state, out / MODEL_FILENAME)
    (out / "train_log.csv").write_text(train_log.to_csv(), encoding="utf-8", newline="\n")
    (out / "config.json").write_text(json.dumps(cfg.to_dict(), sort_keys=True, indent=1) + "\n",
                                     encoding="utf-8", newline="\n")
    log.info("best dev F1 %.4f at epoch %d", train_log.best_dev_f1, train_log.best_epoch)


def cmd_eval(args) -> None:
    state = load_model(args.model)
    test = load_conll(args.test)
    record = evaluate(state, test)
    meta = state.meta
    row = metrics_row(record, state.label_set, method=state.method, corpus=meta.get("corpus", test.name),
                      train_size=meta.get("train_size", ""), entity_pct=meta.get("entity_pct", ""),
                      seed=meta.get("seed", ""))
    write_csv(args.out, metrics_header(state.label_set), [row])
    log.info("entity F1 %.4f (P %.4f, R %.4f)", record.f1, record.precision, record.recall)


def cmd_probs(args) -> None:
    text = export_probs(load_model(args.model), load_conll(args.data))
    Path(args.out).write_text(text, encoding="utf-8", newline="\n")


def cmd_experiment(args) -> None:
    spec = ExperimentSpec.from_json(args.config)
    if args.seed is not None:
        log.warning("--seed is ignored by experiment; list seeds in the config")
    manifest = run_grid(spec, args.out, jobs=args.jobs)
    failed = [m["run_id"] for m in manifest if m["status"] != "ok"]
    log.info("%d runs, %d failed", len(manifest), len(failed))
    if failed:
        log.warning("failed runs: %s", ", ".join(failed))


def cmd_report(args) -> None:
    summary, long = summarize(args.results, args.out)
    log.info("wrote %s and %s", summary, long)


COMMANDS = {
    "stats": cmd_stats,
    "sample": cmd_sample,
    "train": cmd_train,
    "eval": cmd_eval,
    "probs": cmd_probs,
    "experiment": cmd_experiment,
    "report": cmd_report,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse exits 2 on usage errors, 0 on --help
        return int(exc.code or 0)
    setup_logging(args.quiet, args.log_file)
    try:
        COMMANDS[args.command](args)
    except Exception as exc:
        # KeyError's str() adds quotes around the message
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else str(exc)
        print(f"ovaner {args.command}: error: {msg}", file=sys.stderr)
        log.debug("traceback", exc_info=True)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
