"""Grid runner over methods x training sizes x entity percentages x seeds.

Each run writes its own files under ``<out>/runs`` so runs can execute in
parallel and a re-run skips whatever already finished with the same config.
"""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import json
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Any, Mapping, Sequence

import numpy as np
from scipy import stats

from .corpus import build_label_set, load_conll
from .evaluation import evaluate, metrics_header, metrics_row
from .sampling import SampleSpec, sample
from .training import METHODS, TrainConfig, train

log = logging.getLogger(__name__)

DEFAULT_SIZES = (20, 50, 100, 200, 300, 400, 500)
SUMMARY_COLUMNS = ("method", "train_size", "entity_pct", "n", "mean_f1", "std_f1", "ci95_half_width", "flag")


@dataclass(frozen=True)
class ExperimentSpec:
    train: str
    dev: str
    test: str
    methods: tuple[str, ...] = METHODS
    sizes: tuple[int, ...] = DEFAULT_SIZES
    entity_pcts: tuple[float, ...] | None = None
    seeds: tuple[int, ...] = tuple(range(10))
    train_config: Mapping[str, Any] = field(default_factory=dict)
    name: str | None = None
    tolerance_pp: float = 0.5

    def __post_init__(self) -> None:
        for key in ("methods", "sizes", "seeds"):
            value = getattr(self, key)
            if not value:
                raise ValueError(f"{key} must be nonempty")
            object.__setattr__(self, key, tuple(value))
        if self.entity_pcts is not None:
            object.__setattr__(self, "entity_pcts", tuple(float(p) for p in self.entity_pcts))
        bad = sorted(set(self.methods) - set(METHODS))
        if bad:
            raise ValueError(f"unknown method(s): {', '.join(bad)}")
        reserved = {"method", "seed"} & set(self.train_config)
        if reserved:
            raise ValueError(f"train_config must not set {', '.join(sorted(reserved))}")
        TrainConfig.from_dict(self.train_config)  # validate keys early

    @classmethod
    def from_dict(cls, data: Mapping[str, Any], base_dir: str | Path | None = None) -> "ExperimentSpec":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise KeyError(f"unknown experiment key(s): {', '.join(unknown)}")
        data = dict(data)
        if base_dir is not None:
            for key in ("train", "dev", "test"):
                if key in data and not os.path.isabs(data[key]):
                    data[key] = str(Path(base_dir) / data[key])
        return cls(**data)

    @classmethod
    def from_json(cls, path: str | Path) -> "ExperimentSpec":
        path = Path(path)
        return cls.from_dict(json.loads(path.read_text(encoding="utf-8")), base_dir=path.parent)

    def runs(self) -> list["RunKey"]:
        pcts: Sequence[float | None] = self.entity_pcts or (None,)
        return [RunKey(m, n, p, s) for m in self.methods for n in self.sizes for p in pcts for s in self.seeds]


@dataclass(frozen=True, order=True)
class RunKey:
    method: str
    size: int
    entity_pct: float | None
    seed: int

    @property
    def pct_str(self) -> str:
        return "" if self.entity_pct is None else f"{self.entity_pct:g}"

    @property
    def run_id(self) -> str:
        return f"{self.method}__n{self.size}__p{self.pct_str or 'none'}__s{self.seed}"


def _file_digest(path: str) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def run_config(spec: ExperimentSpec, key: RunKey) -> dict[str, Any]:
    cfg = TrainConfig.from_dict({**spec.train_config, "method": key.method, "seed": key.seed})
    return {
        "run_id": key.run_id,
        "method": key.method,
        "train_size": key.size,
        "entity_pct": key.entity_pct,
        "seed": key.seed,
        "tolerance_pp": spec.tolerance_pp,
        "train_config": cfg.to_dict(),
        "data": {k: _file_digest(getattr(spec, k)) for k in ("train", "dev", "test")},
    }


def config_hash(config: Mapping[str, Any]) -> str:
    return hashlib.sha256(json.dumps(config, sort_keys=True).encode()).hexdigest()


@lru_cache(maxsize=4)
def _load(path: str):
    return load_conll(path)


def _write_atomic(path: Path, text: str) -> None:
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
    os.replace(tmp, path)


def execute_run(spec: ExperimentSpec, key: RunKey, config: Mapping[str, Any], runs_dir: str) -> dict[str, Any]:
    """Sample, train and evaluate one grid cell; never raises."""
    record = {"run_id": key.run_id, "config_hash": config_hash(config), "status": "ok", "error": ""}
    runs = Path(runs_dir)
    try:
        full_train, dev, test = _load(spec.train), _load(spec.dev), _load(spec.test)
        label_set = build_label_set(full_train)
        # sampling depends on the seed only, so every method sees the same subset
        subset = sample(full_train, SampleSpec(key.size, seed=key.seed, entity_pct=key.entity_pct,
                                               tolerance_pp=spec.tolerance_pp))
        cfg = TrainConfig.from_dict(config["train_config"])
        meta = {"entity_pct": key.pct_str, "corpus": spec.name or full_train.name}
        state, train_log = train(subset, dev, cfg, label_set=label_set, meta=meta)
        metrics = evaluate(state, test)
        rows = [metrics_header(label_set),
                metrics_row(metrics, label_set, method=key.method, corpus=spec.name or full_train.name,
                            train_size=key.size, entity_pct=key.pct_str, seed=key.seed)]
        _write_atomic(runs / f"{key.run_id}.metrics.csv", _csv_text(rows))
        _write_atomic(runs / f"{key.run_id}.log.csv", train_log.to_csv())
    except Exception as exc:  # recorded in the manifest; the grid keeps going
        log.warning("run %s failed: %s", key.run_id, exc)
        record.update(status="failed", error=f"{type(exc).__name__}: {exc}")
    _write_atomic(runs / f"{key.run_id}.json", json.dumps(record, sort_keys=True, indent=1) + "\n")
    return record


def _csv_text(rows) -> str:
    import io

    buf = io.StringIO()
    csv.writer(buf, lineterminator="\n").writerows(rows)
    return buf.getvalue()


def _finished(runs_dir: Path, key: RunKey, digest: str) -> dict[str, Any] | None:
    path = runs_dir / f"{key.run_id}.json"
    if not path.exists():
        return None
    record = json.loads(path.read_text(encoding="utf-8"))
    if record.get("status") == "ok" and record.get("config_hash") == digest \
            and (runs_dir / f"{key.run_id}.metrics.csv").exists():
        return record
    return None


def run_grid(spec: ExperimentSpec, out_dir: str | Path, jobs: int = 1) -> list[dict[str, Any]]:
    """Run every grid cell not already finished; returns the manifest records."""
    out = Path(out_dir)
    runs_dir = out / "runs"
    runs_dir.mkdir(parents=True, exist_ok=True)
    keys = spec.runs()
    configs = {k: run_config(spec, k) for k in keys}
    records: dict[RunKey, dict[str, Any]] = {}
    todo = []
    for key in keys:
        done = _finished(runs_dir, key, config_hash(configs[key]))
        if done is not None:
            records[key] = done
        else:
            todo.append(key)
    log.info("%d runs total, %d already finished, %d to run", len(keys), len(records), len(todo))

    if jobs > 1 and len(todo) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = {k: pool.submit(execute_run, spec, k, configs[k], str(runs_dir)) for k in todo}
            for k, fut in futures.items():
                records[k] = fut.result()
    else:
        for k in todo:
            records[k] = execute_run(spec, k, configs[k], str(runs_dir))
            log.info("run %s: %s", k.run_id, records[k]["status"])

    manifest = []
    for key in keys:
        entry = dict(configs[key])
        entry.update(config_hash=records[key]["config_hash"], status=records[key]["status"],
                     error=records[key]["error"])
        manifest.append(entry)
    _write_atomic(out / "manifest.json", json.dumps(manifest, sort_keys=True, indent=1) + "\n")
    merge_metrics(out, keys)
    return manifest


def merge_metrics(out_dir: Path, keys: Sequence[RunKey]) -> Path:
    """Concatenate per-run metric rows (successful runs only) into ``metrics.csv``."""
    header = None
    rows = []
    for key in keys:
        path = out_dir / "runs" / f"{key.run_id}.metrics.csv"
        if not path.exists():
            continue
        with open(path, encoding="utf-8", newline="") as fh:
            h, *body = list(csv.reader(fh))
        header = header or h
        rows.extend(body)
    target = out_dir / "metrics.csv"
    _write_atomic(target, _csv_text([header or ["method"]] + rows))
    return target


def read_metrics(results_dir: str | Path) -> list[dict[str, str]]:
    results = Path(results_dir)
    path = results / "metrics.csv" if results.is_dir() else results
    with open(path, encoding="utf-8", newline="") as fh:
        return list(csv.DictReader(fh))


def t_half_width(values: Sequence[float], confidence: float = 0.95) -> float:
    n = len(values)
    if n < 2:
        return float("nan")
    sd = float(np.std(values, ddof=1))
    return float(stats.t.ppf(0.5 + confidence / 2, n - 1) * sd / math.sqrt(n))


@dataclass(frozen=True)
class CellSummary:
    method: str
    train_size: int
    entity_pct: str
    n: int
    mean: float
    std: float
    half_width: float

    @property
    def flag(self) -> str:
        return "" if self.n >= 2 else "insufficient_runs"

    def row(self) -> list[str]:
        return [self.method, str(self.train_size), self.entity_pct, str(self.n), repr(self.mean),
                repr(self.std), repr(self.half_width), self.flag]


def summarize_rows(rows: Sequence[Mapping[str, str]]) -> list[CellSummary]:
    cells: dict[tuple[str, int, str], list[float]] = {}
    for r in rows:
        cells.setdefault((r["method"], int(r["train_size"]), r["entity_pct"]), []).append(float(r["f1"]))

    def order(item):
        (method, size, pct), _ = item
        return method, size, -1.0 if pct == "" else float(pct)

    out = []
    for (method, size, pct), values in sorted(cells.items(), key=order):
        std = float(np.std(values, ddof=1)) if len(values) > 1 else float("nan")
        out.append(CellSummary(method, size, pct, len(values), float(np.mean(values)), std,
                               t_half_width(values)))
    return out


def long_rows(cells: Sequence[CellSummary]) -> list[list[str]]:
    """One row per (cell, statistic): mean, lower and upper band edges, std, n."""
    out = []
    for c in cells:
        base = [c.method, str(c.train_size), c.entity_pct]
        for name, value in (("mean", c.mean), ("lower", c.mean - c.half_width),
                            ("upper", c.mean + c.half_width), ("std", c.std), ("n", c.n)):
            out.append(base + [name, repr(value) if isinstance(value, float) else str(value)])
    return out


def summarize(results_dir: str | Path, out_path: str | Path) -> tuple[Path, Path]:
    """Write ``summary.csv`` and its long-format companion ``<stem>_long.csv``."""
    cells = summarize_rows(read_metrics(results_dir))
    out_path = Path(out_path)
    long_path = out_path.with_name(f"{out_path.stem}_long.csv")
    _write_atomic(out_path, _csv_text([list(SUMMARY_COLUMNS)] + [c.row() for c in cells]))
    _write_atomic(long_path, _csv_text([["method", "train_size", "entity_pct", "statistic", "value"]]
                                       + long_rows(cells)))
    return out_path, long_path
