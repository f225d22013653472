"""Low-resource training partitions and entity-density-controlled subsets."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .corpus import Corpus, CorpusError


class InfeasibleTargetError(CorpusError):
    def __init__(self, target: float, best: float, tolerance: float):
        self.target = target
        self.best = best
        self.tolerance = tolerance
        super().__init__(
            f"cannot reach {target:.3f}% entity tokens within ±{tolerance}pp; "
            f"best achieved {best:.3f}%"
        )


@dataclass(frozen=True)
class SampleSpec:
    size: int
    seed: int = 0
    entity_pct: float | None = None
    tolerance_pp: float = 0.5

    def __post_init__(self) -> None:
        if self.size < 1:
            raise ValueError("size must be >= 1")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        if self.entity_pct is not None and not 0 < self.entity_pct < 100:
            raise ValueError("entity_pct must lie in (0, 100)")
        if self.tolerance_pp < 0:
            raise ValueError("tolerance_pp must be >= 0")


def entity_percentage(corpus: Corpus) -> float:
    return 100.0 * sum(s.n_entity_tokens for s in corpus) / corpus.n_tokens


def _subset(corpus: Corpus, indices, suffix: str) -> Corpus:
    return Corpus(tuple(corpus[i] for i in sorted(int(i) for i in indices)), f"{corpus.name}-{suffix}")


def _check_size(corpus: Corpus, spec: SampleSpec) -> None:
    if spec.size > len(corpus):
        raise CorpusError(f"sample size {spec.size} exceeds corpus size {len(corpus)}")


def sample_partition(corpus: Corpus, spec: SampleSpec) -> Corpus:
    """Uniform random subset of ``spec.size`` sentences, kept in corpus order."""
    if spec.entity_pct is not None:
        raise ValueError("sample_partition ignores entity_pct; use sample_imbalanced")
    _check_size(corpus, spec)
    rng = np.random.default_rng(spec.seed)
    picked = rng.choice(len(corpus), size=spec.size, replace=False)
    return _subset(corpus, picked, f"n{spec.size}-s{spec.seed}")


def _greedy_swap(lengths: np.ndarray, ents: np.ndarray, size: int, target: float,
                 tolerance: float, rng: np.random.Generator) -> tuple[np.ndarray, float]:
    n = len(lengths)
    order = rng.permutation(n)
    lengths = lengths[order].astype(np.float64)
    ents = ents[order].astype(np.float64)

    used = np.zeros(n, dtype=bool)
    tot_len = 0.0
    tot_ent = 0.0
    for _ in range(size):
        dist = np.abs(100.0 * (tot_ent + ents) / (tot_len + lengths) - target)
        dist[used] = np.inf
        j = int(np.argmin(dist))  # first minimum in shuffled order: seeded tie-break
        used[j] = True
        tot_len += lengths[j]
        tot_ent += ents[j]

    def gap(e, t):
        return abs(100.0 * e / t - target)

    for _ in range(10 * size):
        if gap(tot_ent, tot_len) <= tolerance:
            break
        inside = np.flatnonzero(used)
        outside = np.flatnonzero(~used)
        if outside.size == 0:
            break
        new_len = tot_len - lengths[inside][:, None] + lengths[outside][None, :]
        new_ent = tot_ent - ents[inside][:, None] + ents[outside][None, :]
        dist = np.abs(100.0 * new_ent / new_len - target)
        flat = int(np.argmin(dist))
        i, j = divmod(flat, outside.size)
        if dist[i, j] >= gap(tot_ent, tot_len):
            break
        used[inside[i]] = False
        used[outside[j]] = True
        tot_len = new_len[i, j]
        tot_ent = new_ent[i, j]

    return order[used], 100.0 * tot_ent / tot_len


def sample_imbalanced(corpus: Corpus, spec: SampleSpec) -> Corpus:
    """Subset of ``spec.size`` sentences whose entity-token share is near ``spec.entity_pct``.

    Greedy selection (each pick moves the running percentage closest to the
    target) followed by best-improvement swaps. Raises
    :class:`InfeasibleTargetError` rather than returning an off-target subset.
    """
    if spec.entity_pct is None:
        raise ValueError("sample_imbalanced requires entity_pct")
    _check_size(corpus, spec)
    ents = np.array([s.n_entity_tokens for s in corpus], dtype=np.int64)
    lengths = np.array([len(s) for s in corpus], dtype=np.int64)
    if not (ents == 0).any() or not (ents > 0).any():
        raise CorpusError("corpus needs both all-'O' and entity-bearing sentences")

    rng = np.random.default_rng(spec.seed)
    picked, achieved = _greedy_swap(lengths, ents, spec.size, spec.entity_pct, spec.tolerance_pp, rng)
    if abs(achieved - spec.entity_pct) > spec.tolerance_pp:
        raise InfeasibleTargetError(spec.entity_pct, achieved, spec.tolerance_pp)
    return _subset(corpus, picked, f"n{spec.size}-p{spec.entity_pct:g}-s{spec.seed}")


def sample(corpus: Corpus, spec: SampleSpec) -> Corpus:
    if spec.entity_pct is None:
        return sample_partition(corpus, spec)
    return sample_imbalanced(corpus, spec)
