"""Primal momentum SGD and projected dual steps for the AUC minimax problem."""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import MutableMapping

import numpy as np

from .losses import HeadDualState


class NonFiniteGradientError(FloatingPointError):
    def __init__(self, group: str):
        self.group = group
        super().__init__(f"non-finite gradient in parameter group {group!r}")


@dataclass(frozen=True)
class OptimizerConfig:
    lr_primal: float = 1.0
    lr_dual: float = 1.0
    lr_decay: float = 0.98
    momentum: float = 0.9

    def __post_init__(self) -> None:
        if self.lr_primal <= 0 or self.lr_dual <= 0:
            raise ValueError("learning rates must be > 0")
        if not 0 < self.lr_decay <= 1:
            raise ValueError("lr_decay must lie in (0, 1]")
        if not 0 <= self.momentum < 1:
            raise ValueError("momentum must lie in [0, 1)")

    def at_epoch(self, epoch: int) -> "OptimizerConfig":
        """Rates after ``epoch`` multiplicative decays."""
        f = self.lr_decay ** epoch
        return replace(self, lr_primal=self.lr_primal * f, lr_dual=self.lr_dual * f)


def step_primal(params: MutableMapping[str, np.ndarray], grads: MutableMapping[str, np.ndarray],
                velocity: MutableMapping[str, np.ndarray], cfg: OptimizerConfig):
    """Heavy-ball update ``v <- mu v + g; x <- x - lr v``, applied in place.

    Only the keys of ``grads`` are touched; velocity buffers are created on
    first use.
    """
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise NonFiniteGradientError(name)
        p = params[name]
        if p.shape != g.shape:
            raise ValueError(f"gradient shape {g.shape} != parameter shape {p.shape} for {name}")
    for name, g in grads.items():
        v = velocity.get(name)
        if v is None:
            v = velocity[name] = np.zeros_like(g)
        v *= cfg.momentum
        v += g
        params[name] -= cfg.lr_primal * v
    return params, velocity


def step_dual(dual: HeadDualState, d_a: float, d_b: float, d_alpha: float,
              cfg: OptimizerConfig) -> HeadDualState:
    """Descent on ``a, b``; ascent on ``alpha`` projected onto ``[0, inf)``."""
    for name, g in (("a", d_a), ("b", d_b), ("alpha", d_alpha)):
        if not np.isfinite(g):
            raise NonFiniteGradientError(name)
    return replace(
        dual,
        a=dual.a - cfg.lr_dual * d_a,
        b=dual.b - cfg.lr_dual * d_b,
        alpha=max(0.0, dual.alpha + cfg.lr_dual * d_alpha),
    )
