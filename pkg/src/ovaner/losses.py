"""AUC margin minimax objective and the BCE / softmax-CE baselines.

Every loss returns its value together with exact derivatives with respect to
its inputs, so the trainer can chain them into :func:`ovaner.model.backward`.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.special import log_softmax

PRIOR_CLAMP = 1e-6


@dataclass
class HeadDualState:
    """Per-head auxiliary variables of the AUC margin objective.

    ``a`` and ``b`` track the mean positive and negative score, ``alpha`` is
    the dual variable (kept non-negative), ``margin`` the target gap and
    ``prior`` the positive-token fraction of the training pool.
    """

    a: float = 0.0
    b: float = 0.0
    alpha: float = 0.0
    margin: float = 1.0
    prior: float = 0.5

    def __post_init__(self) -> None:
        if self.alpha < 0:
            raise ValueError("alpha must be >= 0")
        if self.margin <= 0:
            raise ValueError("margin must be > 0")
        if not 0 < self.prior < 1:
            raise ValueError("prior must lie in (0, 1)")


def clamp_prior(p: float) -> float:
    return float(min(max(p, PRIOR_CLAMP), 1.0 - PRIOR_CLAMP))


class AUCLossResult(NamedTuple):
    loss: float
    d_scores: np.ndarray
    d_a: float
    d_b: float
    d_alpha: float


def _check_batch(scores: np.ndarray, labels: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    if scores.ndim != 1 or scores.shape != labels.shape:
        raise ValueError("scores and labels must be 1-D arrays of equal length")
    if scores.size == 0:
        raise ValueError("empty batch")
    return scores, labels


def auc_margin_loss(scores, labels, dual: HeadDualState) -> AUCLossResult:
    """Prior-weighted minibatch estimate of the square-margin AUC objective.

    With ``n`` tokens, positives ``P`` and negatives ``N``::

        L = 1/n sum_P (1-p)(h-a)^2 + 1/n sum_N p(h-b)^2
            + 2 alpha (p(1-p)m + 1/n [sum_N p h - sum_P (1-p) h])
            - p(1-p) alpha^2

    A single-class batch is fine: the missing class's sums are empty.
    """
    h, z = _check_batch(scores, labels)
    pos = z == 1
    neg = ~pos
    n = h.size
    a, b, alpha, m, p = dual.a, dual.b, dual.alpha, dual.margin, dual.prior
    q = 1.0 - p

    dev_pos = np.where(pos, h - a, 0.0)
    dev_neg = np.where(neg, h - b, 0.0)
    hp = np.where(pos, h, 0.0)
    hn = np.where(neg, h, 0.0)

    inner = p * q * m + (p * hn.sum() - q * hp.sum()) / n
    loss = (q * (dev_pos ** 2).sum() + p * (dev_neg ** 2).sum()) / n + 2.0 * alpha * inner - p * q * alpha ** 2

    d_scores = (2.0 * q * dev_pos + 2.0 * p * dev_neg + 2.0 * alpha * np.where(pos, -q, p)) / n
    d_a = -2.0 * q * dev_pos.sum() / n
    d_b = -2.0 * p * dev_neg.sum() / n
    d_alpha = 2.0 * inner - 2.0 * p * q * alpha
    return AUCLossResult(float(loss), d_scores, float(d_a), float(d_b), float(d_alpha))


def dual_optima(pos_mean: float, neg_mean: float, margin: float) -> tuple[float, float, float]:
    return float(pos_mean), float(neg_mean), float(max(0.0, margin - (pos_mean - neg_mean)))


def bce_loss(scores, labels) -> tuple[float, np.ndarray]:
    """Mean binary cross entropy over {+1, -1} labels and its score gradient."""
    h, z = _check_batch(scores, labels)
    pos = z == 1
    n = h.size
    loss = -(np.log(h[pos]).sum() + np.log1p(-h[~pos]).sum()) / n
    grad = np.where(pos, -1.0 / h, 1.0 / (1.0 - h)) / n
    return float(loss), grad


def ce_loss(logits, label_indices) -> tuple[float, np.ndarray]:
    """Mean softmax cross entropy; gradient is ``(softmax - onehot) / n``."""
    logits = np.asarray(logits, dtype=np.float64)
    y = np.asarray(label_indices, dtype=np.int64)
    if logits.ndim != 2 or y.shape != (logits.shape[0],):
        raise ValueError("logits must be [n, K] with one label index per row")
    n, K = logits.shape
    if n == 0:
        raise ValueError("empty batch")
    if (y < 0).any() or (y >= K).any():
        raise IndexError(f"label index out of range for K={K}")
    logp = log_softmax(logits, axis=1)
    rows = np.arange(n)
    loss = -logp[rows, y].sum() / n
    grad = np.exp(logp)
    grad[rows, y] -= 1.0
    return float(loss), grad / n
