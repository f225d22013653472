"""Training loops for CE, OVA-BCE, prefix-grouped OVA-AUC and head-sampled OVA-AUC-MAML."""

from __future__ import annotations

import dataclasses
import logging
import math
from dataclasses import dataclass, field
from typing import Any, Mapping, Sequence

import numpy as np

from .corpus import Corpus, CorpusError, LabelSet, build_label_set, build_vocabulary
from .evaluation import entity_f1, predict
from .losses import HeadDualState, auc_margin_loss, bce_loss, ce_loss, clamp_prior
from .model import (Batch, ModelState, backward, encode_batch, head_scores, init_model, make_batch,
                    multiclass_logits)
from .optimizer import OptimizerConfig, step_dual, step_primal

log = logging.getLogger(__name__)

METHODS = ("ce", "ova-bce", "ova-auc", "ova-auc-maml")
_BATCH_STREAM = 0
_HEAD_STREAM = 1


@dataclass(frozen=True)
class TrainConfig:
    method: str = "ova-auc"
    batch_sentences: int = 8
    max_epochs: int = 100
    patience: int = 10
    maml_m: int | None = None  # None -> ceil(K / 3)
    margin: float = 1.0
    seed: int = 0
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    d_e: int = 32
    d_c: int = 8
    d_h: int = 64
    window: int = 1
    min_count: int = 1

    def __post_init__(self) -> None:
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}; expected one of {', '.join(METHODS)}")
        if self.batch_sentences < 1:
            raise ValueError("batch_sentences must be >= 1")
        if self.max_epochs < 0 or self.patience < 0:
            raise ValueError("max_epochs and patience must be >= 0")
        if self.patience > self.max_epochs:
            raise ValueError("patience must not exceed max_epochs")
        if self.maml_m is not None and self.maml_m < 1:
            raise ValueError("maml_m must be >= 1")
        if self.margin <= 0:
            raise ValueError("margin must be > 0")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "TrainConfig":
        """Build from a flat mapping of TrainConfig and OptimizerConfig keys."""
        own = {f.name for f in dataclasses.fields(cls)} - {"optimizer"}
        opt = {f.name for f in dataclasses.fields(OptimizerConfig)}
        unknown = sorted(set(data) - own - opt)
        if unknown:
            raise KeyError(f"unknown config key(s): {', '.join(unknown)}")
        return cls(
            optimizer=OptimizerConfig(**{k: v for k, v in data.items() if k in opt}),
            **{k: v for k, v in data.items() if k in own},
        )

    def to_dict(self) -> dict[str, Any]:
        out = {f.name: getattr(self, f.name) for f in dataclasses.fields(self) if f.name != "optimizer"}
        out.update(dataclasses.asdict(self.optimizer))
        return out

    def resolved_maml_m(self, K: int) -> int:
        m = self.maml_m if self.maml_m is not None else math.ceil(K / 3)
        if m > K:
            raise ValueError(f"maml_m={m} exceeds the number of heads K={K}")
        return m


@dataclass
class EpochRecord:
    epoch: int
    loss: float
    dev_f1: float
    lr_primal: float


@dataclass
class TrainLog:
    epochs: list[EpochRecord] = field(default_factory=list)
    best_epoch: int = 0
    best_dev_f1: float = float("nan")
    stopped_early: bool = False

    def to_csv(self) -> str:
        lines = ["epoch,loss,dev_f1,lr_primal"]
        lines += [f"{r.epoch},{r.loss!r},{r.dev_f1!r},{r.lr_primal!r}" for r in self.epochs]
        return "\n".join(lines) + "\n"


def epoch_rng(seed: int, stream: int, epoch: int, pass_index: int = 0) -> np.random.Generator:
    """Independent generator per (seed, stream, epoch, pass)."""
    return np.random.default_rng(np.random.SeedSequence([seed, stream, epoch, pass_index]))


def batch_order(n_sentences: int, batch_sentences: int, seed: int, epoch: int,
                pass_index: int = 0) -> list[np.ndarray]:
    perm = epoch_rng(seed, _BATCH_STREAM, epoch, pass_index).permutation(n_sentences)
    return [perm[i:i + batch_sentences] for i in range(0, n_sentences, batch_sentences)]


def sample_heads(seed: int, epoch: int, K: int, m: int) -> np.ndarray:
    """``m`` distinct head indices for one epoch, sorted."""
    rng = epoch_rng(seed, _HEAD_STREAM, epoch)
    return np.sort(rng.choice(K, size=m, replace=False))


@dataclass
class TrainingData:
    """Training sentences pre-mapped to ids for fast batching."""

    word_ids: list[np.ndarray]
    case_ids: list[np.ndarray]
    label_ids: list[np.ndarray]
    window: int

    @classmethod
    def build(cls, corpus: Corpus, state: ModelState) -> "TrainingData":
        words, cases, labels = [], [], []
        for s in corpus:
            w, c = state.vocabulary.ids(s.tokens)
            words.append(w)
            cases.append(c)
            labels.append(np.array([state.label_set.index[t] for t in s.labels], dtype=np.int64))
        return cls(words, cases, labels, state.encoder.window)

    def __len__(self) -> int:
        return len(self.word_ids)

    def batch(self, idx: Sequence[int]) -> tuple[Batch, np.ndarray]:
        b = make_batch([self.word_ids[i] for i in idx], [self.case_ids[i] for i in idx], self.window)
        return b, np.concatenate([self.label_ids[i] for i in idx])


def head_priors(data: TrainingData, K: int) -> np.ndarray:
    counts = np.bincount(np.concatenate(data.label_ids), minlength=K)
    return counts / counts.sum()


def init_duals(priors: np.ndarray, margin: float) -> list[HeadDualState]:
    return [HeadDualState(margin=margin, prior=clamp_prior(p)) for p in priors]


def _param_views(state: ModelState, heads: Sequence[int], multiclass: bool) -> dict[str, np.ndarray]:
    enc = state.encoder
    views = {"word_emb": enc.word_emb, "case_emb": enc.case_emb,
             "hidden_w": enc.hidden_w, "hidden_b": enc.hidden_b}
    for k in heads:
        views[f"head.{k}.weight"] = state.head_weight[k]
        views[f"head.{k}.bias"] = state.head_bias[k:k + 1]
    if multiclass:
        views["mc_weight"] = state.mc_weight
        views["mc_bias"] = state.mc_bias
    return views


def _grad_views(grads: dict[str, np.ndarray], heads: Sequence[int], multiclass: bool) -> dict[str, np.ndarray]:
    out = {k: grads[k] for k in ("word_emb", "case_emb", "hidden_w", "hidden_b")}
    for k in heads:
        out[f"head.{k}.weight"] = grads["head_weight"][k]
        out[f"head.{k}.bias"] = grads["head_bias"][k:k + 1]
    if multiclass:
        out["mc_weight"] = grads["mc_weight"]
        out["mc_bias"] = grads["mc_bias"]
    return out


class Trainer:
    """Mutable per-run state: model, optimizer buffers and dual variables."""

    def __init__(self, state: ModelState, data: TrainingData, cfg: TrainConfig):
        self.state = state
        self.data = data
        self.cfg = cfg
        self.velocity: dict[str, np.ndarray] = {}
        self.duals = init_duals(head_priors(data, state.K), cfg.margin)

    # -- one optimisation step per objective -------------------------------

    def _apply(self, grads, heads, multiclass, opt: OptimizerConfig) -> None:
        step_primal(_param_views(self.state, heads, multiclass), _grad_views(grads, heads, multiclass),
                    self.velocity, opt)

    def step_ce(self, idx, opt: OptimizerConfig) -> float:
        batch, y = self.data.batch(idx)
        cache = encode_batch(self.state, batch)
        loss, d_logits = ce_loss(multiclass_logits(self.state, cache.features), y)
        self._apply(backward(self.state, cache, d_logits=d_logits), [], True, opt)
        return loss

    def step_bce(self, idx, heads, opt: OptimizerConfig) -> float:
        batch, y = self.data.batch(idx)
        cache = encode_batch(self.state, batch)
        scores = head_scores(self.state, cache.features, heads)
        d_scores = np.empty_like(scores)
        total = 0.0
        for j, k in enumerate(heads):
            loss, d_scores[:, j] = bce_loss(scores[:, j], np.where(y == k, 1, -1))
            total += loss
        self._apply(backward(self.state, cache, d_scores, heads), heads, False, opt)
        return total

    def step_auc(self, idx, heads, opt: OptimizerConfig) -> float:
        """Summed AUC margin loss over ``heads``; primal descent plus dual steps."""
        batch, y = self.data.batch(idx)
        cache = encode_batch(self.state, batch)
        scores = head_scores(self.state, cache.features, heads)
        d_scores = np.empty_like(scores)
        total = 0.0
        dual_grads = []
        for j, k in enumerate(heads):
            res = auc_margin_loss(scores[:, j], np.where(y == k, 1, -1), self.duals[k])
            d_scores[:, j] = res.d_scores
            dual_grads.append((res.d_a, res.d_b, res.d_alpha))
            total += res.loss
        self._apply(backward(self.state, cache, d_scores, heads), heads, False, opt)
        for k, (d_a, d_b, d_alpha) in zip(heads, dual_grads):
            self.duals[k] = step_dual(self.duals[k], d_a, d_b, d_alpha, opt)
        return total


def epoch_ce(trainer: Trainer, epoch: int) -> float:
    cfg = trainer.cfg
    opt = cfg.optimizer.at_epoch(epoch)
    losses = [trainer.step_ce(idx, opt) for idx in batch_order(len(trainer.data), cfg.batch_sentences, cfg.seed, epoch)]
    return float(np.mean(losses))


def epoch_ova_bce(trainer: Trainer, epoch: int) -> float:
    cfg = trainer.cfg
    opt = cfg.optimizer.at_epoch(epoch)
    heads = list(range(trainer.state.K))
    losses = [trainer.step_bce(idx, heads, opt)
              for idx in batch_order(len(trainer.data), cfg.batch_sentences, cfg.seed, epoch)]
    return float(np.mean(losses))


def epoch_ova_auc(trainer: Trainer, epoch: int) -> float:
    """One pass per tag-prefix group (B, I, O), each optimising the group's summed loss."""
    cfg = trainer.cfg
    opt = cfg.optimizer.at_epoch(epoch)
    losses = []
    for pass_index, heads in enumerate(trainer.state.label_set.prefix_groups()):
        for idx in batch_order(len(trainer.data), cfg.batch_sentences, cfg.seed, epoch, pass_index):
            losses.append(trainer.step_auc(idx, heads, opt))
    return float(np.mean(losses))


def epoch_ova_auc_maml(trainer: Trainer, epoch: int) -> float:
    """One pass optimising the summed loss of ``maml_m`` randomly drawn heads."""
    cfg = trainer.cfg
    K = trainer.state.K
    heads = [int(k) for k in sample_heads(cfg.seed, epoch, K, cfg.resolved_maml_m(K))]
    opt = cfg.optimizer.at_epoch(epoch)
    losses = [trainer.step_auc(idx, heads, opt)
              for idx in batch_order(len(trainer.data), cfg.batch_sentences, cfg.seed, epoch)]
    return float(np.mean(losses))


EPOCH_FNS = {
    "ce": epoch_ce,
    "ova-bce": epoch_ova_bce,
    "ova-auc": epoch_ova_auc,
    "ova-auc-maml": epoch_ova_auc_maml,
}


def check_label_sets(train: Corpus, dev: Corpus, label_set: LabelSet) -> None:
    for corpus in (train, dev):
        unseen = sorted(corpus.tags() - set(label_set.labels))
        if unseen:
            raise CorpusError(f"labels not in the training label set: {', '.join(unseen)}")


def train(train: Corpus, dev: Corpus, cfg: TrainConfig, label_set: LabelSet | None = None,
          meta: Mapping[str, str] | None = None) -> tuple[ModelState, TrainLog]:
    """Train with early stopping on dev entity F1 and return the best snapshot.

    ``label_set`` defaults to the training corpus's own tags; pass a wider
    one to keep heads for labels a small sample happens to miss.
    """
    if len(train) == 0:
        raise CorpusError("empty training corpus")
    label_set = label_set or build_label_set(train)
    check_label_sets(train, dev, label_set)
    if cfg.method == "ova-auc-maml":
        cfg.resolved_maml_m(len(label_set))

    vocab = build_vocabulary(train, cfg.min_count)
    state = init_model(label_set, vocab, d_e=cfg.d_e, d_c=cfg.d_c, d_h=cfg.d_h, window=cfg.window,
                       method=cfg.method, seed=cfg.seed)
    state.meta.update({"method": cfg.method, "seed": str(cfg.seed), "train_size": str(len(train)),
                       "corpus": train.name})
    if meta:
        state.meta.update({k: str(v) for k, v in meta.items()})

    trainer = Trainer(state, TrainingData.build(train, state), cfg)
    run_epoch = EPOCH_FNS[cfg.method]
    log_ = TrainLog()
    best = state.copy()
    best_f1 = -1.0
    since_best = 0
    for epoch in range(cfg.max_epochs):
        loss = run_epoch(trainer, epoch)
        dev_f1 = entity_f1(dev, predict(state, dev.sentences)).f1
        log_.epochs.append(EpochRecord(epoch + 1, loss, dev_f1, cfg.optimizer.at_epoch(epoch).lr_primal))
        log.debug("%s epoch %d loss %.6f dev_f1 %.4f", cfg.method, epoch + 1, loss, dev_f1)
        if dev_f1 > best_f1:
            best_f1, best, since_best = dev_f1, state.copy(), 0
            log_.best_epoch = epoch + 1
        else:
            since_best += 1
            if since_best >= cfg.patience:
                log_.stopped_early = True
                break
    if log_.epochs:
        log_.best_dev_f1 = best_f1
    return best, log_
