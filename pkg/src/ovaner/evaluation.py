"""Maximum-confidence decoding, entity-level scoring and token-level AUC."""

from __future__ import annotations

import csv
import io
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple, Sequence

import numpy as np
from scipy.special import softmax
from scipy.stats import rankdata

from .corpus import OUTSIDE, Corpus, LabelSet, Sentence
from .model import ModelState, batch_for, encode_batch, head_scores, multiclass_logits


class Span(NamedTuple):
    start: int
    end: int  # inclusive
    entity_type: str


@dataclass
class MetricsRecord:
    precision: float
    recall: float
    f1: float
    n_true_positive: int = 0
    n_predicted: int = 0
    n_gold: int = 0
    support: dict[str, int] = field(default_factory=dict)
    per_head_auc: dict[str, float] = field(default_factory=dict)


def predict_ova(scores: np.ndarray, label_set: LabelSet) -> list[str]:
    """Tag each row with its highest-scoring head; ties go to the lower index."""
    scores = np.asarray(scores)
    if scores.ndim != 2 or scores.shape[1] != len(label_set):
        raise ValueError(f"expected scores of shape [l, {len(label_set)}]")
    return [label_set.labels[k] for k in np.argmax(scores, axis=1)]


def sentence_scores(state: ModelState, sentences: Sequence[Sentence], chunk: int = 256) -> list[np.ndarray]:
    """Per-sentence ``[l, K]`` score matrices.

    OVA models return head probabilities; the softmax baseline returns its
    class posteriors so both decode through :func:`predict_ova`.
    """
    out: list[np.ndarray] = []
    for lo in range(0, len(sentences), chunk):
        part = sentences[lo:lo + chunk]
        cache = encode_batch(state, batch_for(state, part))
        if state.is_multiclass:
            scores = softmax(multiclass_logits(state, cache.features), axis=1)
        else:
            scores = head_scores(state, cache.features)
        offsets = cache.batch.offsets()
        out.extend(scores[offsets[i]:offsets[i + 1]] for i in range(len(part)))
    return out


def predict(state: ModelState, sentences: Sequence[Sentence]) -> list[list[str]]:
    return [predict_ova(s, state.label_set) for s in sentence_scores(state, sentences)]


def decode_spans(tags: Sequence[str]) -> set[Span]:
    """BIO spans, conlleval style: an ``I-X`` not continuing an ``X`` span opens one."""
    spans = set()
    start = None
    etype = None
    for i, tag in enumerate(tags):
        prefix, _, t = tag.partition("-")
        continues = prefix == "I" and etype == t and start is not None
        if start is not None and not continues:
            spans.add(Span(start, i - 1, etype))
            start = etype = None
        if prefix in ("B", "I") and start is None:
            start, etype = i, t
    if start is not None:
        spans.add(Span(start, len(tags) - 1, etype))
    return spans


def encode_spans(spans: Iterable[Span], length: int) -> list[str]:
    tags = [OUTSIDE] * length
    for s in spans:
        tags[s.start] = f"B-{s.entity_type}"
        for i in range(s.start + 1, s.end + 1):
            tags[i] = f"I-{s.entity_type}"
    return tags


def _f1(p: float, r: float) -> float:
    return 2 * p * r / (p + r) if p + r > 0 else 0.0


def entity_f1(gold, predicted: Sequence[Sequence[str]]) -> MetricsRecord:
    """Micro exact-match span scores.

    ``gold`` is a :class:`Corpus` or a sequence of tag sequences.
    """
    gold_tags = [s.labels for s in gold] if isinstance(gold, Corpus) else list(gold)
    if len(gold_tags) != len(predicted):
        raise ValueError(f"{len(gold_tags)} gold sentences but {len(predicted)} predictions")
    tp = n_pred = n_gold = 0
    support: Counter[str] = Counter()
    for g, p in zip(gold_tags, predicted):
        if len(g) != len(p):
            raise ValueError("gold and predicted tag sequences differ in length")
        gs, ps = decode_spans(g), decode_spans(p)
        tp += len(gs & ps)
        n_pred += len(ps)
        n_gold += len(gs)
        support.update(s.entity_type for s in gs)
    precision = tp / n_pred if n_pred else 0.0
    recall = tp / n_gold if n_gold else 0.0
    return MetricsRecord(precision, recall, _f1(precision, recall), tp, n_pred, n_gold,
                         dict(sorted(support.items())))


def _split(scores, labels) -> tuple[np.ndarray, np.ndarray]:
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    if scores.shape != labels.shape or scores.ndim != 1:
        raise ValueError("scores and labels must be 1-D arrays of equal length")
    pos = labels == 1
    if not pos.any() or pos.all():
        raise ValueError("AUC needs at least one positive and one negative")
    return scores, pos


def token_auc(scores, labels) -> float:
    """Mann-Whitney AUC from mid-ranks; ties count one half."""
    scores, pos = _split(scores, labels)
    n_pos = int(pos.sum())
    n_neg = scores.size - n_pos
    ranks = rankdata(scores)
    u = ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def roc_auc_trapezoid(scores, labels) -> float:
    """Area under the empirical ROC curve by the trapezoid rule.

    Thresholds sweep the distinct scores from high to low, so tied scores
    form one diagonal segment.
    """
    scores, pos = _split(scores, labels)
    order = np.argsort(-scores, kind="mergesort")
    s = scores[order]
    y = pos[order]
    last_of_run = np.r_[s[1:] != s[:-1], True]
    tp = np.cumsum(y)[last_of_run]
    fp = np.cumsum(~y)[last_of_run]
    tpr = np.r_[0, tp] / tp[-1]
    fpr = np.r_[0, fp] / fp[-1]
    return float(np.sum((fpr[1:] - fpr[:-1]) * (tpr[1:] + tpr[:-1]) / 2.0))


def per_head_auc(scores: Sequence[np.ndarray], gold: Corpus, label_set: LabelSet) -> dict[str, float]:
    """Token AUC per head; heads whose gold column is single-class are omitted."""
    flat = np.concatenate(scores)
    idx = np.array([label_set.index.get(t, -1) for s in gold for t in s.labels])
    out = {}
    for k, label in enumerate(label_set.labels):
        y = np.where(idx == k, 1, -1)
        if (y == 1).any() and (y == -1).any():
            out[label] = token_auc(flat[:, k], y)
    return out


def evaluate(state: ModelState, corpus: Corpus) -> MetricsRecord:
    scores = sentence_scores(state, corpus.sentences)
    preds = [predict_ova(s, state.label_set) for s in scores]
    record = entity_f1(corpus, preds)
    record.per_head_auc = per_head_auc(scores, corpus, state.label_set)
    return record


METRICS_COLUMNS = ("method", "corpus", "train_size", "entity_pct", "seed", "precision", "recall", "f1")


def metrics_header(label_set: LabelSet) -> list[str]:
    return list(METRICS_COLUMNS) + [f"auc:{label}" for label in label_set.labels]


def metrics_row(record: MetricsRecord, label_set: LabelSet, *, method: str, corpus: str,
                train_size="", entity_pct="", seed="") -> list[str]:
    row = [method, corpus, str(train_size), str(entity_pct), str(seed),
           repr(record.precision), repr(record.recall), repr(record.f1)]
    row += [repr(record.per_head_auc[l]) if l in record.per_head_auc else "" for l in label_set.labels]
    return row


def write_csv(path, header: Sequence[str], rows: Iterable[Sequence[str]]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def export_probs(state: ModelState, corpus: Corpus) -> str:
    """CSV text with one row per token and one score column per head."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["sentence_id", "token_index", "token", "gold_tag", "predicted_tag", "max_score",
                *state.label_set.labels])
    for sid, (sentence, scores) in enumerate(zip(corpus, sentence_scores(state, corpus.sentences))):
        rounded = np.round(scores, 6)
        for i, (token, gold) in enumerate(zip(sentence.tokens, sentence.labels)):
            # decode on the printed values so the row is self-consistent
            k = int(np.argmax(rounded[i]))
            w.writerow([sid, i, token, gold, state.label_set.labels[k], f"{rounded[i, k]:.6f}",
                        *(f"{x:.6f}" for x in rounded[i])])
    return buf.getvalue()
