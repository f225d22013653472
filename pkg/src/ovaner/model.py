"""Shared window encoder with per-label logistic heads.

The encoder maps each token to ``tanh(W x + c)`` where ``x`` concatenates the
word and case embeddings of the ``2w + 1`` tokens centred on it (zero rows
beyond sentence edges). Head ``k`` scores a token as
``logistic(weight_k . f + bias_k)``. An optional multiclass head carries the
softmax baseline.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.special import expit

from .corpus import CASE_PATTERNS, LabelSet, Sentence, Vocabulary

FORMAT_NAME = "nermodel"
FORMAT_VERSION = 1
MODEL_FILENAME = "model.nermodel"
# keeps scores strictly inside (0, 1) once the logistic saturates in float64
SCORE_EPS = 1e-15

ENCODER_KEYS = ("word_emb", "case_emb", "hidden_w", "hidden_b")
HEAD_KEYS = ("head_weight", "head_bias")
MULTICLASS_KEYS = ("mc_weight", "mc_bias")


class ModelFormatError(ValueError):
    pass


@dataclass
class EncoderParams:
    word_emb: np.ndarray
    case_emb: np.ndarray
    hidden_w: np.ndarray
    hidden_b: np.ndarray
    window: int

    @property
    def d_e(self) -> int:
        return self.word_emb.shape[1]

    @property
    def d_c(self) -> int:
        return self.case_emb.shape[1]

    @property
    def d_h(self) -> int:
        return self.hidden_w.shape[0]

    @property
    def dims(self) -> tuple[int, int, int, int]:
        return self.d_e, self.d_c, self.d_h, self.window


@dataclass
class HeadParams:
    """Views into the stacked head matrices; writes go through to the model."""

    weight: np.ndarray
    bias: np.ndarray


@dataclass
class ModelState:
    encoder: EncoderParams
    head_weight: np.ndarray
    head_bias: np.ndarray
    label_set: LabelSet
    vocabulary: Vocabulary
    method: str = "ova-auc"
    mc_weight: np.ndarray | None = None
    mc_bias: np.ndarray | None = None
    meta: dict[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        K = len(self.label_set)
        if self.head_weight.shape != (K, self.encoder.d_h) or self.head_bias.shape != (K,):
            raise ValueError(f"expected {K} heads of width {self.encoder.d_h}")
        if (self.mc_weight is None) != (self.mc_bias is None):
            raise ValueError("multiclass weight and bias must be set together")
        if (self.method == "ce") != (self.mc_weight is not None):
            raise ValueError("a multiclass head is present iff method == 'ce'")
        if self.encoder.word_emb.shape[0] != len(self.vocabulary) + 1:
            raise ValueError("word embedding rows must equal |vocab| + 1")

    @property
    def K(self) -> int:
        return len(self.label_set)

    @property
    def is_multiclass(self) -> bool:
        return self.mc_weight is not None

    @property
    def heads(self) -> list[HeadParams]:
        return [HeadParams(self.head_weight[k], self.head_bias[k:k + 1]) for k in range(self.K)]

    def arrays(self) -> dict[str, np.ndarray]:
        out = {k: getattr(self.encoder, k) for k in ENCODER_KEYS}
        out["head_weight"] = self.head_weight
        out["head_bias"] = self.head_bias
        if self.is_multiclass:
            out["mc_weight"] = self.mc_weight
            out["mc_bias"] = self.mc_bias
        return out

    def copy(self) -> "ModelState":
        enc = self.encoder
        return ModelState(
            encoder=EncoderParams(enc.word_emb.copy(), enc.case_emb.copy(), enc.hidden_w.copy(),
                                  enc.hidden_b.copy(), enc.window),
            head_weight=self.head_weight.copy(),
            head_bias=self.head_bias.copy(),
            label_set=self.label_set,
            vocabulary=self.vocabulary,
            method=self.method,
            mc_weight=None if self.mc_weight is None else self.mc_weight.copy(),
            mc_bias=None if self.mc_bias is None else self.mc_bias.copy(),
            meta=dict(self.meta),
        )


def init_model(label_set: LabelSet, vocabulary: Vocabulary, *, d_e: int = 32, d_c: int = 8,
               d_h: int = 64, window: int = 1, method: str = "ova-auc", seed: int = 0,
               scale: float = 0.1) -> ModelState:
    """Weights uniform in (-scale, scale), biases zero, unknown-word row zero."""
    if min(d_e, d_c, d_h) < 1 or window < 0:
        raise ValueError("dimensions must be >= 1 and window >= 0")
    rng = np.random.default_rng(seed)
    K = len(label_set)
    width = (2 * window + 1) * (d_e + d_c)
    word_emb = rng.uniform(-scale, scale, (len(vocabulary) + 1, d_e))
    word_emb[vocabulary.unk_id] = 0.0
    encoder = EncoderParams(
        word_emb=word_emb,
        case_emb=rng.uniform(-scale, scale, (len(CASE_PATTERNS), d_c)),
        hidden_w=rng.uniform(-scale, scale, (d_h, width)),
        hidden_b=np.zeros(d_h),
        window=window,
    )
    head_weight = rng.uniform(-scale, scale, (K, d_h))
    mc_weight = mc_bias = None
    if method == "ce":
        mc_weight = rng.uniform(-scale, scale, (K, d_h))
        mc_bias = np.zeros(K)
    return ModelState(encoder, head_weight, np.zeros(K), label_set, vocabulary, method,
                      mc_weight, mc_bias)


@dataclass
class Batch:
    """Token ids of several sentences laid end to end.

    ``window_src[i, o]`` is the flat index of the token at offset ``o - w``
    from token ``i`` inside the same sentence, or -1 for padding.
    """

    word_ids: np.ndarray
    case_ids: np.ndarray
    lengths: np.ndarray
    window_src: np.ndarray

    @property
    def n_tokens(self) -> int:
        return len(self.word_ids)

    def offsets(self) -> np.ndarray:
        return np.concatenate([[0], np.cumsum(self.lengths)])


def make_batch(word_ids: Sequence[np.ndarray], case_ids: Sequence[np.ndarray], window: int) -> Batch:
    lengths = np.array([len(w) for w in word_ids], dtype=np.int64)
    words = np.concatenate(word_ids)
    cases = np.concatenate(case_ids)
    starts = np.repeat(np.concatenate([[0], np.cumsum(lengths)[:-1]]), lengths)
    ends = starts + np.repeat(lengths, lengths)
    pos = np.arange(len(words))
    shifts = np.arange(-window, window + 1)
    src = pos[:, None] + shifts[None, :]
    src[(src < starts[:, None]) | (src >= ends[:, None])] = -1
    return Batch(words, cases, lengths, src)


def batch_for(state: ModelState, sentences: Sequence[Sentence]) -> Batch:
    ids = [state.vocabulary.ids(s.tokens) for s in sentences]
    return make_batch([w for w, _ in ids], [c for _, c in ids], state.encoder.window)


@dataclass
class ForwardCache:
    batch: Batch
    inputs: np.ndarray
    features: np.ndarray


def encode_batch(state: ModelState, batch: Batch) -> ForwardCache:
    enc = state.encoder
    emb = np.concatenate([enc.word_emb[batch.word_ids], enc.case_emb[batch.case_ids]], axis=1)
    valid = batch.window_src >= 0
    windows = np.where(valid[..., None], emb[np.maximum(batch.window_src, 0)], 0.0)
    inputs = windows.reshape(batch.n_tokens, -1)
    features = np.tanh(inputs @ enc.hidden_w.T + enc.hidden_b)
    return ForwardCache(batch, inputs, features)


def encode(state: ModelState, sentence: Sentence) -> np.ndarray:
    """Feature matrix of shape ``[len(sentence), d_h]``."""
    return encode_batch(state, batch_for(state, [sentence])).features


def head_logits(state: ModelState, features: np.ndarray, heads=None) -> np.ndarray:
    if heads is None:
        return features @ state.head_weight.T + state.head_bias
    heads = np.asarray(heads)
    return features @ state.head_weight[heads].T + state.head_bias[heads]


def squash(logits: np.ndarray) -> np.ndarray:
    return np.clip(expit(logits), SCORE_EPS, 1.0 - SCORE_EPS)


def head_scores(state: ModelState, features: np.ndarray, heads=None) -> np.ndarray:
    """OVA scores in (0, 1), shape ``[n, len(heads)]``."""
    return squash(head_logits(state, features, heads))


def head_score(state: ModelState, features: np.ndarray, k: int) -> np.ndarray:
    if not 0 <= k < state.K:
        raise IndexError(f"head index {k} out of range for K={state.K}")
    return head_scores(state, features, [k])[:, 0]


def multiclass_logits(state: ModelState, features: np.ndarray) -> np.ndarray:
    if not state.is_multiclass:
        raise ValueError("model has no multiclass head")
    return features @ state.mc_weight.T + state.mc_bias


def backward(state: ModelState, cache: ForwardCache, d_scores: np.ndarray | None = None,
             heads=None, d_logits: np.ndarray | None = None) -> dict[str, np.ndarray]:
    """Exact gradients of a scalar loss given its upstream derivatives.

    ``d_scores[:, j]`` is d(loss)/d(score) for head ``heads[j]`` (all heads when
    ``heads`` is None); ``d_logits`` is d(loss)/d(multiclass logits). The
    returned dict mirrors :meth:`ModelState.arrays`; heads not listed get zero
    gradient.
    """
    enc = state.encoder
    F = cache.features
    n = F.shape[0]
    grads = {k: np.zeros_like(v) for k, v in state.arrays().items()}
    d_feat = np.zeros_like(F)

    if d_scores is not None:
        heads = np.arange(state.K) if heads is None else np.asarray(heads)
        if d_scores.shape != (n, len(heads)):
            raise ValueError(f"d_scores shape {d_scores.shape} != {(n, len(heads))}")
        h = head_scores(state, F, heads)
        d_z = d_scores * h * (1.0 - h)
        grads["head_weight"][heads] = d_z.T @ F
        grads["head_bias"][heads] = d_z.sum(axis=0)
        d_feat += d_z @ state.head_weight[heads]

    if d_logits is not None:
        if not state.is_multiclass:
            raise ValueError("model has no multiclass head")
        if d_logits.shape != (n, state.K):
            raise ValueError(f"d_logits shape {d_logits.shape} != {(n, state.K)}")
        grads["mc_weight"] = d_logits.T @ F
        grads["mc_bias"] = d_logits.sum(axis=0)
        d_feat += d_logits @ state.mc_weight

    d_pre = d_feat * (1.0 - F * F)
    grads["hidden_w"] = d_pre.T @ cache.inputs
    grads["hidden_b"] = d_pre.sum(axis=0)

    batch = cache.batch
    d_windows = (d_pre @ enc.hidden_w).reshape(n, batch.window_src.shape[1], -1)
    valid = batch.window_src >= 0
    d_emb = np.zeros((n, enc.d_e + enc.d_c))
    np.add.at(d_emb, batch.window_src[valid], d_windows[valid])
    np.add.at(grads["word_emb"], batch.word_ids, d_emb[:, :enc.d_e])
    np.add.at(grads["case_emb"], batch.case_ids, d_emb[:, enc.d_e:])
    return grads


# --- persistence -----------------------------------------------------------

def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def dumps_model(state: ModelState) -> str:
    lines = [f"{FORMAT_NAME} {FORMAT_VERSION}", f"method {state.method}"]
    for key in sorted(state.meta):
        lines.append(f"meta {key} {state.meta[key]}")
    lines.append("dims {} {} {} {}".format(*state.encoder.dims))
    lines.append(f"labels {state.K}")
    lines.extend(state.label_set.labels)
    vocab = state.vocabulary
    lines.append(f"vocabulary {len(vocab)} {vocab.unk_id} {vocab.min_count}")
    lines.extend(vocab.tokens())
    for name, arr in state.arrays().items():
        lines.append(f"param {name} {arr.ndim} " + " ".join(str(d) for d in arr.shape))
        for row in np.atleast_2d(arr):
            lines.append(" ".join(_fmt(x) for x in row))
    lines.append("end")
    return "\n".join(lines) + "\n"


def save_model(state: ModelState, path: str | Path) -> Path:
    path = Path(path)
    if path.is_dir():
        path = path / MODEL_FILENAME
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(dumps_model(state))
    return path


class _Reader:
    def __init__(self, text: str):
        self.lines = text.split("\n")
        if self.lines and self.lines[-1] == "":
            self.lines.pop()
        self.pos = 0

    def next(self, what: str) -> str:
        if self.pos >= len(self.lines):
            raise ModelFormatError(f"truncated model file: expected {what}")
        line = self.lines[self.pos]
        self.pos += 1
        return line

    def peek(self) -> str | None:
        return self.lines[self.pos] if self.pos < len(self.lines) else None


def loads_model(text: str) -> ModelState:
    r = _Reader(text)
    head = r.next("header").split()
    if len(head) != 2 or head[0] != FORMAT_NAME:
        raise ModelFormatError("not a nermodel file")
    if head[1] != str(FORMAT_VERSION):
        raise ModelFormatError(f"unsupported format version {head[1]} (expected {FORMAT_VERSION})")
    method = r.next("method").split(maxsplit=1)
    if method[0] != "method" or len(method) != 2:
        raise ModelFormatError("missing method line")
    meta = {}
    while (line := r.peek()) is not None and line.startswith("meta "):
        _, key, *value = r.next("meta").split(" ", 2)
        meta[key] = value[0] if value else ""
    dims = r.next("dims").split()
    if dims[0] != "dims" or len(dims) != 5:
        raise ModelFormatError("missing dims section")
    d_e, d_c, d_h, window = (int(x) for x in dims[1:])

    lab = r.next("labels").split()
    if lab[0] != "labels" or len(lab) != 2:
        raise ModelFormatError("missing labels section")
    labels = tuple(r.next("label") for _ in range(int(lab[1])))
    try:
        label_set = LabelSet(labels)
    except ValueError as exc:
        raise ModelFormatError(f"bad labels section: {exc}") from None

    voc = r.next("vocabulary").split()
    if voc[0] != "vocabulary" or len(voc) != 4:
        raise ModelFormatError("missing vocabulary section")
    n_vocab, unk_id, min_count = (int(x) for x in voc[1:])
    if unk_id != n_vocab:
        raise ModelFormatError("unk id must equal vocabulary size")
    tokens = [r.next("vocabulary entry") for _ in range(n_vocab)]
    vocabulary = Vocabulary({t: i for i, t in enumerate(tokens)}, min_count=min_count)

    arrays: dict[str, np.ndarray] = {}
    while (line := r.next("param or end")) != "end":
        parts = line.split()
        if parts[0] != "param":
            raise ModelFormatError(f"unexpected line {line[:40]!r}")
        name, ndim = parts[1], int(parts[2])
        shape = tuple(int(x) for x in parts[3:3 + ndim])
        n_rows = shape[0] if ndim == 2 else 1
        rows = []
        for _ in range(n_rows):
            try:
                rows.append([float(x) for x in r.next(f"rows of {name}").split()])
            except ValueError as exc:
                raise ModelFormatError(f"bad number in {name}: {exc}") from None
        try:
            arrays[name] = np.array(rows, dtype=np.float64).reshape(shape)
        except ValueError:
            raise ModelFormatError(f"parameter {name} does not match shape {shape}") from None

    missing = [k for k in ENCODER_KEYS + HEAD_KEYS if k not in arrays]
    if missing:
        raise ModelFormatError(f"missing parameters: {', '.join(missing)}")
    if arrays["head_weight"].shape[0] != len(labels):
        raise ModelFormatError(
            f"{arrays['head_weight'].shape[0]} heads but {len(labels)} labels in header"
        )
    encoder = EncoderParams(arrays["word_emb"], arrays["case_emb"], arrays["hidden_w"],
                            arrays["hidden_b"], window)
    if encoder.dims != (d_e, d_c, d_h, window):
        raise ModelFormatError("parameter shapes disagree with dims header")
    try:
        return ModelState(encoder, arrays["head_weight"], arrays["head_bias"], label_set,
                          vocabulary, method[1], arrays.get("mc_weight"), arrays.get("mc_bias"),
                          meta)
    except ValueError as exc:
        raise ModelFormatError(str(exc)) from None


def load_model(path: str | Path) -> ModelState:
    path = Path(path)
    if path.is_dir():
        path = path / MODEL_FILENAME
    return loads_model(path.read_text(encoding="utf-8"))
