"""CoNLL ingestion, BIO validation, label sets, vocabularies and corpus statistics."""

from __future__ import annotations

import re
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

OUTSIDE = "O"
CASE_PATTERNS = ("all-lower", "all-upper", "init-cap", "has-digit", "other")

_TAG_RE = re.compile(r"^[BI]-\S+$")


class CorpusError(ValueError):
    """Raised for malformed or invalid corpus input."""


class ParseError(CorpusError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class LabelError(CorpusError):
    def __init__(self, tag: str, where: str = ""):
        self.tag = tag
        suffix = f" ({where})" if where else ""
        super().__init__(f"invalid BIO tag {tag!r}{suffix}")


def is_valid_tag(tag: str) -> bool:
    return tag == OUTSIDE or bool(_TAG_RE.match(tag))


@dataclass(frozen=True)
class Sentence:
    tokens: tuple[str, ...]
    labels: tuple[str, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "tokens", tuple(self.tokens))
        object.__setattr__(self, "labels", tuple(self.labels))
        if not self.tokens:
            raise CorpusError("sentence has no tokens")
        if len(self.tokens) != len(self.labels):
            raise CorpusError(
                f"{len(self.tokens)} tokens but {len(self.labels)} labels"
            )
        for tag in self.labels:
            if not is_valid_tag(tag):
                raise LabelError(tag)

    def __len__(self) -> int:
        return len(self.tokens)

    @property
    def n_entity_tokens(self) -> int:
        return sum(tag != OUTSIDE for tag in self.labels)


@dataclass(frozen=True)
class Corpus:
    sentences: tuple[Sentence, ...]
    name: str = "corpus"

    def __post_init__(self) -> None:
        object.__setattr__(self, "sentences", tuple(self.sentences))
        if not self.sentences:
            raise CorpusError("no sentences")

    def __len__(self) -> int:
        return len(self.sentences)

    def __iter__(self):
        return iter(self.sentences)

    def __getitem__(self, i: int) -> Sentence:
        return self.sentences[i]

    @property
    def n_tokens(self) -> int:
        return sum(len(s) for s in self.sentences)

    def tags(self) -> set[str]:
        return {tag for s in self.sentences for tag in s.labels}


def parse_conll(lines: Iterable[str], name: str = "corpus") -> Corpus:
    """Parse CoNLL rows: token in the first column, tag in the last one.

    Middle columns are dropped. Blank lines end sentences and rows starting
    with ``-DOCSTART-`` are skipped.
    """
    sentences: list[Sentence] = []
    tokens: list[str] = []
    labels: list[str] = []
    for lineno, raw in enumerate(lines, start=1):
        line = raw.rstrip("\r\n")
        if not line.strip():
            if tokens:
                sentences.append(Sentence(tokens, labels))
                tokens, labels = [], []
            continue
        if line.startswith("-DOCSTART-"):
            continue
        cols = line.split()
        if len(cols) < 2:
            raise ParseError(f"expected at least 2 columns, got {len(cols)}", lineno)
        tag = cols[-1]
        if not is_valid_tag(tag):
            raise LabelError(tag, f"line {lineno}")
        tokens.append(cols[0])
        labels.append(tag)
    if tokens:
        sentences.append(Sentence(tokens, labels))
    if not sentences:
        raise CorpusError("no sentences")
    return Corpus(tuple(sentences), name)


def load_conll(path: str | Path, name: str | None = None) -> Corpus:
    path = Path(path)
    with path.open(encoding="utf-8") as fh:
        return parse_conll(fh, name=name or path.stem)


def format_conll(corpus: Corpus) -> str:
    out = []
    for sentence in corpus:
        for token, tag in zip(sentence.tokens, sentence.labels):
            out.append(f"{token} {tag}\n")
        out.append("\n")
    return "".join(out)


def write_conll(corpus: Corpus, path: str | Path) -> None:
    """Write two-column ``token tag`` rows; extra input columns are not kept."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(format_conll(corpus))


@dataclass(frozen=True)
class LabelSet:
    labels: tuple[str, ...]
    index: Mapping[str, int] = field(init=False, compare=False, repr=False)

    def __post_init__(self) -> None:
        labels = tuple(self.labels)
        if not labels or labels[0] != OUTSIDE:
            raise CorpusError("label set must start with 'O'")
        if list(labels[1:]) != sorted(set(labels[1:])) or OUTSIDE in labels[1:]:
            raise CorpusError("labels after 'O' must be unique and sorted")
        for tag in labels:
            if not is_valid_tag(tag):
                raise LabelError(tag)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "index", {t: i for i, t in enumerate(labels)})

    def __len__(self) -> int:
        return len(self.labels)

    def __contains__(self, tag: object) -> bool:
        return tag in self.index

    @property
    def K(self) -> int:
        return len(self.labels)

    def prefix_groups(self, prefixes: Sequence[str] = ("B", "I", "O")) -> list[list[int]]:
        """Head indices grouped by tag prefix, empty groups dropped."""
        groups = []
        for prefix in prefixes:
            members = [k for k, tag in enumerate(self.labels) if tag.startswith(prefix)]
            if members:
                groups.append(members)
        return groups


def label_set_from_tags(tags: Iterable[str]) -> LabelSet:
    rest = sorted(set(tags) - {OUTSIDE})
    return LabelSet((OUTSIDE, *rest))


def build_label_set(corpus: Corpus) -> LabelSet:
    return label_set_from_tags(corpus.tags())


def case_pattern(token: str) -> str:
    if any(ch.isdigit() for ch in token):
        return "has-digit"
    if token.isupper():
        return "all-upper"
    if token.islower():
        return "all-lower"
    if token[:1].isupper() and not any(ch.isupper() for ch in token[1:]):
        return "init-cap"
    return "other"


@dataclass(frozen=True)
class Vocabulary:
    """Lowercased word ids; the unknown id is ``len(word_ids)``."""

    word_ids: Mapping[str, int]
    min_count: int = 1
    case_ids: Mapping[str, int] = field(
        default_factory=lambda: {p: i for i, p in enumerate(CASE_PATTERNS)}
    )

    @property
    def unk_id(self) -> int:
        return len(self.word_ids)

    def __len__(self) -> int:
        return len(self.word_ids)

    def word_id(self, token: str) -> int:
        return self.word_ids.get(token.lower(), self.unk_id)

    def case_id(self, token: str) -> int:
        return self.case_ids[case_pattern(token)]

    def lookup(self, token: str) -> tuple[int, int]:
        return self.word_id(token), self.case_id(token)

    def ids(self, tokens: Sequence[str]) -> tuple[np.ndarray, np.ndarray]:
        words = np.fromiter((self.word_id(t) for t in tokens), dtype=np.int64, count=len(tokens))
        cases = np.fromiter((self.case_id(t) for t in tokens), dtype=np.int64, count=len(tokens))
        return words, cases

    def tokens(self) -> list[str]:
        return sorted(self.word_ids, key=self.word_ids.__getitem__)


def build_vocabulary(corpus: Corpus, min_count: int = 1) -> Vocabulary:
    if min_count < 1:
        raise ValueError("min_count must be >= 1")
    counts = Counter(t.lower() for s in corpus for t in s.tokens)
    kept = sorted(w for w, c in counts.items() if c >= min_count)
    return Vocabulary({w: i for i, w in enumerate(kept)}, min_count=min_count)


def binarize_labels(sentence: Sentence, label: str, label_set: LabelSet) -> np.ndarray:
    if label not in label_set:
        raise KeyError(f"label {label!r} not in label set")
    return np.array([1 if tag == label else -1 for tag in sentence.labels], dtype=np.int64)


@dataclass(frozen=True)
class CorpusStats:
    name: str
    n_sentences: int
    n_tokens: int
    n_labels: int
    n_b: int
    n_i: int
    n_o: int
    n_entity_sentences: int

    @property
    def pct_b(self) -> float:
        return 100.0 * self.n_b / self.n_tokens

    @property
    def pct_i(self) -> float:
        return 100.0 * self.n_i / self.n_tokens

    @property
    def pct_o(self) -> float:
        return 100.0 * self.n_o / self.n_tokens

    @property
    def pct_entity_sentences(self) -> float:
        return 100.0 * self.n_entity_sentences / self.n_sentences

    HEADER = ("name", "sentences", "tokens", "K", "%B", "%I", "%O")

    def row(self) -> tuple[str, ...]:
        return (
            self.name,
            str(self.n_sentences),
            str(self.n_tokens),
            str(self.n_labels),
            f"{self.pct_b:.1f}",
            f"{self.pct_i:.1f}",
            f"{self.pct_o:.1f}",
        )


def corpus_stats(corpus: Corpus) -> CorpusStats:
    prefixes = Counter(tag[0] for s in corpus for tag in s.labels)
    return CorpusStats(
        name=corpus.name,
        n_sentences=len(corpus),
        n_tokens=corpus.n_tokens,
        n_labels=len(build_label_set(corpus)),
        n_b=prefixes["B"],
        n_i=prefixes["I"],
        n_o=prefixes["O"],
        n_entity_sentences=sum(s.n_entity_tokens > 0 for s in corpus),
    )


def format_stats_table(stats: Sequence[CorpusStats]) -> str:
    rows = [CorpusStats.HEADER] + [s.row() for s in stats]
    widths = [max(len(r[i]) for r in rows) for i in range(len(CorpusStats.HEADER))]
    lines = ["  ".join(cell.ljust(w) for cell, w in zip(r, widths)).rstrip() for r in rows]
    return "\n".join(lines) + "\n"
