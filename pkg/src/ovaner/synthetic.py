"""Synthetic BIO corpora with controllable entity density and learnable cues.

Entities are capitalised "genus" words followed by zero or more lowercase
"epithet" words, usually preceded by a cue word. Lexicons are Zipfian so a
small training sample leaves many test entity words unseen, which forces a
model to lean on case and context rather than memorised words.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .corpus import Corpus, Sentence

_ONSETS = ["b", "c", "d", "f", "g", "h", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z",
           "br", "ch", "cl", "dr", "gr", "ph", "pr", "st", "tr"]
_VOWELS = ["a", "e", "i", "o", "u", "ae", "ei", "ou"]
_CODAS = ["", "", "n", "r", "s", "l", "m", "x"]


@dataclass(frozen=True)
class SyntheticConfig:
    """Defaults approximate s800 proportions: about 1.7% B, 2.3% I, 96% O tokens."""

    entity_type: str = "SPECIES"
    n_common: int = 800
    n_proper: int = 150
    n_genus: int = 400
    n_epithet: int = 400
    base_length: int = 8
    extra_length_mean: float = 16.0
    entities_per_sentence: float = 0.44
    # P(number of epithet tokens = 0, 1, 2, 3); mean 1.35 -> I/B ratio ~ 2.3/1.7
    epithet_counts: tuple[float, ...] = (0.25, 0.35, 0.2, 0.2)
    cue_prob: float = 0.7
    proper_prob: float = 0.03
    zipf: float = 1.1


@dataclass(frozen=True)
class Lexicon:
    common: tuple[str, ...]
    proper: tuple[str, ...]
    genus: tuple[str, ...]
    epithet: tuple[str, ...]
    cues: tuple[str, ...] = ("strain", "species", "isolates", "of", "genus", "cultured")


def _pseudo_words(rng: np.random.Generator, n: int, taken: set[str], min_syl=1, max_syl=3) -> list[str]:
    out = []
    while len(out) < n:
        k = int(rng.integers(min_syl, max_syl + 1))
        w = "".join(_ONSETS[rng.integers(len(_ONSETS))] + _VOWELS[rng.integers(len(_VOWELS))]
                    for _ in range(k)) + _CODAS[rng.integers(len(_CODAS))]
        if w not in taken:
            taken.add(w)
            out.append(w)
    return out


def make_lexicon(seed: int = 0, cfg: SyntheticConfig = SyntheticConfig()) -> Lexicon:
    rng = np.random.default_rng(seed)
    taken = set(Lexicon.__dataclass_fields__["cues"].default)
    return Lexicon(
        common=tuple(_pseudo_words(rng, cfg.n_common, taken, 1, 2)),
        proper=tuple(w.capitalize() for w in _pseudo_words(rng, cfg.n_proper, taken, 2, 3)),
        genus=tuple(w.capitalize() + "us" for w in _pseudo_words(rng, cfg.n_genus, taken, 1, 3)),
        epithet=tuple(w + "ii" for w in _pseudo_words(rng, cfg.n_epithet, taken, 1, 3)),
    )


def _zipf_weights(n: int, s: float) -> np.ndarray:
    w = 1.0 / np.arange(1, n + 1) ** s
    return w / w.sum()


def generate_corpus(n_sentences: int, seed: int, lexicon: Lexicon, name: str = "synthetic",
                    cfg: SyntheticConfig = SyntheticConfig(),
                    entities_per_sentence: float | None = None) -> Corpus:
    rng = np.random.default_rng(seed)
    lam = cfg.entities_per_sentence if entities_per_sentence is None else entities_per_sentence
    w_common = _zipf_weights(len(lexicon.common), cfg.zipf)
    w_genus = _zipf_weights(len(lexicon.genus), cfg.zipf)
    w_epithet = _zipf_weights(len(lexicon.epithet), cfg.zipf)
    b_tag, i_tag = f"B-{cfg.entity_type}", f"I-{cfg.entity_type}"

    sentences = []
    for _ in range(n_sentences):
        n_o = cfg.base_length + int(rng.poisson(cfg.extra_length_mean))
        tokens: list[str] = []
        labels: list[str] = []
        for j in rng.choice(len(lexicon.common), size=n_o, p=w_common):
            if rng.random() < cfg.proper_prob:
                tokens.append(lexicon.proper[rng.integers(len(lexicon.proper))])
            else:
                tokens.append(lexicon.common[j])
            labels.append("O")
        n_ent = int(rng.poisson(lam))
        # insert from the back so earlier positions stay valid
        for pos in sorted(rng.integers(1, n_o + 1, size=n_ent), reverse=True):
            ent_toks = [lexicon.genus[rng.choice(len(lexicon.genus), p=w_genus)]]
            n_epi = int(rng.choice(len(cfg.epithet_counts), p=cfg.epithet_counts))
            ent_toks += [lexicon.epithet[k] for k in rng.choice(len(lexicon.epithet), size=n_epi, p=w_epithet)]
            ent_labels = [b_tag] + [i_tag] * n_epi
            if rng.random() < cfg.cue_prob:
                ent_toks.insert(0, lexicon.cues[rng.integers(len(lexicon.cues))])
                ent_labels.insert(0, "O")
            tokens[pos:pos] = ent_toks
            labels[pos:pos] = ent_labels
        if labels[0] == "O":
            tokens[0] = tokens[0].capitalize()
        sentences.append(Sentence(tuple(tokens), tuple(labels)))
    return Corpus(tuple(sentences), name)


def make_splits(n_train: int, n_dev: int, n_test: int, seed: int = 0,
                cfg: SyntheticConfig = SyntheticConfig(), name: str = "synthetic") -> tuple[Corpus, Corpus, Corpus]:
    """Train/dev/test corpora sharing one lexicon, drawn with independent seeds."""
    lexicon = make_lexicon(seed, cfg)
    return (
        generate_corpus(n_train, seed + 1, lexicon, f"{name}-train", cfg),
        generate_corpus(n_dev, seed + 2, lexicon, f"{name}-dev", cfg),
        generate_corpus(n_test, seed + 3, lexicon, f"{name}-test", cfg),
    )
