import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ovaner.corpus import (Corpus, CorpusError, LabelError, LabelSet, ParseError, Sentence,
                           binarize_labels, build_label_set, build_vocabulary, case_pattern,
                           corpus_stats, format_conll, load_conll, parse_conll, write_conll)

TYPES = ("PER", "LOC", "ORG")
tags = st.sampled_from(["O"] + [f"{p}-{t}" for p in "BI" for t in TYPES])
sentences = st.lists(tags, min_size=1, max_size=12).map(
    lambda labels: Sentence(tuple(f"w{i}" for i in range(len(labels))), tuple(labels)))
corpora = st.lists(sentences, min_size=1, max_size=8).map(lambda ss: Corpus(tuple(ss)))


class TestLoadConll:
    def test_two_token_example(self, tmp_path):
        path = tmp_path / "a.conll"
        path.write_text("EU NNP B-ORG\nrejects VBZ O\n\n", encoding="utf-8")
        corpus = load_conll(path)
        assert len(corpus) == 1
        assert corpus[0].tokens == ("EU", "rejects")
        assert corpus[0].labels == ("B-ORG", "O")

    def test_empty_file(self, tmp_path):
        path = tmp_path / "empty.conll"
        path.write_text("", encoding="utf-8")
        with pytest.raises(CorpusError, match="no sentences"):
            load_conll(path)

    def test_docstart_and_missing_final_blank(self):
        corpus = parse_conll(["-DOCSTART- -X- O O\n", "\n", "a x O\n", "b y B-PER\n", "\n", "c z I-PER"])
        assert [s.tokens for s in corpus] == [("a", "b"), ("c",)]

    def test_single_column_is_parse_error_with_line(self):
        with pytest.raises(ParseError) as info:
            parse_conll(["a O\n", "lonely\n"])
        assert info.value.line == 2
        assert "line 2" in str(info.value)

    @pytest.mark.parametrize("tag", ["E-PER", "S-LOC", "B-", "X", "b-PER"])
    def test_non_bio_tags_rejected(self, tag):
        with pytest.raises(LabelError, match=tag):
            parse_conll([f"tok {tag}\n"])

    def test_middle_columns_dropped(self):
        corpus = parse_conll(["EU NNP B-NP B-ORG\n"])
        assert format_conll(corpus) == "EU B-ORG\n\n"


class TestSentence:
    def test_length_mismatch(self):
        with pytest.raises(CorpusError):
            Sentence(("a", "b"), ("O",))

    def test_empty(self):
        with pytest.raises(CorpusError):
            Sentence((), ())


@settings(max_examples=50)
@given(corpus=corpora)
def test_conll_round_trip(tmp_path_factory, corpus):
    path = tmp_path_factory.mktemp("rt") / "c.conll"
    write_conll(corpus, path)
    back = load_conll(path)
    assert [(s.tokens, s.labels) for s in back] == [(s.tokens, s.labels) for s in corpus]


class TestLabelSet:
    def test_ordering(self):
        corpus = Corpus((Sentence(("a", "b", "c"), ("I-PER", "O", "B-PER")),))
        assert build_label_set(corpus).labels == ("O", "B-PER", "I-PER")

    def test_only_outside(self):
        ls = build_label_set(Corpus((Sentence(("a",), ("O",)),)))
        assert ls.labels == ("O",) and ls.K == 1

    def test_outside_added_when_absent(self):
        ls = build_label_set(Corpus((Sentence(("a",), ("B-X",)),)))
        assert ls.labels == ("O", "B-X")

    def test_index_bijection(self, tiny_corpus):
        ls = build_label_set(tiny_corpus)
        assert sorted(ls.index.values()) == list(range(ls.K))
        assert all(ls.labels[i] == t for t, i in ls.index.items())

    def test_conll_style_groups(self):
        tags = ["O"] + [f"{p}-{t}" for p in "BI" for t in ("LOC", "MISC", "ORG", "PER")]
        ls = build_label_set(Corpus((Sentence(tuple(tags), tuple(tags)),)))
        assert ls.K == 9
        assert [len(g) for g in ls.prefix_groups()] == [4, 4, 1]

    def test_rejects_unsorted(self):
        with pytest.raises(CorpusError):
            LabelSet(("O", "I-X", "B-X"))

    @given(corpus=corpora, seed=st.integers(0, 2**32 - 1))
    def test_idempotent_and_permutation_invariant(self, corpus, seed):
        perm = np.random.default_rng(seed).permutation(len(corpus))
        shuffled = Corpus(tuple(corpus[i] for i in perm))
        assert build_label_set(corpus) == build_label_set(shuffled) == build_label_set(corpus)


class TestVocabulary:
    def test_threshold(self):
        corpus = Corpus((Sentence(("a", "a", "b"), ("O", "O", "O")),))
        vocab = build_vocabulary(corpus, min_count=2)
        assert "a" in vocab.word_ids
        assert vocab.word_id("b") == vocab.unk_id

    def test_min_count_one_keeps_all_lowercased(self, tiny_corpus):
        vocab = build_vocabulary(tiny_corpus, 1)
        expected = {t.lower() for s in tiny_corpus for t in s.tokens}
        assert set(vocab.word_ids) == expected
        assert sorted(vocab.word_ids.values()) == list(range(len(expected)))
        assert vocab.unk_id not in vocab.word_ids.values()

    def test_lookup_lowercases_and_cases(self):
        vocab = build_vocabulary(Corpus((Sentence(("paris",), ("O",)),)))
        word, case = vocab.lookup("Paris")
        assert word == vocab.word_ids["paris"]
        assert case == vocab.case_ids["init-cap"]

    @pytest.mark.parametrize("token,pattern", [
        ("paris", "all-lower"), ("USA", "all-upper"), ("Paris", "init-cap"),
        ("1996-08-22", "has-digit"), ("A1", "has-digit"), ("McDonald", "other"),
        (",", "other"), ("中文", "other"),
    ])
    def test_case_patterns(self, token, pattern):
        assert case_pattern(token) == pattern

    def test_invalid_min_count(self, tiny_corpus):
        with pytest.raises(ValueError):
            build_vocabulary(tiny_corpus, 0)


class TestStats:
    def test_all_outside(self):
        stats = corpus_stats(Corpus((Sentence(("a", "b"), ("O", "O")),)))
        assert (stats.pct_b, stats.pct_i, stats.pct_o) == (0.0, 0.0, 100.0)

    def test_tiny(self, tiny_corpus):
        stats = corpus_stats(tiny_corpus)
        assert (stats.n_sentences, stats.n_tokens, stats.n_labels) == (4, 11, 6)
        assert (stats.n_b, stats.n_i, stats.n_o) == (4, 1, 6)
        assert stats.n_entity_sentences == 3

    @given(corpus=corpora)
    def test_counts_partition_tokens(self, corpus):
        stats = corpus_stats(corpus)
        assert stats.n_b + stats.n_i + stats.n_o == stats.n_tokens
        rounded = [float(x) for x in stats.row()[4:]]
        assert abs(sum(rounded) - 100.0) <= 0.1 + 1e-9


class TestBinarize:
    def setup_method(self):
        self.sentence = Sentence(("a", "b", "c"), ("B-PER", "O", "O"))
        self.ls = LabelSet(("O", "B-PER", "I-PER"))

    def test_head_b(self):
        assert binarize_labels(self.sentence, "B-PER", self.ls).tolist() == [1, -1, -1]

    def test_head_o(self):
        assert binarize_labels(self.sentence, "O", self.ls).tolist() == [-1, 1, 1]

    def test_absent_head(self):
        assert binarize_labels(self.sentence, "I-PER", self.ls).tolist() == [-1, -1, -1]

    def test_unknown_label(self):
        with pytest.raises(KeyError):
            binarize_labels(self.sentence, "B-LOC", self.ls)

    @given(sentence=sentences)
    def test_partition_over_heads(self, sentence):
        ls = LabelSet(("O", *sorted(f"{p}-{t}" for p, t in itertools.product("BI", TYPES))))
        stacked = np.stack([binarize_labels(sentence, lab, ls) for lab in ls.labels])
        assert ((stacked == 1).sum(axis=0) == 1).all()
