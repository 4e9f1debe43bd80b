"""Vocabulary construction, encoding, and persistence."""

import pytest

from crossaug.corpus import Corpus, LabeledSentence, SPECIAL_TOKENS, linearize
from crossaug.vocab import (
    BOS_ID,
    EOS_ID,
    MSK_ID,
    PAD_ID,
    UNK_ID,
    VocabError,
    Vocabulary,
    build_vocab,
    load_vocab,
    save_vocab,
)


def corpus_of(*word_rows):
    sentences = tuple(
        LabeledSentence(tuple(words), tuple("O" for _ in words))
        for words in word_rows
    )
    return Corpus("d", sentences)


class TestReservedIds:
    def test_fixed_ids(self):
        assert (PAD_ID, UNK_ID, BOS_ID, EOS_ID, MSK_ID) == (0, 1, 2, 3, 4)

    def test_specials_occupy_low_ids(self):
        vocab = build_vocab(corpus_of(["a"]))
        assert vocab.symbols[:5] == SPECIAL_TOKENS


class TestBuildVocab:
    def test_frequency_order(self):
        vocab = build_vocab(corpus_of(["b", "a", "a"]))
        assert vocab.symbols[5:] == ("a", "b")

    def test_ties_broken_by_first_seen(self):
        vocab = build_vocab(corpus_of(["z", "y", "x"]))
        assert vocab.symbols[5:] == ("z", "y", "x")

    def test_max_size_cap_excludes_specials(self):
        vocab = build_vocab(corpus_of(["a", "a", "b", "b", "c"]), max_size=2)
        assert len(vocab) == 7
        assert vocab.symbols[5:] == ("a", "b")

    def test_label_tokens_are_ordinary(self):
        corpus = Corpus("d", (LabeledSentence(("Paris",), ("B-GPE",)),))
        vocab = build_vocab(corpus)
        assert "B-GPE" in vocab and "Paris" in vocab

    def test_invalid_max_size(self):
        with pytest.raises(VocabError):
            build_vocab(corpus_of(["a"]), max_size=0)


class TestVocabulary:
    def test_must_start_with_specials(self):
        with pytest.raises(VocabError):
            Vocabulary(("a", "b"))

    def test_duplicate_symbols(self):
        with pytest.raises(VocabError):
            Vocabulary(SPECIAL_TOKENS + ("a", "a"))

    def test_encode_decode_round_trip(self):
        vocab = Vocabulary(SPECIAL_TOKENS + ("hello", "world"))
        ids = vocab.encode(["hello", "world"])
        assert vocab.decode(ids) == ["hello", "world"]

    def test_unknown_encodes_to_unk(self):
        vocab = Vocabulary(SPECIAL_TOKENS + ("hello",))
        assert vocab.encode(["mystery"]) == [UNK_ID]
        assert vocab.id_of("mystery") == UNK_ID

    def test_encode_accepts_linear_sequence(self):
        vocab = build_vocab(corpus_of(["a"]))
        seq = linearize(LabeledSentence(("a",), ("O",)))
        ids = vocab.encode(seq)
        assert ids[0] == BOS_ID and ids[-1] == EOS_ID

    def test_decode_out_of_range(self):
        vocab = Vocabulary(SPECIAL_TOKENS)
        with pytest.raises(VocabError):
            vocab.decode([99])
        with pytest.raises(VocabError):
            vocab.decode([-1])

    def test_contains(self):
        vocab = Vocabulary(SPECIAL_TOKENS + ("a",))
        assert "a" in vocab and "b" not in vocab


class TestPersistence:
    def test_save_load_round_trip(self, tmp_path):
        vocab = build_vocab(corpus_of(["alpha", "beta", "alpha"]))
        path = tmp_path / "d.vocab"
        save_vocab(vocab, path)
        assert load_vocab(path).symbols == vocab.symbols

    def test_line_number_is_id(self, tmp_path):
        vocab = build_vocab(corpus_of(["alpha"]))
        path = tmp_path / "d.vocab"
        save_vocab(vocab, path)
        lines = path.read_text().splitlines()
        assert lines[vocab.id_of("alpha")] == "alpha"

    def test_empty_file(self, tmp_path):
        path = tmp_path / "d.vocab"
        path.write_text("")
        with pytest.raises(VocabError):
            load_vocab(path)
