"""Whitespace tokenizer and vocabulary file round trips."""

import pytest
from hypothesis import given
from hypothesis import strategies as st

from videoground.errors import TokenizerError
from videoground.tokenizer import PAD_TOKEN, UNK_TOKEN, Tokenizer, normalize


@pytest.fixture
def vocab():
    return Tokenizer(["a", "cat", "dog", "sits", "the"])


class TestNormalize:
    def test_lowercases_and_splits(self):
        assert normalize("The  Cat\tsits\n") == ["the", "cat", "sits"]

    def test_punctuation_stays_attached(self):
        assert normalize("sits, quietly.") == ["sits,", "quietly."]


class TestTokenizer:
    def test_reserved_ids(self, vocab):
        assert vocab.pad_id == 0
        assert vocab.unk_id == 1
        assert vocab.id_to_word[:2] == [PAD_TOKEN, UNK_TOKEN]

    def test_encode_known_sentence(self, vocab):
        prompt = vocab.encode("The cat sits")
        assert prompt.raw_text == "The cat sits"
        assert all(t >= 2 for t in prompt.tokens)
        assert vocab.decode(prompt.tokens) == "the cat sits"

    def test_strict_unknown_word_raises(self, vocab):
        with pytest.raises(TokenizerError):
            vocab.encode("the zebra sits")

    def test_non_strict_maps_to_unk(self):
        tok = Tokenizer(["the", "sits"], strict=False)
        prompt = tok.encode("the zebra sits")
        assert prompt.tokens[1] == tok.unk_id

    def test_empty_text_raises(self, vocab):
        with pytest.raises(TokenizerError):
            vocab.encode("   ")

    def test_duplicate_vocabulary_rejected(self):
        with pytest.raises(TokenizerError):
            Tokenizer(["cat", "cat"])

    def test_uppercase_vocabulary_rejected(self):
        with pytest.raises(TokenizerError):
            Tokenizer(["Cat"])

    def test_decode_skips_padding(self, vocab):
        prompt = vocab.encode("the cat")
        assert vocab.decode(list(prompt.tokens) + [0, 0]) == "the cat"

    def test_decode_out_of_range_raises(self, vocab):
        with pytest.raises(TokenizerError):
            vocab.decode([len(vocab)])

    def test_save_load_round_trip(self, vocab, tmp_path):
        path = tmp_path / "vocab.txt"
        vocab.save(path)
        loaded = Tokenizer.load(path)
        assert loaded.id_to_word == vocab.id_to_word
        assert loaded.encode("the cat sits").tokens == vocab.encode("the cat sits").tokens

    def test_from_corpus_sorted_unique(self):
        tok = Tokenizer.from_corpus(["the cat sits", "the dog sits"])
        assert tok.id_to_word[2:] == ["cat", "dog", "sits", "the"]

    @given(st.lists(st.sampled_from(["a", "cat", "dog", "sits", "the"]), min_size=1, max_size=8))
    def test_encode_decode_round_trip(self, words):
        tok = Tokenizer(["a", "cat", "dog", "sits", "the"])
        text = " ".join(words)
        assert tok.decode(tok.encode(text).tokens) == text
