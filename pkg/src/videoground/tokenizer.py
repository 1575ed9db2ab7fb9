"""Whitespace tokenizer with a newline-delimited vocabulary file."""

from __future__ import annotations

from pathlib import Path

from .errors import TokenizerError
from .types import TextPrompt

PAD_TOKEN = "<pad>"
UNK_TOKEN = "<unk>"


def normalize(text: str) -> list[str]:
    """Lowercase and split on whitespace; punctuation stays attached to words."""
    return text.lower().split()


class Tokenizer:
    """Maps words to integer ids.

    Id 0 is reserved for padding and id 1 for unknown words. With
    strict=True (the default) unknown words raise TokenizerError instead of
    mapping to the unknown id, so vocabulary gaps fail loudly.
    """

    def __init__(self, words: list[str], strict: bool = True):
        self.strict = strict
        self.id_to_word = [PAD_TOKEN, UNK_TOKEN]
        seen = set(self.id_to_word)
        for word in words:
            if word in (PAD_TOKEN, UNK_TOKEN):
                continue
            if word != word.lower() or (word and word.split() != [word]):
                raise TokenizerError(f"vocabulary word {word!r} is not lowercase/whitespace-free")
            if word in seen:
                raise TokenizerError(f"duplicate vocabulary word {word!r}")
            seen.add(word)
            self.id_to_word.append(word)
        self.word_to_id = {w: i for i, w in enumerate(self.id_to_word)}

    def __len__(self) -> int:
        return len(self.id_to_word)

    @property
    def pad_id(self) -> int:
        return 0

    @property
    def unk_id(self) -> int:
        return 1

    def encode(self, text: str) -> TextPrompt:
        words = normalize(text)
        if not words:
            raise TokenizerError(f"text {text!r} contains no tokens")
        ids = []
        for word in words:
            if word in self.word_to_id:
                ids.append(self.word_to_id[word])
            elif self.strict:
                raise TokenizerError(f"unknown word {word!r}")
            else:
                ids.append(self.unk_id)
        return TextPrompt(raw_text=text, tokens=tuple(ids))

    def decode(self, ids) -> str:
        words = []
        for i in ids:
            if not 0 <= int(i) < len(self.id_to_word):
                raise TokenizerError(f"token id {i} out of range for vocabulary of {len(self)}")
            if int(i) == self.pad_id:
                continue
            words.append(self.id_to_word[int(i)])
        return " ".join(words)

    def save(self, path: str | Path):
        """One word per line; the pad/unk reserves are implicit and not written."""
        Path(path).write_text("\n".join(self.id_to_word[2:]) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path, strict: bool = True) -> "Tokenizer":
        lines = Path(path).read_text(encoding="utf-8").splitlines()
        return cls([line for line in lines if line.strip()], strict=strict)

    @classmethod
    def from_corpus(cls, texts: list[str], strict: bool = True) -> "Tokenizer":
        words = sorted({w for text in texts for w in normalize(text)})
        return cls(words, strict=strict)
