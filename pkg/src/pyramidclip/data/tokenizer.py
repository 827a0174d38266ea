"""Word-level tokenizer over a fixed vocabulary file."""

from __future__ import annotations

import re
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

import numpy as np

CONTEXT_LENGTH = 77
PAD, BOS, EOS, UNK = 0, 1, 2, 3
SPECIAL_TOKENS = ("<pad>", "<bos>", "<eos>", "<unk>")

_WORD = re.compile(r"\w+|[^\w\s]")


def split_words(text: str) -> list[str]:
    return _WORD.findall(text.lower())


class Vocabulary:
    """Token list whose line number is the id; ids 0-3 are PAD, BOS, EOS, UNK."""

    def __init__(self, tokens: Iterable[str]):
        tokens = list(tokens)
        if tuple(tokens[:4]) != SPECIAL_TOKENS:
            raise ValueError(f"vocabulary must start with {SPECIAL_TOKENS}")
        if len(set(tokens)) != len(tokens):
            raise ValueError("vocabulary contains duplicate tokens")
        self.tokens = tokens
        self.index = {t: i for i, t in enumerate(tokens)}

    @classmethod
    def from_words(cls, words: Iterable[str]) -> Vocabulary:
        seen = dict.fromkeys(w for word in words for w in split_words(word))
        return cls(list(SPECIAL_TOKENS) + [w for w in seen if w not in SPECIAL_TOKENS])

    @classmethod
    def load(cls, path) -> Vocabulary:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
        return cls(lines)

    def save(self, path) -> None:
        Path(path).write_text("\n".join(self.tokens) + "\n", encoding="utf-8")

    def __len__(self) -> int:
        return len(self.tokens)

    def __contains__(self, word: str) -> bool:
        return word in self.index

    def id(self, word: str) -> int:
        return self.index.get(word, UNK)


@dataclass(frozen=True, eq=False)
class TokenSequence:
    ids: np.ndarray
    true_length: int

    def __post_init__(self):
        if self.ids.ndim != 1:
            raise ValueError("token ids must be one-dimensional")
        n = self.true_length
        if not 2 <= n <= len(self.ids):
            raise ValueError(f"true_length {n} outside [2, {len(self.ids)}]")
        if self.ids[0] != BOS or self.ids[n - 1] != EOS or np.any(self.ids[n:] != PAD):
            raise ValueError("token sequence must be BOS ... EOS followed by PAD")


def tokenize(text: str, vocab: Vocabulary, context_length: int = CONTEXT_LENGTH) -> TokenSequence:
    """BOS + word ids + EOS, truncated to ``context_length`` and PAD-filled."""
    words = split_words(text)[: context_length - 2]
    ids = np.full(context_length, PAD, dtype=np.int64)
    ids[0] = BOS
    ids[1:1 + len(words)] = [vocab.id(w) for w in words]
    ids[1 + len(words)] = EOS
    return TokenSequence(ids, len(words) + 2)


def detokenize(tokens: TokenSequence, vocab: Vocabulary) -> str:
    body = tokens.ids[1:tokens.true_length - 1]
    return " ".join(vocab.tokens[int(i)] for i in body)
