"""Vocabulary construction, caption tokenization and id encoding."""

from __future__ import annotations

import string
from collections import Counter
from pathlib import Path
from typing import Iterable, Sequence

from .errors import ContractError, FormatError

PAD, BOS, EOS, UNK = "<pad>", "<bos>", "<eos>", "<unk>"
RESERVED = (PAD, BOS, EOS, UNK)
PAD_ID, BOS_ID, EOS_ID, UNK_ID = 0, 1, 2, 3

_PUNCT = str.maketrans("", "", string.punctuation)


def tokenize(text: str) -> list[str]:
    """Lowercase, drop punctuation characters, split on whitespace."""
    return text.lower().translate(_PUNCT).split()


class Vocabulary:
    """Ordered token list with the four reserved tokens at indices 0-3."""

    def __init__(self, tokens: Sequence[str]):
        tokens = list(tokens)
        if tuple(tokens[:4]) != RESERVED:
            raise FormatError(f"vocabulary must start with {RESERVED}")
        if len(set(tokens)) != len(tokens):
            raise FormatError("vocabulary tokens are not unique")
        if len(tokens) < 5:
            raise FormatError("vocabulary needs at least one non-reserved token")
        self.tokens = tokens
        self.index = {t: i for i, t in enumerate(tokens)}

    def __len__(self):
        return len(self.tokens)

    def __contains__(self, token):
        return token in self.index

    def __eq__(self, other):
        return isinstance(other, Vocabulary) and self.tokens == other.tokens

    def id(self, token: str) -> int:
        return self.index.get(token, UNK_ID)

    def save(self, path) -> None:
        Path(path).write_text("\n".join(self.tokens) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> "Vocabulary":
        lines = Path(path).read_text(encoding="utf-8").split("\n")
        if lines and lines[-1] == "":
            lines.pop()
        return cls(lines)


def build_vocabulary(captions: Iterable[Sequence[str]], min_count: int = 3) -> Vocabulary:
    """Keep tokens seen at least ``min_count`` times.

    Ordering is by descending frequency, ties broken lexicographically, so the
    result does not depend on corpus order.
    """
    if min_count < 1:
        raise ContractError("min_count must be >= 1")
    counts = Counter(tok for cap in captions for tok in cap)
    for r in RESERVED:
        counts.pop(r, None)
    if not counts:
        raise ContractError("cannot build a vocabulary from an empty corpus")
    kept = sorted((t for t, n in counts.items() if n >= min_count), key=lambda t: (-counts[t], t))
    if not kept:
        raise ContractError(f"no token occurs at least {min_count} times")
    return Vocabulary(list(RESERVED) + kept)


def encode_caption(words: Sequence[str], vocab: Vocabulary) -> list[int]:
    return [BOS_ID] + [vocab.id(w) for w in words] + [EOS_ID]


def decode_tokens(ids: Iterable[int], vocab: Vocabulary) -> list[str]:
    out = []
    K = len(vocab)
    for i in ids:
        i = int(i)
        if not 0 <= i < K:
            raise ContractError(f"token id {i} outside vocabulary of size {K}")
        if i > UNK_ID:
            out.append(vocab.tokens[i])
    return out
