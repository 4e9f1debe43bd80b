"""Per-domain vocabularies over linearized token streams.

Five reserved symbols occupy fixed low ids in every vocabulary; the rest of
the table holds the most frequent corpus tokens (entity label tokens count as
ordinary tokens). Unknown symbols encode to the UNK id.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

from .corpus import Corpus, LinearSequence, SPECIAL_TOKENS, linearize

PAD_ID = 0
UNK_ID = 1
BOS_ID = 2
EOS_ID = 3
MSK_ID = 4


class VocabError(ValueError):
    """Vocabulary construction or lookup failure."""


@dataclass(frozen=True)
class Vocabulary:
    """Bidirectional symbol/id table; ids are dense and start at the specials."""

    symbols: tuple[str, ...]
    _index: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        symbols = tuple(self.symbols)
        object.__setattr__(self, "symbols", symbols)
        if symbols[: len(SPECIAL_TOKENS)] != SPECIAL_TOKENS:
            raise VocabError(f"vocabulary must start with the reserved symbols {SPECIAL_TOKENS}")
        index = {symbol: i for i, symbol in enumerate(symbols)}
        if len(index) != len(symbols):
            raise VocabError("duplicate symbol in vocabulary")
        object.__setattr__(self, "_index", index)

    def __len__(self) -> int:
        return len(self.symbols)

    def __contains__(self, symbol: str) -> bool:
        return symbol in self._index

    def id_of(self, symbol: str) -> int:
        """The id for `symbol`, falling back to the UNK id."""
        return self._index.get(symbol, UNK_ID)

    def encode(self, tokens) -> list[int]:
        """Map a LinearSequence or iterable of tokens to ids (unknowns go to UNK)."""
        if isinstance(tokens, LinearSequence):
            tokens = tokens.tokens
        index = self._index
        return [index.get(token, UNK_ID) for token in tokens]

    def decode(self, ids) -> list[str]:
        """Map ids back to symbols; ids outside the table raise VocabError."""
        symbols = self.symbols
        out = []
        for i in ids:
            i = int(i)
            if not 0 <= i < len(symbols):
                raise VocabError(f"id {i} outside vocabulary of size {len(symbols)}")
            out.append(symbols[i])
        return out


def build_vocab(corpus: Corpus, max_size: int = 10000) -> Vocabulary:
    """Build a vocabulary from the linearized corpus.

    Keeps the `max_size` most frequent non-special tokens, breaking frequency
    ties by first occurrence in the corpus. The five reserved symbols always
    occupy ids 0-4 and do not count against `max_size`.
    """
    if max_size < 1:
        raise VocabError(f"max_size must be positive, got {max_size}")
    counts: Counter[str] = Counter()
    first_seen: dict[str, int] = {}
    position = 0
    for sentence in corpus:
        for token in linearize(sentence).interior():
            counts[token] += 1
            if token not in first_seen:
                first_seen[token] = position
            position += 1
    for special in SPECIAL_TOKENS:
        counts.pop(special, None)
    ranked = sorted(counts, key=lambda token: (-counts[token], first_seen[token]))
    return Vocabulary(SPECIAL_TOKENS + tuple(ranked[:max_size]))


def save_vocab(vocab: Vocabulary, path) -> None:
    """Write one symbol per line; the line number (from zero) is the id."""
    Path(path).write_text("".join(symbol + "\n" for symbol in vocab.symbols), encoding="utf-8")


def load_vocab(path) -> Vocabulary:
    """Inverse of save_vocab."""
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines:
        raise VocabError(f"{path}: empty vocabulary file")
    return Vocabulary(tuple(lines))
