"""Tokenization, bigram promotion, and the corpus vocabulary."""

from __future__ import annotations

import re
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from ._io import atomic_write
from .errors import ConfigError, CorpusError, FormatError

# Alphanumeric runs (unicode letters and digits, underscore excluded).
_TOKEN_RE = re.compile(r"[^\W_]+", re.UNICODE)

DEFAULT_MIN_COUNT = 20
DEFAULT_BIGRAM_THRESHOLD = 500

BIGRAM_JOIN = "_"


def tokenize(text: str) -> list[str]:
    """Lowercase, split on non-alphanumeric boundaries, drop tokens shorter than 2."""
    return [t for t in _TOKEN_RE.findall(text.lower()) if len(t) >= 2]


@dataclass
class BigramTable:
    """Adjacent token pairs promoted to single tokens (count >= threshold)."""

    counts: dict[tuple[str, str], int] = field(default_factory=dict)
    threshold: int = DEFAULT_BIGRAM_THRESHOLD

    def __contains__(self, pair: tuple[str, str]) -> bool:
        return pair in self.counts

    def __len__(self) -> int:
        return len(self.counts)

    def save_tsv(self, path) -> None:
        with atomic_write(path, "w") as handle:
            for (a, b), count in sorted(self.counts.items()):
                handle.write(f"{a}\t{b}\t{count}\n")

    @classmethod
    def load_tsv(cls, path, threshold: int = DEFAULT_BIGRAM_THRESHOLD) -> "BigramTable":
        counts: dict[tuple[str, str], int] = {}
        with open(path, "r", encoding="utf-8") as handle:
            for line_no, line in enumerate(handle, start=1):
                if not line.strip():
                    continue
                parts = line.rstrip("\n").split("\t")
                if len(parts) != 3:
                    raise FormatError(f"{path}: line {line_no}: expected 3 tab-separated columns")
                try:
                    counts[(parts[0], parts[1])] = int(parts[2])
                except ValueError:
                    raise FormatError(f"{path}: line {line_no}: count is not an integer") from None
        return cls(counts=counts, threshold=threshold)


def detect_bigrams(docs: Iterable[Sequence[str]], threshold: int = DEFAULT_BIGRAM_THRESHOLD) -> BigramTable:
    """Count adjacent ordered token pairs and keep the ones at or above threshold."""
    if threshold < 1:
        raise ConfigError(f"bigram threshold must be >= 1, got {threshold}")
    counts: Counter[tuple[str, str]] = Counter()
    for doc in docs:
        counts.update(zip(doc, doc[1:]))
    kept = {pair: n for pair, n in counts.items() if n >= threshold}
    return BigramTable(counts=kept, threshold=threshold)


def apply_bigrams(doc: Sequence[str], table: BigramTable) -> list[str]:
    """Greedy left-to-right single pass; a merged token cannot start another merge."""
    if not table.counts:
        return list(doc)
    out: list[str] = []
    i = 0
    n = len(doc)
    while i < n:
        if i + 1 < n and (doc[i], doc[i + 1]) in table:
            out.append(doc[i] + BIGRAM_JOIN + doc[i + 1])
            i += 2
        else:
            out.append(doc[i])
            i += 1
    return out


class Vocabulary:
    """Bijective term<->index map with corpus and document frequencies.

    Indices are assigned in descending corpus-frequency order, ties broken
    lexicographically, so every downstream artifact is byte-reproducible.
    """

    def __init__(self, terms: Sequence[str], corpus_freq: Sequence[int], doc_freq: Sequence[int]):
        if not (len(terms) == len(corpus_freq) == len(doc_freq)):
            raise ConfigError("terms, corpus_freq and doc_freq must have equal length")
        self.terms: list[str] = list(terms)
        self.index: dict[str, int] = {t: i for i, t in enumerate(self.terms)}
        if len(self.index) != len(self.terms):
            raise CorpusError("vocabulary terms are not unique")
        self.corpus_freq = np.asarray(corpus_freq, dtype=np.int64)
        self.doc_freq = np.asarray(doc_freq, dtype=np.int64)

    def __len__(self) -> int:
        return len(self.terms)

    def __contains__(self, term: str) -> bool:
        return term in self.index

    def index_of(self, term: str) -> int:
        return self.index[term]

    def term_of(self, idx: int) -> str:
        return self.terms[idx]

    def encode(self, tokens: Iterable[str]) -> list[int]:
        """Map tokens to indices, dropping out-of-vocabulary tokens."""
        index = self.index
        return [index[t] for t in tokens if t in index]

    def save_tsv(self, path) -> None:
        with atomic_write(path, "w") as handle:
            for i, term in enumerate(self.terms):
                handle.write(f"{term}\t{i}\t{self.corpus_freq[i]}\t{self.doc_freq[i]}\n")

    @classmethod
    def load_tsv(cls, path) -> "Vocabulary":
        rows: list[tuple[str, int, int, int]] = []
        with open(path, "r", encoding="utf-8") as handle:
            for line_no, line in enumerate(handle, start=1):
                if not line.strip():
                    continue
                parts = line.rstrip("\n").split("\t")
                if len(parts) != 4:
                    raise FormatError(f"{path}: line {line_no}: expected 4 tab-separated columns")
                try:
                    rows.append((parts[0], int(parts[1]), int(parts[2]), int(parts[3])))
                except ValueError:
                    raise FormatError(f"{path}: line {line_no}: non-integer column") from None
        rows.sort(key=lambda r: r[1])
        if [r[1] for r in rows] != list(range(len(rows))):
            raise FormatError(f"{path}: vocabulary indices are not a contiguous 0-based range")
        return cls([r[0] for r in rows], [r[2] for r in rows], [r[3] for r in rows])


def build_vocabulary(docs: Sequence[Sequence[str]], min_count: int = DEFAULT_MIN_COUNT) -> Vocabulary:
    """Build the vocabulary of terms occurring at least min_count times."""
    if min_count < 1:
        raise ConfigError(f"min_count must be >= 1, got {min_count}")
    freq: Counter[str] = Counter()
    df: Counter[str] = Counter()
    for doc in docs:
        freq.update(doc)
        df.update(set(doc))
    kept = sorted((t for t, n in freq.items() if n >= min_count), key=lambda t: (-freq[t], t))
    if not kept:
        raise CorpusError(f"no term occurs at least {min_count} times; vocabulary is empty")
    return Vocabulary(kept, [freq[t] for t in kept], [df[t] for t in kept])
