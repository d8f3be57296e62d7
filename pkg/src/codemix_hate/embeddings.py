"""Pre-trained word vectors, task vocabulary and fixed-length index encoding."""

from __future__ import annotations

import hashlib
import logging
import math
import os
from collections import Counter
from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field

import numpy as np

from codemix_hate.errors import DatasetError

logger = logging.getLogger(__name__)

PAD, UNK = "<pad>", "<unk>"
PAD_INDEX, UNK_INDEX = 0, 1
OOV_INIT_RANGE = 0.25


@dataclass
class EmbeddingTable:
    dimension: int
    vectors: dict[str, np.ndarray] = field(default_factory=dict)
    trainable: bool = True

    def __post_init__(self):
        if self.dimension < 1:
            raise ValueError("embedding dimension must be positive")
        for tok, vec in self.vectors.items():
            if vec.shape != (self.dimension,) or not np.all(np.isfinite(vec)):
                raise ValueError(f"bad vector for {tok!r}")

    def __len__(self) -> int:
        return len(self.vectors)

    def __contains__(self, token: str) -> bool:
        return token in self.vectors


def load_embeddings(path: str | os.PathLike, expected_dimension: int,
                    trainable: bool = True) -> EmbeddingTable:
    """Parse a GloVe-style text file: ``token v1 v2 ... vD`` per line."""
    vectors: dict[str, np.ndarray] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.rstrip("\n").rstrip().split(" ")
            if len(parts) == 1 and not parts[0]:
                continue
            token, comps = parts[0], parts[1:]
            if len(comps) != expected_dimension:
                raise DatasetError(
                    f"{path}: line {lineno}: expected {expected_dimension} components, got {len(comps)}"
                )
            try:
                vec = np.array([float(c) for c in comps], dtype=np.float64)
            except ValueError:
                raise DatasetError(f"{path}: line {lineno}: non-numeric component") from None
            if not np.all(np.isfinite(vec)):
                raise DatasetError(f"{path}: line {lineno}: non-finite component")
            if token in vectors:
                logger.warning("%s: line %d: duplicate token %r, keeping the last", path, lineno, token)
            vectors[token] = vec
    return EmbeddingTable(expected_dimension, vectors, trainable)


@dataclass(frozen=True)
class Vocabulary:
    index_to_token: tuple[str, ...] = (PAD, UNK)
    token_to_index: dict[str, int] = field(init=False, compare=False, repr=False)

    def __post_init__(self):
        if self.index_to_token[:2] != (PAD, UNK):
            raise ValueError("vocabulary must start with the padding and unknown markers")
        mapping = {tok: i for i, tok in enumerate(self.index_to_token)}
        if len(mapping) != len(self.index_to_token):
            raise ValueError("vocabulary tokens must be unique")
        object.__setattr__(self, "token_to_index", mapping)

    def __len__(self) -> int:
        return len(self.index_to_token)

    def __contains__(self, token: str) -> bool:
        return token in self.token_to_index

    def index(self, token: str) -> int:
        return self.token_to_index.get(token, UNK_INDEX)

    def digest(self) -> str:
        return hashlib.sha256("\n".join(self.index_to_token).encode("utf-8")).hexdigest()

    def dumps(self) -> str:
        return "".join(f"{tok}\t{i}\n" for i, tok in enumerate(self.index_to_token))

    def save(self, path: str | os.PathLike) -> None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(self.dumps())

    @classmethod
    def load(cls, path: str | os.PathLike) -> Vocabulary:
        rows = []
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                tok, idx = line.rstrip("\n").split("\t")
                rows.append((int(idx), tok))
        return cls(tuple(tok for _, tok in sorted(rows)))


def build_vocab(corpus: Iterable[Sequence[str]], min_frequency: int = 1) -> Vocabulary:
    """Tokens seen at least ``min_frequency`` times, by descending count then alphabetically."""
    counts = Counter(tok for tokens in corpus for tok in tokens)
    counts.pop(PAD, None)
    counts.pop(UNK, None)
    kept = sorted((t for t, c in counts.items() if c >= min_frequency),
                  key=lambda t: (-counts[t], t))
    return Vocabulary((PAD, UNK, *kept))


@dataclass(frozen=True)
class EncodedSequence:
    indices: np.ndarray
    true_length: int

    def __len__(self) -> int:
        return len(self.indices)


def encode_sequence(tokens: Sequence[str], vocab: Vocabulary, max_length: int) -> EncodedSequence:
    if max_length < 1:
        raise ValueError("max_length must be >= 1")
    head = tokens[:max_length]
    indices = np.zeros(max_length, dtype=np.int64)
    indices[: len(head)] = [vocab.index(t) for t in head]
    return EncodedSequence(indices, len(head))


def decode_sequence(seq: EncodedSequence, vocab: Vocabulary) -> list[str]:
    return [vocab.index_to_token[i] for i in seq.indices[: seq.true_length]]


def stack_sequences(seqs: Sequence[EncodedSequence]) -> tuple[np.ndarray, np.ndarray]:
    """Batch arrays ``(indices[B, T], lengths[B])``."""
    return (np.stack([s.indices for s in seqs]),
            np.array([s.true_length for s in seqs], dtype=np.int64))


def encode_corpus(token_lists: Iterable[Sequence[str]], vocab: Vocabulary,
                  max_length: int) -> tuple[np.ndarray, np.ndarray]:
    return stack_sequences([encode_sequence(t, vocab, max_length) for t in token_lists])


def build_embedding_matrix(vocab: Vocabulary, table: EmbeddingTable | None,
                           rng: np.random.Generator, dimension: int | None = None) -> np.ndarray:
    """Rows copied from ``table`` where available, else uniform in [-0.25, 0.25].

    The padding row is zero. Without a table, ``dimension`` sets the width.
    """
    dim = table.dimension if table is not None else dimension
    if dim is None:
        raise ValueError("need an embedding table or an explicit dimension")
    matrix = rng.uniform(-OOV_INIT_RANGE, OOV_INIT_RANGE, size=(len(vocab), dim))
    matrix[PAD_INDEX] = 0.0
    if table is not None:
        for i, tok in enumerate(vocab.index_to_token[2:], start=2):
            vec = table.vectors.get(tok)
            if vec is not None:
                matrix[i] = vec
    return matrix


def coverage(vocab: Vocabulary, table: EmbeddingTable) -> float:
    n = len(vocab) - 2
    if n == 0:
        return math.nan
    return sum(tok in table for tok in vocab.index_to_token[2:]) / n
