"""Easy data augmentation (EDA) edits and per-class oversampling.

All operations take and return token lists and draw randomness from a
``numpy.random.Generator``. Index sampling is uniform throughout; random
swap draws its two positions independently, so a draw may swap a position
with itself.
"""

from __future__ import annotations

import hashlib
import os
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from codemix_hate.corpus import ClassLabel, LabeledCorpus, MessageRecord
from codemix_hate.errors import ConfigError, DatasetError
from codemix_hate.preprocess import StopwordList, default_stopwords, resource_path

# Multipliers that turn the original training split (893, 234, 1362) into
# the augmented class counts (3572, 1638, 2724).
DEFAULT_MULTIPLIERS = {
    ClassLabel.NON_OFFENSIVE: 4,
    ClassLabel.OFFENSIVE: 7,
    ClassLabel.HATE_INDUCING: 2,
}

OPERATIONS = ("sr", "ri", "rs", "rd")


@dataclass(frozen=True)
class SynonymLexicon:
    entries: Mapping[str, tuple[str, ...]] = field(default_factory=dict)

    def __post_init__(self):
        entries = {}
        for word, syns in dict(self.entries).items():
            syns = tuple(dict.fromkeys(s for s in syns if s))
            if word != word.lower() or any(s != s.lower() for s in syns):
                raise ValueError(f"lexicon entry {word!r} is not lowercase")
            if not syns or syns == (word,):
                raise ValueError(f"lexicon entry {word!r} has no synonym other than itself")
            entries[word] = syns
        object.__setattr__(self, "entries", entries)

    def __contains__(self, word: str) -> bool:
        return word in self.entries

    def __len__(self) -> int:
        return len(self.entries)

    def synonyms(self, word: str) -> tuple[str, ...]:
        return self.entries.get(word, ())


def load_lexicon(path: str | os.PathLike) -> SynonymLexicon:
    entries: dict[str, tuple[str, ...]] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line.strip() or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise ValueError(f"{path}: line {lineno}: expected 'token<TAB>syn1,syn2,...'")
            syns = [s.strip().lower() for s in parts[1].split(",") if s.strip()]
            entries[parts[0].strip().lower()] = tuple(syns)
    return SynonymLexicon(entries)


def save_lexicon(lexicon: SynonymLexicon, path: str | os.PathLike) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        for word, syns in lexicon.entries.items():
            fh.write(f"{word}\t{','.join(syns)}\n")


@lru_cache(maxsize=None)
def default_lexicon() -> SynonymLexicon:
    return load_lexicon(resource_path("synonyms.tsv"))


def _eligible(tokens: Sequence[str], lexicon: SynonymLexicon, stoplist: StopwordList) -> list[int]:
    return [i for i, t in enumerate(tokens) if t not in stoplist and t in lexicon]


def synonym_replacement(tokens: Sequence[str], n: int, lexicon: SynonymLexicon,
                        stoplist: StopwordList, rng: np.random.Generator) -> list[str]:
    """Replace ``min(n, #eligible)`` distinct non-stopword positions by a synonym."""
    out = list(tokens)
    positions = _eligible(out, lexicon, stoplist)
    k = min(n, len(positions))
    if k <= 0:
        return out
    for idx in rng.choice(len(positions), size=k, replace=False):
        pos = positions[idx]
        syns = lexicon.synonyms(out[pos])
        out[pos] = syns[rng.integers(len(syns))]
    return out


def random_insertion(tokens: Sequence[str], n: int, lexicon: SynonymLexicon,
                     stoplist: StopwordList, rng: np.random.Generator) -> list[str]:
    """Insert a synonym of a random eligible word at a random position, ``n`` times.

    Stops early once no word in the (growing) sentence has a synonym.
    """
    out = list(tokens)
    for _ in range(n):
        positions = _eligible(out, lexicon, stoplist)
        if not positions:
            break
        word = out[positions[rng.integers(len(positions))]]
        syns = lexicon.synonyms(word)
        synonym = syns[rng.integers(len(syns))]
        out.insert(int(rng.integers(len(out) + 1)), synonym)
    return out


def random_swap(tokens: Sequence[str], n: int, rng: np.random.Generator) -> list[str]:
    out = list(tokens)
    if len(out) < 2:
        return out
    for _ in range(n):
        i, j = rng.integers(len(out), size=2)
        out[i], out[j] = out[j], out[i]
    return out


def random_deletion(tokens: Sequence[str], p: float, rng: np.random.Generator) -> list[str]:
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"deletion probability must lie in [0, 1], got {p}")
    if not tokens:
        return []
    keep = rng.random(len(tokens)) >= p
    out = [t for t, k in zip(tokens, keep) if k]
    if not out:
        return [tokens[rng.integers(len(tokens))]]
    return out


@dataclass(frozen=True)
class AugmentConfig:
    alpha: float = 0.1
    deletion_probability: float = 0.1
    multipliers: Mapping[ClassLabel, int] = field(default_factory=lambda: dict(DEFAULT_MULTIPLIERS))
    seed: int = 0
    # fixed edit count per operation; None means max(1, round(alpha * length))
    n_per_op: int | None = None

    def __post_init__(self):
        if not 0.0 <= self.deletion_probability <= 1.0:
            raise ConfigError("augment.deletion_probability must lie in [0, 1]")
        if self.alpha < 0:
            raise ConfigError("augment.alpha must be >= 0")
        if self.n_per_op is not None and self.n_per_op < 0:
            raise ConfigError("augment.n_per_op must be >= 0")
        mult = {ClassLabel(k): int(v) for k, v in dict(self.multipliers).items()}
        if any(v < 1 for v in mult.values()):
            raise ConfigError("augment.multipliers must all be >= 1")
        object.__setattr__(self, "multipliers", mult)

    def edits_for(self, length: int) -> int:
        if self.n_per_op is not None:
            return self.n_per_op
        return max(1, int(np.floor(self.alpha * length + 0.5)))


def record_rng(seed: int, record_id: str, replica: int) -> np.random.Generator:
    """Generator keyed on (seed, record id, replica) so order of processing is irrelevant."""
    digest = hashlib.sha256(record_id.encode("utf-8")).digest()
    key = [int(seed) & 0xFFFFFFFFFFFFFFFF, int.from_bytes(digest[:8], "little"), replica]
    return np.random.default_rng(np.random.SeedSequence(key))


def augment_tokens(tokens: Sequence[str], config: AugmentConfig, lexicon: SynonymLexicon,
                   stoplist: StopwordList, rng: np.random.Generator) -> tuple[str, list[str]]:
    """Apply one uniformly chosen EDA operation; returns (operation name, tokens)."""
    op = OPERATIONS[rng.integers(len(OPERATIONS))]
    n = config.edits_for(len(tokens))
    if op == "sr":
        return op, synonym_replacement(tokens, n, lexicon, stoplist, rng)
    if op == "ri":
        return op, random_insertion(tokens, n, lexicon, stoplist, rng)
    if op == "rs":
        return op, random_swap(tokens, n, rng)
    return op, random_deletion(tokens, config.deletion_probability, rng)


def augment_corpus(train: LabeledCorpus, config: AugmentConfig,
                   lexicon: SynonymLexicon | None = None,
                   stoplist: StopwordList | None = None) -> LabeledCorpus:
    """Oversample ``train`` so class c ends with ``multipliers[c]`` times its size.

    Records are processed (space-joined token) text. Each original keeps its
    place and is followed by its ``multiplier - 1`` augmented copies.
    """
    lexicon = default_lexicon() if lexicon is None else lexicon
    stoplist = default_stopwords() if stoplist is None else stoplist
    for label in ClassLabel:
        if label not in config.multipliers:
            raise ConfigError(f"no multiplier for class {label.name}")
    out: list[MessageRecord] = []
    for rec in train:
        if rec.is_augmented:
            raise DatasetError(f"record {rec.id!r} is already augmented")
        out.append(rec)
        tokens = rec.text.split()
        for replica in range(1, config.multipliers[rec.label]):
            rng = record_rng(config.seed, rec.id, replica)
            _, new_tokens = augment_tokens(tokens, config, lexicon, stoplist, rng)
            text = " ".join(new_tokens) if new_tokens else rec.text
            out.append(MessageRecord(f"{rec.id}~aug{replica}", text, rec.label, rec.id))
    return LabeledCorpus(out)
