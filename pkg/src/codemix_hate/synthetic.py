"""Synthetic three-class corpora with controllable class signal.

Each message mixes class-indicative pseudo-words with shared filler words
and a few real stopwords and dictionary words, then gets the noise real
tweets carry (mentions, URLs, hashtag markers, emoticons, digits) so every
preprocessing stage has work to do.

``separable`` mode draws indicative words only from the message's own class,
so any bag-of-words classifier can reach perfect accuracy. ``hard`` mode
draws each indicative word from the own class with probability
``1 - overlap`` and from a uniformly random class otherwise; at overlap 1.0
the text carries no information about the label.
"""

from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np

from codemix_hate.augment import SynonymLexicon
from codemix_hate.corpus import NUM_CLASSES, ClassLabel, LabeledCorpus, MessageRecord
from codemix_hate.preprocess import Resources

ONSETS = ["b", "bh", "ch", "d", "dh", "g", "gh", "j", "k", "kh", "l", "m", "n",
          "p", "ph", "r", "s", "sh", "t", "th", "v", "y", "z"]
VOWELS = ["a", "aa", "e", "i", "ee", "o", "oo", "u", "ai", "au"]
EMOTICONS = [":)", ":(", ":D", ":/", ";)", ":P", "xD", "<3", "\U0001F621", "\U0001F602"]


@dataclass(frozen=True)
class VocabularySpec:
    indicative_per_class: int = 24
    filler: int = 80
    min_length: int = 6
    max_length: int = 14
    indicative_fraction: float = 0.35
    noise_rate: float = 0.3
    synonyms_per_word: int = 2

    def __post_init__(self):
        if self.indicative_per_class < 3 or self.filler < 3:
            raise ValueError("need at least 3 indicative words per class and 3 fillers")
        if not 1 <= self.min_length <= self.max_length:
            raise ValueError("need 1 <= min_length <= max_length")
        if not 0 < self.indicative_fraction <= 1:
            raise ValueError("indicative_fraction must lie in (0, 1]")


def _pseudo_words(n: int, rng: np.random.Generator, taken: set[str]) -> list[str]:
    words = []
    while len(words) < n:
        syllables = rng.integers(2, 4)
        w = "".join(ONSETS[rng.integers(len(ONSETS))] + VOWELS[rng.integers(len(VOWELS))]
                    for _ in range(syllables))
        if w not in taken:
            taken.add(w)
            words.append(w)
    return words


def _synonyms(group: Sequence[str], k: int, rng: np.random.Generator) -> dict[str, tuple[str, ...]]:
    out = {}
    for w in group:
        others = [o for o in group if o != w]
        pick = rng.choice(len(others), size=min(k, len(others)), replace=False)
        out[w] = tuple(others[i] for i in sorted(pick))
    return out


def _decorate(tokens: list[str], rng: np.random.Generator, rate: float,
              glue: Sequence[str]) -> str:
    tokens = list(tokens)
    for _ in range(rng.binomial(3, rate)):
        tokens.insert(int(rng.integers(len(tokens) + 1)), glue[rng.integers(len(glue))])
    if rng.random() < rate:
        j = rng.integers(len(tokens))
        tokens[j] = "#" + tokens[j].capitalize()
    if rng.random() < rate:
        tokens.insert(0, f"@user{rng.integers(1, 999)}")
    if rng.random() < rate:
        tokens.append(EMOTICONS[rng.integers(len(EMOTICONS))])
    if rng.random() < rate:
        tokens.insert(rng.integers(len(tokens) + 1), str(rng.integers(1, 10_000)))
    if rng.random() < rate:
        tokens.append(f"https://t.co/{rng.integers(10**6, 10**7)}")
    text = " ".join(tokens)
    if rng.random() < 0.5:
        text = text[:1].upper() + text[1:]
    if rng.random() < rate:
        text += "!!"
    return text


def generate_synthetic(counts: Sequence[int], mode: str = "separable", overlap: float = 0.0,
                       seed: int = 0, spec: VocabularySpec | None = None,
                       resources: Resources | None = None) -> tuple[LabeledCorpus, SynonymLexicon]:
    """Corpus with ``counts[c]`` messages of class c plus a matching synonym lexicon.

    Records are interleaved by class so that prefixes stay roughly balanced.
    """
    if mode not in ("separable", "hard"):
        raise ValueError(f"mode must be 'separable' or 'hard', got {mode!r}")
    if not 0.0 <= overlap <= 1.0:
        raise ValueError("overlap must lie in [0, 1]")
    if len(counts) != NUM_CLASSES or any(c < 0 for c in counts):
        raise ValueError("counts must be three non-negative integers")
    spec = spec or VocabularySpec()
    resources = resources or Resources.default()
    rng = np.random.default_rng(seed)

    taken = set(resources.stopwords.words) | set(resources.dictionary.entries)
    for gloss in resources.dictionary.entries.values():
        taken.update(gloss)
    indicative = [_pseudo_words(spec.indicative_per_class, rng, taken) for _ in range(NUM_CLASSES)]
    filler = _pseudo_words(spec.filler, rng, taken)
    # class-neutral real words so stopword removal and transliteration have work
    glue = sorted(resources.stopwords.words)[::4] + sorted(resources.dictionary.entries)[::3]
    lexicon: dict[str, tuple[str, ...]] = {}
    for group in (*indicative, filler):
        lexicon.update(_synonyms(group, spec.synonyms_per_word, rng))

    labels = [c for c in range(NUM_CLASSES) for _ in range(counts[c])]
    # interleave: order by within-class rank scaled to [0, 1), ties by class
    rank = []
    seen = [0] * NUM_CLASSES
    for c in labels:
        rank.append((seen[c] / max(counts[c], 1), c))
        seen[c] += 1
    order = sorted(range(len(labels)), key=lambda i: rank[i])

    records = []
    for n, i in enumerate(order):
        c = labels[i]
        length = int(rng.integers(spec.min_length, spec.max_length + 1))
        k = max(1, int(round(spec.indicative_fraction * length)))
        tokens = [filler[j] for j in rng.integers(len(filler), size=length - k)]
        for _ in range(k):
            source = c
            if mode == "hard" and rng.random() < overlap:
                source = int(rng.integers(NUM_CLASSES))
            words = indicative[source]
            tokens.insert(int(rng.integers(len(tokens) + 1)), words[rng.integers(len(words))])
        records.append(MessageRecord(f"s{n:05d}", _decorate(tokens, rng, spec.noise_rate, glue),
                                     ClassLabel(c)))
    return LabeledCorpus(records), SynonymLexicon(lexicon)


def reference_proportion_counts(total: int) -> tuple[int, int, int]:
    """Split ``total`` in the annotated corpus's 1121 : 303 : 1765 proportions."""
    base = np.array([1121, 303, 1765], dtype=np.float64)
    exact = total * base / base.sum()
    out = np.floor(exact).astype(int)
    for j in np.argsort(-(exact - out), kind="stable")[: total - out.sum()]:
        out[j] += 1
    return tuple(int(v) for v in out)
