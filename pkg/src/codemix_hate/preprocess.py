"""Message cleaning, stopword filtering and dictionary transliteration.

The cleaning rules, applied in order:

1. URLs (``http://``, ``https://``, ``www.``) are removed.
2. ``@mentions`` are removed.
3. ASCII emoticons are removed. The pattern is ``EMOTICON_RE`` below: eyes
   ``[:;=8]`` with an optional nose and a mouth, their mirrored forms,
   ``xD``/``XD`` and ``<3``.
4. Text is lowercased.
5. Every character that is not a Unicode letter (category L*) or combining
   mark (M*) becomes a space. This drops digits, punctuation, the ``#``
   hashtag marker (the tag word survives), symbols and emoji.
6. Whitespace runs collapse to single spaces; ends are trimmed.
"""

from __future__ import annotations

import os
import re
import unicodedata
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources as importlib_resources
from pathlib import Path

URL_RE = re.compile(r"(?:https?://|www\.)\S*", re.IGNORECASE)
MENTION_RE = re.compile(r"@\w+")
EMOTICON_RE = re.compile(
    r"""
    (?:[:;=8][-o^'"]?[)(\]\[/\\|*3oO0@$pP](?![a-zA-Z]))   # :)  ;-(  :/  :P
    | (?:[:;=8][-o^'"]?[dD](?![a-zA-Z]))                  # :D
    | (?:(?<![a-zA-Z])[)(\]\[/\\|][-o^'"]?[:;=8])          # (:  ):
    | (?:(?<![a-zA-Z])[xX]D(?![a-zA-Z]))                  # xD
    | <3
    """,
    re.VERBOSE,
)
_SPACE_RE = re.compile(r"\s+")


def _keep_char(ch: str) -> str:
    return ch if unicodedata.category(ch)[0] in "LM" else " "


def clean_text(raw: str) -> str:
    text = URL_RE.sub(" ", raw)
    text = MENTION_RE.sub(" ", text)
    text = EMOTICON_RE.sub(" ", text)
    text = "".join(_keep_char(ch) for ch in text.lower())
    return _SPACE_RE.sub(" ", text).strip()


def tokenize(cleaned: str) -> list[str]:
    return cleaned.split()


def remove_stopwords(tokens: Sequence[str], stoplist: StopwordList) -> list[str]:
    words = stoplist.words
    return [t for t in tokens if t not in words]


def transliterate(tokens: Sequence[str], dictionary: TransliterationDictionary) -> list[str]:
    entries = dictionary.entries
    out: list[str] = []
    for tok in tokens:
        out.extend(entries.get(tok, (tok,)))
    return out


@dataclass(frozen=True)
class StopwordList:
    words: frozenset[str] = frozenset()

    def __post_init__(self):
        object.__setattr__(self, "words", frozenset(self.words))
        for w in self.words:
            if w != w.lower() or not w or any(c.isspace() for c in w):
                raise ValueError(f"invalid stopword {w!r}")

    def __contains__(self, word: str) -> bool:
        return word in self.words

    def __len__(self) -> int:
        return len(self.words)


@dataclass(frozen=True)
class TransliterationDictionary:
    entries: Mapping[str, tuple[str, ...]] = field(default_factory=dict)

    def __post_init__(self):
        entries = {}
        for key, value in dict(self.entries).items():
            value = tuple(value)
            if key != key.lower() or not key:
                raise ValueError(f"dictionary key must be lowercase: {key!r}")
            if not value or any(not v for v in value):
                raise ValueError(f"dictionary entry {key!r} has an empty gloss")
            entries[key] = value
        object.__setattr__(self, "entries", entries)

    def __len__(self) -> int:
        return len(self.entries)

    def __contains__(self, token: str) -> bool:
        return token in self.entries


def _data_lines(path: str | os.PathLike) -> Iterable[tuple[int, str]]:
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if line.strip() and not line.lstrip().startswith("#"):
                yield lineno, line


def load_stopwords(path: str | os.PathLike) -> StopwordList:
    return StopwordList(frozenset(line.strip().lower() for _, line in _data_lines(path)))


def load_dictionary(path: str | os.PathLike) -> TransliterationDictionary:
    entries: dict[str, tuple[str, ...]] = {}
    for lineno, line in _data_lines(path):
        parts = line.split("\t")
        if len(parts) != 2 or not parts[1].split():
            raise ValueError(f"{path}: line {lineno}: expected 'source<TAB>target tokens'")
        entries[parts[0].strip().lower()] = tuple(parts[1].lower().split())
    return TransliterationDictionary(entries)


def resource_path(name: str) -> Path:
    return Path(str(importlib_resources.files("codemix_hate") / "resources" / name))


@lru_cache(maxsize=None)
def default_stopwords() -> StopwordList:
    return load_stopwords(resource_path("stopwords.txt"))


@lru_cache(maxsize=None)
def default_dictionary() -> TransliterationDictionary:
    return load_dictionary(resource_path("hinglish_en.tsv"))


@dataclass(frozen=True)
class Resources:
    """Stoplist plus dictionary, checked so processed output is a fixed point.

    Every gloss token must already be clean, must not be a stopword and must
    not itself be a dictionary key; otherwise re-processing processed text
    would change it.
    """

    stopwords: StopwordList
    dictionary: TransliterationDictionary

    def __post_init__(self):
        for key, gloss in self.dictionary.entries.items():
            for tok in gloss:
                if tok in self.stopwords or tok in self.dictionary or clean_text(tok) != tok:
                    raise ValueError(
                        f"dictionary gloss {tok!r} (for {key!r}) is a stopword, a key, or not clean"
                    )

    @classmethod
    def default(cls) -> Resources:
        return cls(default_stopwords(), default_dictionary())

    @classmethod
    def from_paths(cls, stopwords: str | os.PathLike | None = None,
                   dictionary: str | os.PathLike | None = None) -> Resources:
        return cls(
            load_stopwords(stopwords) if stopwords else default_stopwords(),
            load_dictionary(dictionary) if dictionary else default_dictionary(),
        )


@dataclass(frozen=True)
class ProcessedMessage:
    tokens: tuple[str, ...]
    # token counts after (tokenize, remove_stopwords, transliterate)
    stage_trace: tuple[int, int, int] | None = None

    @property
    def text(self) -> str:
        return " ".join(self.tokens)

    def __len__(self) -> int:
        return len(self.tokens)


STAGES = ("tokenize", "remove_stopwords", "transliterate")


def preprocess_pipeline(raw: str, resources: Resources, audit: bool = False) -> ProcessedMessage:
    tokens = tokenize(clean_text(raw))
    kept = remove_stopwords(tokens, resources.stopwords)
    final = transliterate(kept, resources.dictionary)
    trace = (len(tokens), len(kept), len(final)) if audit else None
    return ProcessedMessage(tuple(final), trace)
