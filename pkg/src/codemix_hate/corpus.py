"""Labeled message corpora: loading, saving, class tallies and seeded splits."""

from __future__ import annotations

import csv
import enum
import hashlib
import io
import json
import os
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass, field
from decimal import ROUND_HALF_UP, Decimal
from pathlib import Path

import numpy as np

from codemix_hate.errors import DatasetError


class ClassLabel(enum.IntEnum):
    NON_OFFENSIVE = 0
    OFFENSIVE = 1
    HATE_INDUCING = 2


NUM_CLASSES = len(ClassLabel)

DEFAULT_LABEL_NAMES: dict[ClassLabel, str] = {
    ClassLabel.NON_OFFENSIVE: "Non-Offensive",
    ClassLabel.OFFENSIVE: "Offensive",
    ClassLabel.HATE_INDUCING: "Hate-Inducing",
}

ORIGINAL = "original"


@dataclass(frozen=True)
class MessageRecord:
    id: str
    text: str
    label: ClassLabel
    # None for original records, else the id of the record it was derived from
    source_id: str | None = None

    def __post_init__(self):
        if not self.text.strip():
            raise DatasetError(f"record {self.id!r}: text is empty")

    @property
    def is_augmented(self) -> bool:
        return self.source_id is not None

    @property
    def origin(self) -> str:
        return ORIGINAL if self.source_id is None else f"augmented:{self.source_id}"


@dataclass(frozen=True)
class LabeledCorpus:
    records: tuple[MessageRecord, ...] = ()
    counts: tuple[int, int, int] = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "records", tuple(self.records))
        ids = set()
        for rec in self.records:
            if rec.id in ids:
                raise DatasetError(f"duplicate record id {rec.id!r}")
            ids.add(rec.id)
        for rec in self.records:
            if rec.source_id is not None and rec.source_id not in ids:
                raise DatasetError(
                    f"record {rec.id!r} references unknown source {rec.source_id!r}"
                )
        tally = [0] * NUM_CLASSES
        for rec in self.records:
            tally[rec.label] += 1
        object.__setattr__(self, "counts", tuple(tally))

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    @property
    def texts(self) -> list[str]:
        return [r.text for r in self.records]

    @property
    def labels(self) -> list[ClassLabel]:
        return [r.label for r in self.records]

    def by_label(self, label: ClassLabel) -> list[MessageRecord]:
        return [r for r in self.records if r.label == label]


def class_distribution(corpus: LabeledCorpus) -> dict[ClassLabel, int]:
    return {label: corpus.counts[label] for label in ClassLabel}


@dataclass(frozen=True)
class DatasetFormat:
    """Delimited text layout of a dataset file.

    The header row must name at least ``label`` and ``text``; ``id`` and
    ``origin`` columns are optional. Label strings are mapped through
    ``label_names`` (matched case-insensitively).
    """

    delimiter: str = "\t"
    label_names: Mapping[ClassLabel, str] = field(
        default_factory=lambda: dict(DEFAULT_LABEL_NAMES)
    )

    def label_lookup(self) -> dict[str, ClassLabel]:
        return {name.lower(): label for label, name in self.label_names.items()}

    def _csv_kwargs(self) -> dict:
        if self.delimiter == ",":
            return {"delimiter": ",", "quoting": csv.QUOTE_MINIMAL}
        return {"delimiter": self.delimiter, "quoting": csv.QUOTE_NONE, "quotechar": None}


TSV = DatasetFormat()


def _parse_origin(value: str, lineno: int) -> str | None:
    value = value.strip()
    if value in ("", ORIGINAL):
        return None
    if value.startswith("augmented:") and len(value) > len("augmented:"):
        return value[len("augmented:"):]
    raise DatasetError(f"line {lineno}: bad origin value {value!r}")


def load_dataset(path: str | os.PathLike, fmt: DatasetFormat = TSV) -> LabeledCorpus:
    path = Path(path)
    if not path.is_file():
        raise DatasetError(f"dataset file not found: {path}")
    lookup = fmt.label_lookup()
    with path.open(encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh, **fmt._csv_kwargs())
        try:
            header = next(reader)
        except StopIteration:
            raise DatasetError(f"{path}: empty dataset") from None
        columns = [h.strip().lower() for h in header]
        for required in ("label", "text"):
            if required not in columns:
                raise DatasetError(f"{path}: header lacks a {required!r} column")
        col = {name: i for i, name in enumerate(columns)}
        records = []
        for row in reader:
            lineno = reader.line_num
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) != len(columns):
                raise DatasetError(
                    f"{path}: line {lineno}: expected {len(columns)} fields, got {len(row)}"
                )
            label_str = row[col["label"]].strip()
            try:
                label = lookup[label_str.lower()]
            except KeyError:
                raise DatasetError(
                    f"{path}: line {lineno}: unknown label {label_str!r}"
                ) from None
            rec_id = row[col["id"]].strip() if "id" in col else f"r{len(records)}"
            source = _parse_origin(row[col["origin"]], lineno) if "origin" in col else None
            try:
                records.append(MessageRecord(rec_id, row[col["text"]], label, source))
            except DatasetError as exc:
                raise DatasetError(f"{path}: line {lineno}: {exc}") from None
    if not records:
        raise DatasetError(f"{path}: empty dataset")
    return LabeledCorpus(records)


def dumps_dataset(corpus: LabeledCorpus, fmt: DatasetFormat = TSV, with_origin: bool = True) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n", **fmt._csv_kwargs())
    header = ["id", "label", "text"] + (["origin"] if with_origin else [])
    writer.writerow(header)
    for rec in corpus:
        if fmt.delimiter != "," and (fmt.delimiter in rec.text or "\n" in rec.text):
            raise DatasetError(f"record {rec.id!r}: text contains the delimiter or a newline")
        row = [rec.id, fmt.label_names[rec.label], rec.text]
        if with_origin:
            row.append(rec.origin)
        writer.writerow(row)
    return buf.getvalue()


def write_text_atomic(path: str | os.PathLike, content: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(content, encoding="utf-8", newline="")
    os.replace(tmp, path)


def save_dataset(corpus: LabeledCorpus, path: str | os.PathLike, fmt: DatasetFormat = TSV,
                 with_origin: bool = True) -> None:
    write_text_atomic(path, dumps_dataset(corpus, fmt, with_origin))


def write_provenance(path: str | os.PathLike, **fields) -> Path:
    """Write ``<path>.meta.json`` next to a data file; returns the sidecar path."""
    sidecar = Path(str(path) + ".meta.json")
    write_text_atomic(sidecar, json.dumps(fields, indent=2, sort_keys=True) + "\n")
    return sidecar


def _round_half_up(x: float) -> int:
    return int(Decimal(repr(x)).quantize(Decimal(1), rounding=ROUND_HALF_UP))


def split_sizes(counts: Sequence[int], test_fraction: float) -> list[int]:
    """Per-class test sizes for a stratified split.

    Each class gets round-half-up(fraction * size). The difference between
    the rounded overall total and the per-class sum goes to the largest class,
    but only as far as that class stays within one record of its exact share.
    """
    exact = [test_fraction * n for n in counts]
    sizes = [_round_half_up(e) for e in exact]
    drift = _round_half_up(test_fraction * sum(counts)) - sum(sizes)
    if drift:
        big = max(range(len(counts)), key=lambda c: (counts[c], -c))
        step = 1 if drift > 0 else -1
        while drift and abs(sizes[big] + step - exact[big]) < 1:
            sizes[big] += step
            drift -= step
    return [min(max(s, 1), n - 1) for s, n in zip(sizes, counts)]


def stratified_split(
    corpus: LabeledCorpus,
    test_fraction: float,
    seed: int,
    test_counts: Sequence[int] | None = None,
) -> tuple[LabeledCorpus, LabeledCorpus]:
    """Split ``corpus`` per class into (train, test), preserving record order.

    ``test_counts`` overrides the fraction with explicit per-class test sizes,
    e.g. to reproduce a published split.
    """
    if not 0.0 < test_fraction < 1.0:
        raise ValueError(f"test_fraction must lie in (0, 1), got {test_fraction}")
    if any(r.is_augmented for r in corpus):
        raise DatasetError("split expects original records only")
    for label in ClassLabel:
        if corpus.counts[label] < 2:
            raise DatasetError(
                f"class {DEFAULT_LABEL_NAMES[label]} has {corpus.counts[label]} records; need >= 2"
            )
    if test_counts is None:
        sizes = split_sizes(corpus.counts, test_fraction)
    else:
        sizes = list(test_counts)
        for label, (k, n) in enumerate(zip(sizes, corpus.counts)):
            if not 0 <= k <= n:
                raise ValueError(f"test count {k} invalid for class {label} of size {n}")

    rng = np.random.default_rng(seed)
    test_ids: set[str] = set()
    for label in ClassLabel:
        members = corpus.by_label(label)
        chosen = rng.permutation(len(members))[: sizes[label]]
        test_ids.update(members[i].id for i in chosen)
    train = LabeledCorpus(r for r in corpus if r.id not in test_ids)
    test = LabeledCorpus(r for r in corpus if r.id in test_ids)
    return train, test


def corpus_digest(corpus: LabeledCorpus) -> str:
    h = hashlib.sha256()
    for rec in corpus:
        h.update(f"{rec.id}\x1f{int(rec.label)}\x1f{rec.text}\x1f{rec.origin}\x1e".encode())
    return h.hexdigest()


def from_texts(texts: Iterable[str], labels: Iterable[int], prefix: str = "r") -> LabeledCorpus:
    return LabeledCorpus(
        MessageRecord(f"{prefix}{i}", t, ClassLabel(int(y)))
        for i, (t, y) in enumerate(zip(texts, labels))
    )
