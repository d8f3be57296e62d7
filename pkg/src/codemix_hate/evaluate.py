"""Per-class precision / recall / F1, accuracy and run comparison tables."""

from __future__ import annotations

import csv
import io
import json
import os
from collections.abc import Mapping, Sequence
from dataclasses import asdict, dataclass, field
from importlib import resources as importlib_resources

import numpy as np

from codemix_hate.corpus import DEFAULT_LABEL_NAMES, NUM_CLASSES, ClassLabel
from codemix_hate.errors import DatasetError

CLASS_NAMES = [DEFAULT_LABEL_NAMES[c] for c in ClassLabel]
SCHEMA_VERSION = 1


def confusion_matrix(y_true: Sequence[int], y_pred: Sequence[int]) -> np.ndarray:
    """Counts with rows = true class, columns = predicted class."""
    cm = np.zeros((NUM_CLASSES, NUM_CLASSES), dtype=np.int64)
    np.add.at(cm, (np.asarray(y_true, dtype=np.int64), np.asarray(y_pred, dtype=np.int64)), 1)
    return cm


def _safe_ratio(num: np.ndarray, den: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    zero = den == 0
    out = np.divide(num, den, out=np.zeros(num.shape, dtype=np.float64), where=~zero)
    return out, zero


@dataclass
class MetricsReport:
    precision: list[float]
    recall: list[float]
    f1: list[float]
    support: list[int]
    accuracy: float
    macro_f1: float
    confusion: list[list[int]]
    # per-class flags: the metric was set to 0 because its denominator was 0
    zero_division: dict[str, list[bool]] = field(default_factory=dict)
    model: dict = field(default_factory=dict)
    seed: int | None = None
    config_hash: str | None = None
    class_names: list[str] = field(default_factory=lambda: list(CLASS_NAMES))
    schema_version: int = SCHEMA_VERSION

    @property
    def total(self) -> int:
        return int(np.sum(self.confusion))

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: Mapping) -> MetricsReport:
        return cls(**d)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> MetricsReport:
        return cls.from_dict(json.loads(text))

    def to_text(self) -> str:
        lines = [f"{'class':<15}{'precision':>10}{'recall':>10}{'f1':>10}{'support':>9}"]
        for c, name in enumerate(self.class_names):
            flag = "!" if any(v[c] for v in self.zero_division.values()) else ""
            lines.append(f"{name:<15}{self.precision[c]:>10.4f}{self.recall[c]:>10.4f}"
                         f"{self.f1[c]:>10.4f}{self.support[c]:>9d}{flag}")
        lines.append(f"{'accuracy':<15}{self.accuracy:>30.4f}{self.total:>9d}")
        lines.append(f"{'macro-F1':<15}{self.macro_f1:>30.4f}")
        lines.append("")
        lines.append("confusion (rows = true, columns = predicted)")
        width = max(len(n) for n in self.class_names) + 2
        lines.append(" " * width + "".join(f"{n:>{width}}" for n in self.class_names))
        for name, row in zip(self.class_names, self.confusion):
            lines.append(f"{name:<{width}}" + "".join(f"{v:>{width}d}" for v in row))
        if any(any(v) for v in self.zero_division.values()):
            lines.append("! a metric had a zero denominator and was reported as 0")
        return "\n".join(lines) + "\n"


def metrics_from_confusion(cm: np.ndarray, model: Mapping | None = None,
                           seed: int | None = None, config_hash: str | None = None) -> MetricsReport:
    cm = np.asarray(cm, dtype=np.int64)
    if cm.shape != (NUM_CLASSES, NUM_CLASSES) or (cm < 0).any():
        raise ValueError("confusion matrix must be 3x3 with non-negative counts")
    total = int(cm.sum())
    if total == 0:
        raise DatasetError("cannot compute metrics on an empty evaluation set")
    tp = np.diag(cm).astype(np.float64)
    precision, p_zero = _safe_ratio(tp, cm.sum(axis=0).astype(np.float64))
    recall, r_zero = _safe_ratio(tp, cm.sum(axis=1).astype(np.float64))
    f1, f_zero = _safe_ratio(2 * precision * recall, precision + recall)
    return MetricsReport(
        precision=precision.tolist(),
        recall=recall.tolist(),
        f1=f1.tolist(),
        support=cm.sum(axis=1).astype(int).tolist(),
        accuracy=float(tp.sum() / total),
        macro_f1=float(f1.mean()),
        confusion=cm.tolist(),
        zero_division={"precision": p_zero.tolist(), "recall": r_zero.tolist(),
                       "f1": f_zero.tolist()},
        model=dict(model or {}),
        seed=seed,
        config_hash=config_hash,
    )


def micro_recall(cm: np.ndarray) -> float:
    cm = np.asarray(cm)
    return float(np.trace(cm) / cm.sum())


def evaluate(model, test_set, descriptor: Mapping | None = None, seed: int | None = None,
             config_hash: str | None = None) -> MetricsReport:
    """Eval-mode predictions on ``test_set`` (an EncodedSet) scored against its labels."""
    from codemix_hate.model import predict_proba

    if len(test_set) == 0:
        raise DatasetError("evaluation set is empty")
    probs = predict_proba(model, (test_set.indices, test_set.lengths))
    preds = np.argmax(probs, axis=1)
    descriptor = dict(descriptor) if descriptor else model.config.to_dict()
    return metrics_from_confusion(confusion_matrix(test_set.labels, preds), descriptor,
                                  seed, config_hash)


def report_schema() -> dict:
    text = (importlib_resources.files("codemix_hate") / "resources" / "report_schema.json").read_text()
    return json.loads(text)


def validate_report(data: Mapping) -> None:
    import jsonschema

    jsonschema.validate(dict(data), report_schema())


def save_report(report: MetricsReport, stem: str | os.PathLike) -> list[str]:
    """Write ``<stem>.json`` and ``<stem>.txt``; returns the paths written."""
    from codemix_hate.corpus import write_text_atomic

    paths = [f"{stem}.json", f"{stem}.txt"]
    write_text_atomic(paths[0], report.to_json())
    write_text_atomic(paths[1], report.to_text())
    return paths


def load_report(path: str | os.PathLike) -> MetricsReport:
    with open(path, encoding="utf-8") as fh:
        return MetricsReport.from_json(fh.read())


def metric_columns(class_names: Sequence[str] = CLASS_NAMES) -> list[str]:
    cols = ["macro_f1", "accuracy"]
    for metric in ("precision", "recall", "f1"):
        cols.extend(f"{metric}:{name}" for name in class_names)
    return cols


def _flatten(report: MetricsReport) -> dict[str, float]:
    row = {"macro_f1": report.macro_f1, "accuracy": report.accuracy}
    for metric in ("precision", "recall", "f1"):
        values = getattr(report, metric)
        row.update({f"{metric}:{n}": v for n, v in zip(report.class_names, values)})
    return row


@dataclass
class ComparisonTable:
    names: list[str]
    columns: list[str]
    rows: list[dict[str, float]]
    # column -> index of the best row (highest value, first listed on ties)
    best: dict[str, int]

    def __len__(self) -> int:
        return len(self.rows)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["run", *self.columns, "best_in"])
        for i, (name, row) in enumerate(zip(self.names, self.rows)):
            flags = ";".join(c for c in self.columns if self.best[c] == i)
            w.writerow([name, *(f"{row[c]:.6f}" for c in self.columns), flags])
        return buf.getvalue()

    def to_text(self) -> str:
        short = [c.replace("precision", "P").replace("recall", "R").replace("f1:", "F1:")
                 for c in self.columns]
        width = max(8, *(len(n) for n in self.names)) + 2
        lines = [f"{'run':<{width}}" + "".join(f"{s[:16]:>18}" for s in short)]
        for i, (name, row) in enumerate(zip(self.names, self.rows)):
            cells = [f"{row[c]:.4f}{'*' if self.best[c] == i else ' '}" for c in self.columns]
            lines.append(f"{name:<{width}}" + "".join(f"{cell:>18}" for cell in cells))
        lines.append("* best in column (first listed on ties)")
        return "\n".join(lines) + "\n"


def describe(report: MetricsReport) -> str:
    m = report.model
    if not m:
        return "run"
    return f"{m.get('cell_kind', '?')}-{m.get('hidden_units', '?')}u-{m.get('embedding_dimension', '?')}d"


def compare_runs(reports: Sequence[MetricsReport], names: Sequence[str] | None = None) -> ComparisonTable:
    if not reports:
        raise ValueError("compare_runs needs at least one report")
    names = list(names) if names is not None else [describe(r) for r in reports]
    rows = [_flatten(r) for r in reports]
    columns = metric_columns(reports[0].class_names)
    best = {}
    for c in columns:
        values = [row[c] for row in rows]
        best[c] = int(np.argmax(values))
    return ComparisonTable(names, columns, rows, best)
