"""Matplotlib figures written next to the delimited report files."""

from __future__ import annotations

import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

PNG_METADATA = {"Software": None}


def _style(ax):
    ax.spines["top"].set_visible(False)
    ax.spines["right"].set_visible(False)
    ax.tick_params(labelsize=9)


def _save(fig, path: str | os.PathLike) -> str:
    fig.tight_layout()
    fig.savefig(path, dpi=120, metadata=PNG_METADATA)
    plt.close(fig)
    return str(path)


def plot_report(report, path: str | os.PathLike) -> str:
    """Per-class precision/recall/F1 bars beside the confusion matrix."""
    fig, (ax_bar, ax_cm) = plt.subplots(1, 2, figsize=(10, 4))
    x = np.arange(len(report.class_names))
    width = 0.26
    for k, metric in enumerate(("precision", "recall", "f1")):
        ax_bar.bar(x + (k - 1) * width, getattr(report, metric), width, label=metric)
    ax_bar.set_xticks(x)
    ax_bar.set_xticklabels(report.class_names)
    ax_bar.set_ylim(0, 1.05)
    ax_bar.set_title(f"accuracy {report.accuracy:.3f}, macro-F1 {report.macro_f1:.3f}", fontsize=10)
    ax_bar.legend(frameon=False, fontsize=8)
    _style(ax_bar)

    cm = np.asarray(report.confusion)
    ax_cm.imshow(cm, cmap="Blues")
    for (i, j), v in np.ndenumerate(cm):
        ax_cm.text(j, i, str(v), ha="center", va="center",
                   color="white" if v > cm.max() / 2 else "black", fontsize=9)
    ax_cm.set_xticks(x)
    ax_cm.set_yticks(x)
    ax_cm.set_xticklabels(report.class_names, fontsize=8)
    ax_cm.set_yticklabels(report.class_names, fontsize=8)
    ax_cm.set_xlabel("predicted")
    ax_cm.set_ylabel("true")
    return _save(fig, path)


def plot_comparison(table, path: str | os.PathLike,
                    columns: tuple[str, ...] = ("macro_f1", "accuracy")) -> str:
    extra = [c for c in table.columns if c.startswith(("recall:", "f1:"))]
    columns = list(columns) + extra
    fig, ax = plt.subplots(figsize=(max(6, 1.1 * len(columns) * max(1, len(table)) / 2), 4))
    x = np.arange(len(columns))
    width = 0.8 / len(table)
    for i, (name, row) in enumerate(zip(table.names, table.rows)):
        ax.bar(x + (i - (len(table) - 1) / 2) * width, [row[c] for c in columns], width, label=name)
    ax.set_xticks(x)
    ax.set_xticklabels(columns, rotation=30, ha="right", fontsize=8)
    ax.set_ylim(0, 1.05)
    ax.legend(frameon=False, fontsize=8)
    _style(ax)
    return _save(fig, path)


def plot_history(history, path: str | os.PathLike) -> str:
    epochs = [r.epoch for r in history.records]
    fig, (ax_loss, ax_lr) = plt.subplots(2, 1, figsize=(6, 5), sharex=True)
    ax_loss.plot(epochs, [r.train_loss for r in history.records], label="train")
    ax_loss.plot(epochs, [r.val_loss for r in history.records], label="validation")
    best = history.best_epoch
    if best is not None:
        ax_loss.axvline(best, color="grey", ls=":", lw=1)
    ax_loss.set_ylabel("cross-entropy")
    ax_loss.legend(frameon=False, fontsize=8)
    ax_lr.step(epochs, [r.learning_rate for r in history.records], where="post")
    ax_lr.set_yscale("log")
    ax_lr.set_ylabel("learning rate")
    ax_lr.set_xlabel("epoch")
    for ax in (ax_loss, ax_lr):
        _style(ax)
    return _save(fig, path)
