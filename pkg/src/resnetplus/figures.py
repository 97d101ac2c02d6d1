"""Figure rendering for report outputs.

Each function draws one PNG next to the delimited output files.  The Agg
backend is forced so rendering works headless; nothing here is interactive.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)
import numpy as np  # noqa: E402

from .metrics import MetricsReport  # noqa: E402

__all__ = ["roc_png", "dca_png", "confusion_png", "training_curves_png",
           "ablation_png"]

_DPI = 120


def _save(fig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=_DPI, bbox_inches="tight")
    plt.close(fig)
    return path


def roc_png(report: MetricsReport, path) -> Path:
    fig, ax = plt.subplots(figsize=(5.4, 4.2))
    for name, curve in zip(report.class_names, report.roc):
        label = (f"{name} (AUC {curve.auc:.3f})" if curve.defined
                 else f"{name} (undefined)")
        ax.plot(curve.fpr, curve.tpr, label=label, linewidth=1.5)
    ax.plot([0, 1], [0, 1], "--", color="gray", linewidth=1, label="chance")
    ax.set_xlabel("false positive rate")
    ax.set_ylabel("true positive rate")
    ax.set_title("One-vs-all ROC")
    ax.set_xlim(0, 1)
    ax.set_ylim(0, 1.02)
    ax.legend(loc="lower right", fontsize=8)
    return _save(fig, path)


def dca_png(report: MetricsReport, path) -> Path:
    fig, ax = plt.subplots(figsize=(5.4, 4.2))
    colors = plt.rcParams["axes.prop_cycle"].by_key()["color"]
    for i, (name, curve) in enumerate(zip(report.class_names, report.dca)):
        c = colors[i % len(colors)]
        ax.plot(curve.pt, curve.net_benefit, color=c, linewidth=1.5,
                label=name)
        ax.plot(curve.pt, curve.treat_all, color=c, linewidth=1,
                linestyle="--", alpha=0.6)
    ax.axhline(0.0, color="gray", linewidth=1, label="treat none")
    max_prev = max((c.prevalence for c in report.dca), default=0.5)
    ax.set_ylim(-0.05, max(0.1, max_prev * 1.3))
    ax.set_xlabel("threshold probability")
    ax.set_ylabel("net benefit")
    ax.set_title("Decision curve analysis (dashed: treat all)")
    ax.legend(loc="upper right", fontsize=8)
    return _save(fig, path)


def confusion_png(report: MetricsReport, path) -> Path:
    cm = report.confusion
    fig, ax = plt.subplots(figsize=(4.6, 4.0))
    im = ax.imshow(cm, cmap="Blues")
    fig.colorbar(im, ax=ax, fraction=0.046)
    ticks = np.arange(len(report.class_names))
    ax.set_xticks(ticks, report.class_names, rotation=45, ha="right")
    ax.set_yticks(ticks, report.class_names)
    threshold = cm.max() / 2 if cm.max() > 0 else 0.5
    for i in range(cm.shape[0]):
        for j in range(cm.shape[1]):
            ax.text(j, i, str(cm[i, j]), ha="center", va="center",
                    color="white" if cm[i, j] > threshold else "black",
                    fontsize=9)
    ax.set_xlabel("predicted")
    ax.set_ylabel("true")
    ax.set_title("Confusion matrix")
    return _save(fig, path)


def training_curves_png(rows, path) -> Path:
    """rows: (epoch, lr, train_loss, val_acc) tuples from a TrainReport."""
    epochs = [r[0] for r in rows]
    lrs = [r[1] for r in rows]
    losses = [r[2] for r in rows]
    accs = [r[3] for r in rows]
    fig, (ax1, ax2) = plt.subplots(2, 1, figsize=(5.8, 5.6), sharex=True)
    ax1.plot(epochs, losses, color="#c0392b", linewidth=1.5)
    ax1.set_ylabel("train loss")
    ax1.set_title("Training curves")
    lr_ax = ax1.twinx()
    lr_ax.plot(epochs, lrs, color="#888888", linestyle="--", linewidth=1)
    lr_ax.set_ylabel("learning rate", color="#888888")
    ax2.plot(epochs, accs, color="#1b6ca8", linewidth=1.5)
    ax2.set_ylabel("val accuracy")
    ax2.set_xlabel("epoch")
    ax2.set_ylim(0, 1.02)
    return _save(fig, path)


def ablation_png(rows, path) -> Path:
    """rows: (label, accuracy) pairs, one per flag combination."""
    labels = [r[0] for r in rows]
    accs = [r[1] for r in rows]
    fig, ax = plt.subplots(figsize=(6.4, 0.34 * len(rows) + 1.6))
    y = np.arange(len(rows))
    ax.barh(y, accs, color="#1b6ca8")
    ax.set_yticks(y, labels, fontsize=8, fontfamily="monospace")
    ax.invert_yaxis()
    ax.set_xlabel("val accuracy")
    ax.set_xlim(0, 1.0)
    ax.set_title("Ablation grid")
    for yi, acc in zip(y, accs):
        ax.text(min(acc + 0.01, 0.98), yi, f"{acc:.3f}", va="center",
                fontsize=7)
    return _save(fig, path)
