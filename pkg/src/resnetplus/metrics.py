"""Evaluation metrics: confusion matrix, one-vs-all precision/recall/F1,
ROC curves with trapezoid AUC, and decision-curve analysis, plus
deterministic JSON/CSV/SVG export.

Averaging is macro (unweighted over classes); micro values are emitted too.
F1 is the standard harmonic mean 2TP/(2TP+FP+FN).  Classes with zero
support keep their metrics at 0 and are flagged rather than dropped, except
in macro AUC, where an undefined curve cannot contribute.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

__all__ = [
    "RocCurve", "DcaCurve", "ClassMetrics", "MetricsReport",
    "confusion", "classification_metrics", "roc_auc_ovr", "dca_ovr",
    "compute_report", "export_report", "DEFAULT_PT_GRID",
]

_trapezoid = getattr(np, "trapezoid", None) or np.trapz
DEFAULT_PT_GRID = np.arange(1, 100) / 100.0   # 0.01 .. 0.99 step 0.01

_PALETTE = ["#1b6ca8", "#c0392b", "#1e8449", "#8e44ad", "#d68910",
            "#148f77", "#884ea0", "#2e4053", "#a04000", "#5d6d7e"]


def confusion(y_true, y_pred, num_classes: int) -> np.ndarray:
    """cell[i][j] = count of samples with true class i predicted as j."""
    y_true = np.asarray(y_true, dtype=np.int64).reshape(-1)
    y_pred = np.asarray(y_pred, dtype=np.int64).reshape(-1)
    if y_true.shape != y_pred.shape:
        raise ValueError(
            f"length mismatch: {y_true.shape[0]} labels vs "
            f"{y_pred.shape[0]} predictions")
    cm = np.zeros((num_classes, num_classes), dtype=np.int64)
    if y_true.size == 0:
        return cm
    for name, arr in (("true", y_true), ("predicted", y_pred)):
        bad = (arr < 0) | (arr >= num_classes)
        if bad.any():
            raise ValueError(
                f"{name} label {arr[bad][0]} out of range for "
                f"{num_classes} classes")
    np.add.at(cm, (y_true, y_pred), 1)
    return cm


@dataclass
class ClassMetrics:
    precision: float
    recall: float
    f1: float
    support: int
    zero_support: bool


def classification_metrics(cm: np.ndarray) -> dict:
    """One-vs-all metrics from a confusion matrix.

    Returns accuracy, per-class ClassMetrics, macro and micro averages.
    Zero-support classes contribute 0 to the macro mean and are flagged.
    """
    cm = np.asarray(cm)
    if cm.ndim != 2 or cm.shape[0] != cm.shape[1]:
        raise ValueError(f"confusion matrix must be square, got {cm.shape}")
    if (cm < 0).any():
        raise ValueError("confusion matrix counts must be non-negative")
    k = cm.shape[0]
    tp = np.diag(cm).astype(np.float64)
    support = cm.sum(axis=1).astype(np.float64)
    predicted = cm.sum(axis=0).astype(np.float64)
    total = float(cm.sum())
    fp = predicted - tp
    fn = support - tp

    per_class = []
    for i in range(k):
        prec = tp[i] / predicted[i] if predicted[i] > 0 else 0.0
        rec = tp[i] / support[i] if support[i] > 0 else 0.0
        denom = 2 * tp[i] + fp[i] + fn[i]
        f1 = 2 * tp[i] / denom if denom > 0 else 0.0
        per_class.append(ClassMetrics(float(prec), float(rec), float(f1),
                                      int(support[i]), bool(support[i] == 0)))
    accuracy = float(tp.sum() / total) if total > 0 else 0.0
    micro = accuracy   # single-label multiclass: micro P = R = F1 = accuracy
    return {
        "accuracy": accuracy,
        "per_class": per_class,
        "macro_precision": float(np.mean([c.precision for c in per_class])),
        "macro_recall": float(np.mean([c.recall for c in per_class])),
        "macro_f1": float(np.mean([c.f1 for c in per_class])),
        "micro_precision": micro,
        "micro_recall": micro,
        "micro_f1": micro,
    }


@dataclass
class RocCurve:
    class_index: int
    fpr: np.ndarray
    tpr: np.ndarray
    thresholds: np.ndarray
    auc: float
    defined: bool


def _roc_one(scores: np.ndarray, positive: np.ndarray, class_index: int
             ) -> RocCurve:
    n_pos = int(positive.sum())
    n_neg = int(positive.size - n_pos)
    if n_pos == 0 or n_neg == 0:
        return RocCurve(class_index, np.array([0.0, 1.0]),
                        np.array([0.0, 1.0]),
                        np.array([np.inf, -np.inf]), float("nan"), False)
    order = np.argsort(-scores, kind="stable")
    s = scores[order]
    y = positive[order].astype(np.int64)
    # group tied scores into single sweep steps
    step_ends = np.r_[np.nonzero(np.diff(s))[0], s.size - 1]
    tp = np.cumsum(y)[step_ends]
    fp = 1 + step_ends - tp
    tpr = np.r_[0.0, tp / n_pos, 1.0]
    fpr = np.r_[0.0, fp / n_neg, 1.0]
    thresholds = np.r_[np.inf, s[step_ends], -np.inf]
    auc = float(_trapezoid(tpr, fpr))
    return RocCurve(class_index, fpr, tpr, thresholds, auc, True)


def roc_auc_ovr(scores: np.ndarray, y_true) -> tuple[list[RocCurve], float]:
    """One-vs-all ROC per class plus macro AUC over the defined classes."""
    scores = np.asarray(scores, dtype=np.float64)
    y_true = np.asarray(y_true, dtype=np.int64).reshape(-1)
    if scores.ndim != 2:
        raise ValueError(f"scores must be (N, K), got {scores.shape}")
    if scores.shape[0] != y_true.shape[0]:
        raise ValueError("scores and labels disagree on N")
    curves = [_roc_one(scores[:, k], y_true == k, k)
              for k in range(scores.shape[1])]
    defined = [c.auc for c in curves if c.defined]
    macro = float(np.mean(defined)) if defined else float("nan")
    return curves, macro


@dataclass
class DcaCurve:
    class_index: int
    pt: np.ndarray
    net_benefit: np.ndarray
    treat_all: np.ndarray
    treat_none: np.ndarray
    prevalence: float


def dca_ovr(scores: np.ndarray, y_true, pt_grid=None) -> list[DcaCurve]:
    """Decision curve analysis per class: predict positive iff score >= pt,
    net benefit = TP/N - FP/N * pt/(1-pt)."""
    scores = np.asarray(scores, dtype=np.float64)
    y_true = np.asarray(y_true, dtype=np.int64).reshape(-1)
    pt = np.asarray(pt_grid if pt_grid is not None else DEFAULT_PT_GRID,
                    dtype=np.float64)
    if np.any(pt <= 0.0) or np.any(pt >= 1.0):
        raise ValueError("threshold probabilities must lie strictly in (0, 1)")
    n = y_true.size
    odds = pt / (1.0 - pt)
    curves = []
    for k in range(scores.shape[1]):
        positive = y_true == k
        prevalence = float(positive.sum() / n) if n else 0.0
        decided = scores[:, k][:, None] >= pt[None, :]        # (N, G)
        tp = (decided & positive[:, None]).sum(axis=0) / n
        fp = (decided & ~positive[:, None]).sum(axis=0) / n
        nb = tp - fp * odds
        treat_all = prevalence - (1.0 - prevalence) * odds
        curves.append(DcaCurve(k, pt.copy(), nb, treat_all,
                               np.zeros_like(pt), prevalence))
    return curves


@dataclass
class MetricsReport:
    class_names: list[str]
    confusion: np.ndarray
    accuracy: float
    per_class: list[ClassMetrics]
    macro_precision: float
    macro_recall: float
    macro_f1: float
    micro_precision: float
    micro_recall: float
    micro_f1: float
    roc: list[RocCurve]
    macro_auc: float
    dca: list[DcaCurve]
    latency_mean: float | None = None
    latency_std: float | None = None

    def headline(self) -> str:
        """ACC/PRE/REC/F1/AUC line in the standard results-table order."""
        auc = "nan" if np.isnan(self.macro_auc) else f"{self.macro_auc:.4f}"
        return (f"ACC {self.accuracy:.4f}  PRE {self.macro_precision:.4f}  "
                f"REC {self.macro_recall:.4f}  F1 {self.macro_f1:.4f}  "
                f"AUC {auc}")

    def to_dict(self) -> dict:
        return {
            "class_names": list(self.class_names),
            "confusion": self.confusion.tolist(),
            "accuracy": self.accuracy,
            "per_class": [{
                "precision": c.precision, "recall": c.recall, "f1": c.f1,
                "support": c.support, "zero_support": c.zero_support,
            } for c in self.per_class],
            "macro": {"precision": self.macro_precision,
                      "recall": self.macro_recall, "f1": self.macro_f1,
                      "auc": None if np.isnan(self.macro_auc) else self.macro_auc},
            "micro": {"precision": self.micro_precision,
                      "recall": self.micro_recall, "f1": self.micro_f1},
            "roc": [{
                "class_index": c.class_index,
                "fpr": c.fpr.tolist(), "tpr": c.tpr.tolist(),
                "thresholds": [("inf" if t == np.inf else
                                "-inf" if t == -np.inf else t)
                               for t in c.thresholds.tolist()],
                "auc": None if not c.defined else c.auc,
                "defined": c.defined,
            } for c in self.roc],
            "dca": [{
                "class_index": c.class_index,
                "pt": c.pt.tolist(),
                "net_benefit": c.net_benefit.tolist(),
                "treat_all": c.treat_all.tolist(),
                "prevalence": c.prevalence,
            } for c in self.dca],
            "latency_mean": self.latency_mean,
            "latency_std": self.latency_std,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MetricsReport":
        per_class = [ClassMetrics(c["precision"], c["recall"], c["f1"],
                                  c["support"], c["zero_support"])
                     for c in d["per_class"]]
        roc = []
        for c in d["roc"]:
            thr = np.array([np.inf if t == "inf" else
                            -np.inf if t == "-inf" else float(t)
                            for t in c["thresholds"]])
            roc.append(RocCurve(c["class_index"], np.array(c["fpr"]),
                                np.array(c["tpr"]), thr,
                                float("nan") if c["auc"] is None else c["auc"],
                                c["defined"]))
        dca = [DcaCurve(c["class_index"], np.array(c["pt"]),
                        np.array(c["net_benefit"]), np.array(c["treat_all"]),
                        np.zeros(len(c["pt"])), c["prevalence"])
               for c in d["dca"]]
        macro_auc = d["macro"]["auc"]
        return cls(
            class_names=list(d["class_names"]),
            confusion=np.array(d["confusion"], dtype=np.int64),
            accuracy=d["accuracy"], per_class=per_class,
            macro_precision=d["macro"]["precision"],
            macro_recall=d["macro"]["recall"], macro_f1=d["macro"]["f1"],
            micro_precision=d["micro"]["precision"],
            micro_recall=d["micro"]["recall"], micro_f1=d["micro"]["f1"],
            roc=roc, macro_auc=float("nan") if macro_auc is None else macro_auc,
            dca=dca, latency_mean=d.get("latency_mean"),
            latency_std=d.get("latency_std"))


def compute_report(probs: np.ndarray, y_true, class_names,
                   latency_mean: float | None = None,
                   latency_std: float | None = None,
                   pt_grid=None) -> MetricsReport:
    probs = np.asarray(probs, dtype=np.float64)
    y_true = np.asarray(y_true, dtype=np.int64).reshape(-1)
    k = len(class_names)
    if probs.shape != (y_true.size, k):
        raise ValueError(f"probs shape {probs.shape} does not match "
                         f"{y_true.size} samples x {k} classes")
    preds = np.argmax(probs, axis=1)
    cm = confusion(y_true, preds, k)
    cls = classification_metrics(cm)
    roc, macro_auc = roc_auc_ovr(probs, y_true)
    dca = dca_ovr(probs, y_true, pt_grid)
    return MetricsReport(
        class_names=list(class_names), confusion=cm,
        accuracy=cls["accuracy"], per_class=cls["per_class"],
        macro_precision=cls["macro_precision"],
        macro_recall=cls["macro_recall"], macro_f1=cls["macro_f1"],
        micro_precision=cls["micro_precision"],
        micro_recall=cls["micro_recall"], micro_f1=cls["micro_f1"],
        roc=roc, macro_auc=macro_auc, dca=dca,
        latency_mean=latency_mean, latency_std=latency_std)


# ---------------------------------------------------------------------------
# export


def _metrics_csv(report: MetricsReport) -> str:
    lines = ["class,precision,recall,f1,auc"]
    for name, c, r in zip(report.class_names, report.per_class, report.roc):
        auc = repr(r.auc) if r.defined else ""
        lines.append(f"{name},{c.precision!r},{c.recall!r},{c.f1!r},{auc}")
    macro_auc = "" if np.isnan(report.macro_auc) else repr(report.macro_auc)
    lines.append(f"macro,{report.macro_precision!r},{report.macro_recall!r},"
                 f"{report.macro_f1!r},{macro_auc}")
    lines.append(f"accuracy,{report.accuracy!r}")
    return "\n".join(lines) + "\n"


def _roc_points_csv(report: MetricsReport) -> str:
    lines = ["class,fpr,tpr,threshold"]
    for name, c in zip(report.class_names, report.roc):
        for f, t, thr in zip(c.fpr, c.tpr, c.thresholds):
            lines.append(f"{name},{f!r},{t!r},{thr!r}")
    return "\n".join(lines) + "\n"


def _dca_points_csv(report: MetricsReport) -> str:
    lines = ["class,pt,net_benefit,treat_all,treat_none"]
    for name, c in zip(report.class_names, report.dca):
        for pt, nb, ta in zip(c.pt, c.net_benefit, c.treat_all):
            lines.append(f"{name},{pt!r},{nb!r},{ta!r},0.0")
    return "\n".join(lines) + "\n"


def _svg_plot(series, *, title: str, xlabel: str, ylabel: str,
              xlim=(0.0, 1.0), ylim=(0.0, 1.0), width=640, height=480) -> str:
    """Minimal static SVG 1.1 line plot.

    series: list of (label, xs, ys, color, dashed) tuples; each becomes one
    <polyline> in input order.
    """
    ml, mr, mt, mb = 62.0, 20.0, 34.0, 48.0
    pw, ph = width - ml - mr, height - mt - mb
    x0, x1 = xlim
    y0, y1 = ylim

    def px(x):
        return ml + (x - x0) / (x1 - x0) * pw

    def py(y):
        return mt + (y1 - y) / (y1 - y0) * ph

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" '
        f'width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
        f'<text x="{width / 2:.1f}" y="20" text-anchor="middle" '
        f'font-family="sans-serif" font-size="14">{title}</text>',
    ]
    # axes
    out.append(f'<line x1="{ml}" y1="{mt + ph:.1f}" x2="{ml + pw:.1f}" '
               f'y2="{mt + ph:.1f}" stroke="black" stroke-width="1"/>')
    out.append(f'<line x1="{ml}" y1="{mt}" x2="{ml}" y2="{mt + ph:.1f}" '
               f'stroke="black" stroke-width="1"/>')
    for i in range(6):
        xv = x0 + (x1 - x0) * i / 5
        yv = y0 + (y1 - y0) * i / 5
        out.append(f'<line x1="{px(xv):.1f}" y1="{mt + ph:.1f}" '
                   f'x2="{px(xv):.1f}" y2="{mt + ph + 4:.1f}" stroke="black"/>')
        out.append(f'<text x="{px(xv):.1f}" y="{mt + ph + 17:.1f}" '
                   f'text-anchor="middle" font-family="sans-serif" '
                   f'font-size="10">{xv:.2f}</text>')
        out.append(f'<line x1="{ml - 4}" y1="{py(yv):.1f}" x2="{ml}" '
                   f'y2="{py(yv):.1f}" stroke="black"/>')
        out.append(f'<text x="{ml - 7}" y="{py(yv) + 3.5:.1f}" '
                   f'text-anchor="end" font-family="sans-serif" '
                   f'font-size="10">{yv:.2f}</text>')
    out.append(f'<text x="{ml + pw / 2:.1f}" y="{height - 10}" '
               f'text-anchor="middle" font-family="sans-serif" '
               f'font-size="12">{xlabel}</text>')
    out.append(f'<text x="16" y="{mt + ph / 2:.1f}" text-anchor="middle" '
               f'font-family="sans-serif" font-size="12" '
               f'transform="rotate(-90 16 {mt + ph / 2:.1f})">{ylabel}</text>')
    # series
    for label, xs, ys, color, dashed in series:
        pts = " ".join(
            f"{px(float(x)):.2f},{py(min(max(float(y), y0), y1)):.2f}"
            for x, y in zip(xs, ys))
        dash = ' stroke-dasharray="6,4"' if dashed else ""
        out.append(f'<polyline fill="none" stroke="{color}" '
                   f'stroke-width="1.5"{dash} points="{pts}"/>')
    # legend
    ly = mt + 8
    for label, _, _, color, dashed in series:
        dash = ' stroke-dasharray="6,4"' if dashed else ""
        out.append(f'<line x1="{ml + pw - 130:.1f}" y1="{ly:.1f}" '
                   f'x2="{ml + pw - 105:.1f}" y2="{ly:.1f}" '
                   f'stroke="{color}" stroke-width="1.5"{dash}/>')
        out.append(f'<text x="{ml + pw - 100:.1f}" y="{ly + 3.5:.1f}" '
                   f'font-family="sans-serif" font-size="10">{label}</text>')
        ly += 14
    out.append("</svg>")
    return "\n".join(out) + "\n"


def roc_svg(report: MetricsReport) -> str:
    series = []
    for i, (name, c) in enumerate(zip(report.class_names, report.roc)):
        label = f"{name} (AUC {c.auc:.3f})" if c.defined else f"{name} (undefined)"
        series.append((label, c.fpr, c.tpr, _PALETTE[i % len(_PALETTE)], False))
    series.append(("chance", [0.0, 1.0], [0.0, 1.0], "#888888", True))
    return _svg_plot(series, title="One-vs-all ROC",
                     xlabel="false positive rate",
                     ylabel="true positive rate")


def dca_svg(report: MetricsReport) -> str:
    max_prev = max((c.prevalence for c in report.dca), default=0.5)
    ylim = (-0.05, max(0.1, max_prev * 1.25))
    series = []
    for i, (name, c) in enumerate(zip(report.class_names, report.dca)):
        color = _PALETTE[i % len(_PALETTE)]
        series.append((name, c.pt, c.net_benefit, color, False))
        series.append((f"{name} treat-all", c.pt, c.treat_all, color, True))
    series.append(("treat-none", [0.01, 0.99], [0.0, 0.0], "#888888", False))
    return _svg_plot(series, title="Decision curve analysis",
                     xlabel="threshold probability",
                     ylabel="net benefit", ylim=ylim)


def export_report(report: MetricsReport, out_dir,
                  formats=("json", "csv", "svg")) -> list[Path]:
    """Write the report under out_dir; returns the files written."""
    unknown = set(formats) - {"json", "csv", "svg"}
    if unknown:
        raise ValueError(f"unknown export formats: {sorted(unknown)}")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    if "json" in formats:
        p = out_dir / "metrics.json"
        p.write_text(json.dumps(report.to_dict(), indent=2, sort_keys=True)
                     + "\n")
        written.append(p)
    if "csv" in formats:
        for fname, text in (("metrics.csv", _metrics_csv(report)),
                            ("roc_points.csv", _roc_points_csv(report)),
                            ("dca_points.csv", _dca_points_csv(report))):
            p = out_dir / fname
            p.write_text(text)
            written.append(p)
    if "svg" in formats:
        for fname, text in (("roc.svg", roc_svg(report)),
                            ("dca.svg", dca_svg(report))):
            p = out_dir / fname
            p.write_text(text)
            written.append(p)
    return written
