"""Classification metrics: confusion matrix, macro P/R/F1, one-vs-rest
ROC/AUC, precision-recall and F1-threshold curves, plus CSV/SVG reports.

Argmax ties break toward the lowest class index; macro averages are
unweighted class means, with per-class values always emitted so any other
averaging can be recomputed downstream.
"""

from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, DataError, UndefinedMetricError, UsageError
from .modem import ModulationClass
from .network import ModelCheckpoint
from .training import default_plan, featurize


@dataclass
class PredictionSet:
    """Per-sample truth, probability rows, and source SNR, in head space."""

    labels: np.ndarray
    probs: np.ndarray
    snr_db: np.ndarray
    class_ids: tuple = ()

    def __post_init__(self):
        if len(self.labels) != len(self.probs) or len(self.labels) != len(self.snr_db):
            raise DataError("labels, probs and snr_db must have equal length")
        if len(self.probs) and np.abs(self.probs.sum(axis=1) - 1.0).max() > 1e-9:
            raise DataError("probability rows must sum to 1 within 1e-9")
        if not self.class_ids:
            self.class_ids = tuple(range(self.probs.shape[1]))

    @property
    def n_classes(self) -> int:
        return self.probs.shape[1]

    def class_names(self) -> list:
        return [ModulationClass(cid).name for cid in self.class_ids]


@dataclass
class ClassMetrics:
    name: str
    precision: float
    recall: float
    f1: float
    degenerate: bool = False  # a zero denominator was coerced to 0


@dataclass
class MetricsReport:
    confusion: np.ndarray
    accuracy: float
    macro_precision: float
    macro_recall: float
    macro_f1: float
    per_class: list
    roc: dict = field(default_factory=dict)        # head idx -> (points, thresholds, auc)
    pr: dict = field(default_factory=dict)         # head idx -> (points, thresholds)
    f1_curves: dict = field(default_factory=dict)  # head idx -> (thresholds, f1 values)
    per_snr: list = field(default_factory=list)    # (snr_db, count, accuracy)
    skipped_classes: list = field(default_factory=list)
    class_names: list = field(default_factory=list)


def confusion_matrix(preds: PredictionSet) -> np.ndarray:
    """Counts with rows = true class, columns = argmax prediction."""
    if len(preds.labels) == 0:
        raise UsageError("cannot build a confusion matrix from an empty prediction set")
    n = preds.n_classes
    decisions = preds.probs.argmax(axis=1)  # first max wins: lowest-id tie-break
    matrix = np.zeros((n, n), dtype=np.int64)
    np.add.at(matrix, (preds.labels, decisions), 1)
    return matrix


def prf1(confusion: np.ndarray, class_names=None) -> tuple:
    """(accuracy, macro P, macro R, macro F1, per-class ClassMetrics)."""
    n = confusion.shape[0]
    names = class_names or [str(i) for i in range(n)]
    total = confusion.sum()
    accuracy = float(np.trace(confusion)) / total
    per_class = []
    for c in range(n):
        tp = float(confusion[c, c])
        fp = float(confusion[:, c].sum() - tp)
        fn = float(confusion[c, :].sum() - tp)
        degenerate = False
        if tp + fp == 0:
            precision, degenerate = 0.0, True
        else:
            precision = tp / (tp + fp)
        if tp + fn == 0:
            recall, degenerate = 0.0, True
        else:
            recall = tp / (tp + fn)
        f1 = 0.0 if precision + recall == 0 else 2 * precision * recall / (precision + recall)
        per_class.append(ClassMetrics(names[c], precision, recall, f1, degenerate))
    macro_p = float(np.mean([m.precision for m in per_class]))
    macro_r = float(np.mean([m.recall for m in per_class]))
    macro_f1 = float(np.mean([m.f1 for m in per_class]))
    return accuracy, macro_p, macro_r, macro_f1, per_class


def _binary_scores(preds: PredictionSet, class_id: int) -> tuple:
    positive = preds.labels == class_id
    if not positive.any() or positive.all():
        raise UndefinedMetricError(
            f"class {class_id}: ROC/PR need both positives and negatives present")
    return preds.probs[:, class_id], positive


def roc_auc(preds: PredictionSet, class_id: int) -> tuple:
    """One-vs-rest ROC: ((fpr, tpr) points, thresholds, trapezoidal AUC).

    Points sweep every distinct score from high to low, starting at (0, 0);
    the trapezoid over tie blocks equals the pairwise-ranking probability.
    """
    scores, positive = _binary_scores(preds, class_id)
    n_pos = int(positive.sum())
    n_neg = len(scores) - n_pos
    order = np.argsort(-scores, kind="stable")
    sorted_scores = scores[order]
    sorted_pos = positive[order]
    distinct = np.nonzero(np.diff(sorted_scores))[0]
    block_ends = np.append(distinct, len(scores) - 1)
    tps = np.cumsum(sorted_pos)[block_ends]
    fps = block_ends + 1 - tps
    points = np.column_stack([np.append(0.0, fps / n_neg), np.append(0.0, tps / n_pos)])
    thresholds = np.append(math.inf, sorted_scores[block_ends])
    auc = float(np.trapezoid(points[:, 1], points[:, 0]))
    return points, thresholds, auc


def _threshold_sweep(preds: PredictionSet, class_id: int) -> np.ndarray:
    scores, _ = _binary_scores(preds, class_id)
    thresholds = np.unique(np.concatenate([scores, [0.0, 1.0]]))[::-1]
    return thresholds


def pr_curve(preds: PredictionSet, class_id: int) -> tuple:
    """((recall, precision) points, thresholds); score >= threshold predicts positive.

    Precision at a threshold admitting no predictions is taken as 1.0 (the
    empty-prediction convention), so the sweep's endpoints are always defined.
    """
    scores, positive = _binary_scores(preds, class_id)
    n_pos = int(positive.sum())
    thresholds = _threshold_sweep(preds, class_id)
    points = []
    for theta in thresholds:
        predicted = scores >= theta
        tp = int((predicted & positive).sum())
        n_pred = int(predicted.sum())
        precision = 1.0 if n_pred == 0 else tp / n_pred
        recall = tp / n_pos
        points.append((recall, precision))
    return np.array(points), thresholds


def f1_threshold_curve(preds: PredictionSet, class_id: int) -> tuple:
    """(thresholds, F1 at each threshold) for the one-vs-rest decision."""
    points, thresholds = pr_curve(preds, class_id)
    recalls, precisions = points[:, 0], points[:, 1]
    denom = precisions + recalls
    f1 = np.where(denom > 0, 2 * precisions * recalls / np.maximum(denom, 1e-300), 0.0)
    return thresholds, f1


# ---------------------------------------------------------------------------
# end-to-end evaluation


def predict(checkpoint: ModelCheckpoint, frames, batch_size: int = 32) -> PredictionSet:
    """Run the checkpointed model over frames and collect probabilities."""
    model = checkpoint.build_model()
    plan = default_plan(checkpoint.config)
    x, labels = featurize(frames, plan, checkpoint.class_ids)
    rows = []
    for lo in range(0, len(x), batch_size):
        rows.append(model.forward(x[lo:lo + batch_size], training=False).data)
    probs = np.concatenate(rows) if rows else np.zeros((0, checkpoint.config.classes))
    snr = np.array([f.snr_db for f in frames])
    return PredictionSet(labels=labels, probs=probs, snr_db=snr, class_ids=checkpoint.class_ids)


def compute_report(preds: PredictionSet) -> MetricsReport:
    names = preds.class_names()
    confusion = confusion_matrix(preds)
    accuracy, macro_p, macro_r, macro_f1, per_class = prf1(confusion, names)
    report = MetricsReport(confusion=confusion, accuracy=accuracy, macro_precision=macro_p,
                           macro_recall=macro_r, macro_f1=macro_f1, per_class=per_class,
                           class_names=names)
    for c in range(preds.n_classes):
        try:
            report.roc[c] = roc_auc(preds, c)
            report.pr[c] = pr_curve(preds, c)
            report.f1_curves[c] = f1_threshold_curve(preds, c)
        except UndefinedMetricError:
            report.skipped_classes.append(names[c])
    for snr in sorted(set(preds.snr_db.tolist())):
        mask = preds.snr_db == snr
        acc = float((preds.probs[mask].argmax(axis=1) == preds.labels[mask]).mean())
        report.per_snr.append((snr, int(mask.sum()), acc))
    return report


def evaluate(checkpoint: ModelCheckpoint, frames, batch_size: int = 32,
             out_dir=None) -> MetricsReport:
    """Predict, compute every metric, and (optionally) write the report files."""
    if not frames:
        raise ConfigurationError("evaluation split is empty")
    preds = predict(checkpoint, frames, batch_size=batch_size)
    report = compute_report(preds)
    if out_dir is not None:
        write_report_files(report, out_dir)
    return report


# ---------------------------------------------------------------------------
# report emission


def write_report_files(report: MetricsReport, out_dir):
    os.makedirs(out_dir, exist_ok=True)
    names = report.class_names

    with open(os.path.join(out_dir, "confusion.csv"), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["true\\pred"] + names)
        for name, row in zip(names, report.confusion):
            writer.writerow([name] + [int(v) for v in row])

    with open(os.path.join(out_dir, "metrics.csv"), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["metric", "value"])
        writer.writerow(["accuracy", repr(report.accuracy)])
        writer.writerow(["macro_precision", repr(report.macro_precision)])
        writer.writerow(["macro_recall", repr(report.macro_recall)])
        writer.writerow(["macro_f1", repr(report.macro_f1)])
        for m in report.per_class:
            writer.writerow([f"precision_{m.name}", repr(m.precision)])
            writer.writerow([f"recall_{m.name}", repr(m.recall)])
            writer.writerow([f"f1_{m.name}", repr(m.f1)])
        for c, (_, _, auc) in sorted(report.roc.items()):
            writer.writerow([f"auc_{names[c]}", repr(auc)])

    def curve_csv(filename, rows):
        with open(os.path.join(out_dir, filename), "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["class", "threshold", "x", "y"])
            writer.writerows(rows)

    rows = []
    for c, (points, thresholds, _) in sorted(report.roc.items()):
        rows += [[names[c], repr(float(t)), repr(float(x)), repr(float(y))]
                 for t, (x, y) in zip(thresholds, points)]
    curve_csv("roc.csv", rows)

    rows = []
    for c, (points, thresholds) in sorted(report.pr.items()):
        rows += [[names[c], repr(float(t)), repr(float(r)), repr(float(p))]
                 for t, (r, p) in zip(thresholds, points)]
    curve_csv("pr.csv", rows)

    rows = []
    for c, (thresholds, f1s) in sorted(report.f1_curves.items()):
        rows += [[names[c], repr(float(t)), repr(float(t)), repr(float(v))]
                 for t, v in zip(thresholds, f1s)]
    curve_csv("f1.csv", rows)

    if report.per_snr:
        with open(os.path.join(out_dir, "snr_accuracy.csv"), "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["snr_db", "count", "accuracy"])
            for snr, count, acc in report.per_snr:
                writer.writerow([repr(float(snr)), count, repr(acc)])

    _write_svg(os.path.join(out_dir, "roc.svg"), "ROC (one-vs-rest)",
               "FPR", "TPR",
               {names[c]: points for c, (points, _, _) in sorted(report.roc.items())})
    _write_svg(os.path.join(out_dir, "pr.svg"), "Precision-Recall",
               "recall", "precision",
               {names[c]: points for c, (points, _) in sorted(report.pr.items())})
    _write_svg(os.path.join(out_dir, "f1_threshold.svg"), "F1 vs decision threshold",
               "threshold", "F1",
               {names[c]: np.column_stack([t, v])
                for c, (t, v) in sorted(report.f1_curves.items())})


_PALETTE = ("#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
            "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22")


def _write_svg(path, title, x_label, y_label, curves: dict):
    """Plain polyline plot on the unit square; styling is not a contract."""
    size, margin = 420, 50
    span = size - 2 * margin

    def px(x):
        return margin + x * span

    def py(y):
        return size - margin - y * span

    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size + 14 * len(curves)}">']
    parts.append(f'<rect x="{margin}" y="{margin}" width="{span}" height="{span}" '
                 'fill="none" stroke="black"/>')
    parts.append(f'<text x="{size // 2}" y="20" text-anchor="middle">{title}</text>')
    parts.append(f'<text x="{size // 2}" y="{size - 10}" text-anchor="middle">{x_label}</text>')
    parts.append(f'<text x="14" y="{size // 2}" text-anchor="middle" '
                 f'transform="rotate(-90 14 {size // 2})">{y_label}</text>')
    for i, (name, points) in enumerate(curves.items()):
        color = _PALETTE[i % len(_PALETTE)]
        coords = " ".join(f"{px(float(x)):.2f},{py(float(y)):.2f}" for x, y in points)
        parts.append(f'<polyline points="{coords}" fill="none" stroke="{color}"/>')
        ly = size + 14 * i + 4
        parts.append(f'<line x1="{margin}" y1="{ly - 4}" x2="{margin + 18}" y2="{ly - 4}" '
                     f'stroke="{color}"/>')
        parts.append(f'<text x="{margin + 24}" y="{ly}" font-size="11">{name}</text>')
    parts.append("</svg>")
    with open(path, "w") as fh:
        fh.write("\n".join(parts))
