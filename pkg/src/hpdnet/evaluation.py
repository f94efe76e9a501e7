"""Confusion matrix, OA / AA / Kappa, and report formatting."""
from dataclasses import dataclass

import numpy as np

from .errors import EmptyInput, ShapeError


@dataclass
class MetricsReport:
    per_class: np.ndarray
    oa: float
    aa: float
    kappa: float
    class_ids: tuple


def confusion(pred, truth, num_classes=None):
    """Counts over pixels with ``truth != 0``; rows are truth, columns prediction.

    Class ``c`` occupies row/column ``c - 1``.
    """
    pred = np.asarray(pred)
    truth = np.asarray(truth)
    if pred.shape != truth.shape:
        raise ShapeError(f"prediction shape {pred.shape} != truth shape {truth.shape}")
    if num_classes is None:
        num_classes = int(max(truth.max(initial=0), pred.max(initial=0)))
    mask = truth != 0
    t = truth[mask].astype(np.int64)
    p = pred[mask].astype(np.int64)
    if t.size and (p.min() < 1 or max(p.max(), t.max()) > num_classes):
        raise ValueError(f"labels at evaluated pixels must lie in 1..{num_classes}")
    cm = np.zeros((num_classes, num_classes), dtype=np.int64)
    np.add.at(cm, (t - 1, p - 1), 1)
    return cm


def metrics(cm):
    """Per-class accuracy, OA, AA (over non-empty rows) and Cohen's kappa."""
    cm = np.asarray(cm, dtype=np.int64)
    if cm.ndim != 2 or cm.shape[0] != cm.shape[1]:
        raise ShapeError(f"confusion matrix must be square, got {cm.shape}")
    rows = cm.sum(axis=1)
    cols = cm.sum(axis=0)
    total = int(rows.sum())
    if total == 0:
        raise EmptyInput("no labelled pixels to evaluate")
    diag = np.diag(cm).astype(np.float64)
    nonempty = rows > 0
    per_class = np.where(nonempty, diag / np.where(nonempty, rows, 1), 0.0)
    oa = float(diag.sum() / total)
    aa = float(per_class[nonempty].mean())
    pe = float((rows.astype(np.float64) * cols).sum() / (float(total) ** 2))
    # a single populated class predicted perfectly gives pe = 1
    kappa = 1.0 if pe == 1.0 else (oa - pe) / (1.0 - pe)
    return MetricsReport(per_class, oa, aa, float(kappa), tuple(range(1, cm.shape[0] + 1)))


def evaluate(pred, truth, num_classes=None):
    cm = confusion(pred, truth, num_classes)
    return cm, metrics(cm)


def format_table(cm, report):
    lines = ["class  accuracy"]
    for c, acc in zip(report.class_ids, report.per_class):
        lines.append(f"{c:>5}  {100 * acc:8.2f}")
    lines += [f"   OA  {100 * report.oa:8.2f}",
              f"   AA  {100 * report.aa:8.2f}",
              f"Kappa  {100 * report.kappa:8.2f}",
              "", "confusion (rows = truth, cols = prediction)"]
    for row in cm:
        lines.append(" ".join(f"{v:8d}" for v in row))
    return "\n".join(lines) + "\n"


def format_keyvalue(cm, report):
    """Machine-readable report; floats use ``repr`` so files are bit-faithful."""
    lines = [f"oa={report.oa!r}", f"aa={report.aa!r}", f"kappa={report.kappa!r}"]
    lines += [f"acc[{c}]={a!r}" for c, a in zip(report.class_ids, report.per_class.tolist())]
    lines += [f"cm[{i + 1}][{j + 1}]={int(cm[i, j])}"
              for i in range(cm.shape[0]) for j in range(cm.shape[1])]
    return "\n".join(lines) + "\n"


def parse_keyvalue(text):
    out = {}
    for line in text.splitlines():
        if "=" in line:
            k, v = line.split("=", 1)
            out[k.strip()] = float(v)
    return out
