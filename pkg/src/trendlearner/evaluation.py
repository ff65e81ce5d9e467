"""Classification, earliness and regression metrics."""
from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.stats import rankdata

from .errors import InvalidInputError, InvalidTargetError, UndefinedCorrelationError, UndefinedRIError


def f1_scores(truth, predicted, k):
    """Micro F1, macro F1 and per-class F1 for single-label multiclass predictions.

    Predictions outside ``0..k-1`` (e.g. an abstain marker) count as wrong
    for the true class and as nobody's false positive.
    """
    truth = np.asarray(truth, dtype=np.int64)
    predicted = np.asarray(predicted, dtype=np.int64)
    if truth.shape != predicted.shape:
        raise InvalidInputError("truth and predictions differ in length")
    if truth.size and (truth.min() < 0 or truth.max() >= k):
        raise InvalidInputError(f"true labels must lie in 0..{k - 1}")
    per_class = np.zeros(k)
    tp_all = fp_all = fn_all = 0
    for c in range(k):
        tp = int(np.sum((predicted == c) & (truth == c)))
        fp = int(np.sum((predicted == c) & (truth != c)))
        fn = int(np.sum((predicted != c) & (truth == c)))
        tp_all, fp_all, fn_all = tp_all + tp, fp_all + fp, fn_all + fn
        per_class[c] = _f1(tp, fp, fn)
    return _f1(tp_all, fp_all, fn_all), float(per_class.mean()), per_class


def _f1(tp, fp, fn):
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    if precision + recall == 0:
        return 0.0
    return 2 * precision * recall / (precision + recall)


def remaining_interest(views, t):
    """Fraction of total views arriving after window ``t``."""
    v = np.asarray(views, dtype=float)
    if not 0 <= t <= v.size:
        raise InvalidInputError(f"t must lie in 0..{v.size}, got {t}")
    total = v.sum()
    if total <= 0:
        raise UndefinedRIError("remaining interest is undefined for a series without views")
    return float(v[t:].sum() / total)


def bias_correlations(total_views, ri):
    """Pearson and Spearman correlation between log10 total views and remaining interest."""
    x = np.asarray(total_views, dtype=float)
    y = np.asarray(ri, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise InvalidInputError("need two equal-length vectors")
    if x.size < 2:
        raise InvalidInputError("need at least two objects")
    if np.any(x <= 0):
        raise InvalidInputError("total views must be positive")
    lx = np.log10(x)
    return _pearson(lx, y), _pearson(rankdata(lx), rankdata(y))


def _pearson(x, y):
    dx = x - x.mean()
    dy = y - y.mean()
    sx = math.sqrt(float(dx @ dx))
    sy = math.sqrt(float(dy @ dy))
    if sx == 0 or sy == 0:
        raise UndefinedCorrelationError("correlation is undefined for constant input")
    return float(np.clip((dx @ dy) / (sx * sy), -1.0, 1.0))


def mrse(predicted, actual):
    """Mean of ``(predicted / actual - 1)^2``."""
    p = np.asarray(predicted, dtype=float)
    a = np.asarray(actual, dtype=float)
    if p.shape != a.shape:
        raise InvalidInputError("predicted and actual differ in length")
    if np.any(a <= 0):
        raise InvalidTargetError("actual values must be positive")
    if p.size == 0:
        raise InvalidInputError("no samples")
    return float(np.mean((p / a - 1.0) ** 2))


def ci_halfwidth(values, z=1.959963984540054):
    """Half-width of the normal-approximation 95% confidence interval of the mean."""
    v = np.asarray(values, dtype=float)
    if v.size < 2:
        return 0.0
    return float(z * v.std(ddof=1) / math.sqrt(v.size))


def ccdf(values):
    """Points ``(x, P[X >= x])`` of the empirical complementary CDF."""
    v = np.sort(np.asarray(values, dtype=float))
    n = v.size
    return [(float(x), float((n - i) / n)) for i, x in enumerate(v)]


@dataclass
class EvalReport:
    micro_f1: float
    macro_f1: float
    per_class_f1: list
    n_objects: int
    ri_correct: list = field(default_factory=list)
    ri_incorrect: list = field(default_factory=list)
    pearson: float | None = None
    spearman: float | None = None
    correlation_error: str | None = None
    mrse: float | None = None
    extra: dict = field(default_factory=dict)

    def to_dict(self):
        return asdict(self)

    def to_json(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    def csv_row(self):
        """Flat scalar summary for per-fold aggregation."""
        row = {
            "micro_f1": self.micro_f1,
            "macro_f1": self.macro_f1,
            "n_objects": self.n_objects,
            "median_ri_correct": float(np.median(self.ri_correct)) if self.ri_correct else None,
            "pearson": self.pearson,
            "spearman": self.spearman,
            "mrse": self.mrse,
        }
        row.update({f"f1_class{i}": v for i, v in enumerate(self.per_class_f1)})
        return row


def evaluate_predictions(truth, predicted, t, views, k):
    """Full report for one set of predictions.

    ``views`` holds each object's complete series; ``t`` the prediction
    windows. Correlations are computed over correctly classified objects.
    """
    truth = np.asarray(truth, dtype=np.int64)
    predicted = np.asarray(predicted, dtype=np.int64)
    micro, macro, per_class = f1_scores(truth, predicted, k)
    ri = np.array([remaining_interest(v, int(tt)) for v, tt in zip(views, t)])
    correct = truth == predicted
    report = EvalReport(
        micro_f1=micro,
        macro_f1=macro,
        per_class_f1=per_class.tolist(),
        n_objects=int(truth.size),
        ri_correct=ri[correct].tolist(),
        ri_incorrect=ri[~correct].tolist(),
    )
    totals = np.array([float(np.sum(v)) for v in views])[correct]
    try:
        report.pearson, report.spearman = bias_correlations(totals, ri[correct])
    except (UndefinedCorrelationError, InvalidInputError) as exc:
        report.correlation_error = str(exc)
    return report


def write_csv(path, rows, fieldnames=None):
    rows = list(rows)
    if fieldnames is None:
        fieldnames = list(rows[0]) if rows else []
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=fieldnames)
        w.writeheader()
        w.writerows(rows)
