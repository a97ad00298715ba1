"""Binary classification metrics, cumulative gain curves and the model-vs-RFM table.

Ratios with a zero denominator are reported as 0.0 and named in
``MetricsReport.zero_division``.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .rfm import DEFAULT_RULES, rfm_as_binary_predictor


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    fn: int
    tn: int

    @property
    def n(self) -> int:
        return self.tp + self.fp + self.fn + self.tn


@dataclass(frozen=True)
class MetricsReport:
    precision: float
    recall: float
    specificity: float
    balanced_accuracy: float
    weighted_f1: float
    zero_division: tuple[str, ...] = field(default=())


def confusion(predictions, truths) -> ConfusionCounts:
    p = np.asarray(predictions).astype(bool).ravel()
    t = np.asarray(truths).astype(bool).ravel()
    if p.size != t.size:
        raise ValueError(f"predictions ({p.size}) and truths ({t.size}) differ in length")
    if p.size == 0:
        raise ValueError("confusion needs at least one sample")
    return ConfusionCounts(tp=int(np.sum(p & t)), fp=int(np.sum(p & ~t)),
                           fn=int(np.sum(~p & t)), tn=int(np.sum(~p & ~t)))


def _ratio(num, den, name, flags):
    if den == 0:
        flags.append(name)
        return 0.0
    return num / den


def _f1(prec, rec):
    return 0.0 if prec + rec == 0 else 2 * prec * rec / (prec + rec)


def metrics(c: ConfusionCounts) -> MetricsReport:
    """Precision, recall, specificity, balanced accuracy and support-weighted F1.

    Class supports are taken from the counts: positives tp + fn, negatives tn + fp.
    """
    flags = []
    precision = _ratio(c.tp, c.tp + c.fp, "precision", flags)
    recall = _ratio(c.tp, c.tp + c.fn, "recall", flags)
    specificity = _ratio(c.tn, c.tn + c.fp, "specificity", flags)
    npv = _ratio(c.tn, c.tn + c.fn, "negative_predictive_value", flags)
    n_pos, n_neg = c.tp + c.fn, c.tn + c.fp
    weighted_f1 = (n_pos * _f1(precision, recall) + n_neg * _f1(npv, specificity)) / c.n
    return MetricsReport(precision, recall, specificity, (recall + specificity) / 2,
                         weighted_f1, tuple(flags))


def evaluate_predictions(predictions, truths) -> MetricsReport:
    return metrics(confusion(predictions, truths))


@dataclass(frozen=True)
class GainCurve:
    fraction_targeted: np.ndarray
    fraction_captured: np.ndarray

    def at(self, fraction: float) -> float:
        """Captured fraction after targeting the first ``ceil(fraction * N)`` customers."""
        n = len(self.fraction_targeted) - 1
        k = int(np.ceil(fraction * n - 1e-12))
        return float(self.fraction_captured[min(max(k, 0), n)])

    def write_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["fraction_targeted", "fraction_captured"])
            for x, y in zip(self.fraction_targeted.tolist(), self.fraction_captured.tolist()):
                w.writerow([repr(x), repr(y)])


def gain_curve(ids, scores, truths) -> GainCurve:
    """Cumulative gain curve; ``truths`` is aligned with ``ids`` (1 = true positive).

    Ranking is by descending score with ties broken by ascending id.
    """
    ids = np.asarray(ids, dtype=np.int64)
    scores = np.asarray(scores, dtype=np.float64)
    truths = np.asarray(truths).astype(np.int64)
    if not (ids.shape == scores.shape == truths.shape):
        raise ValueError("ids, scores and truths must have equal length")
    total = int(truths.sum())
    if total == 0:
        raise ValueError("gain curve undefined without true positives")
    order = np.lexsort((ids, -scores))
    captured = np.concatenate(([0], np.cumsum(truths[order])))
    n = ids.size
    return GainCurve(np.arange(n + 1) / n, captured / total)


@dataclass(frozen=True)
class ComparisonRow:
    method: str
    report: MetricsReport


def compare_table(model_scores, rfm_segments, truths, cut: float = 0.5,
                  targets=None, rules=DEFAULT_RULES) -> list[ComparisonRow]:
    """One row per RFM target segment plus ``Model segment`` (score > cut).

    All inputs are aligned arrays over the same evaluation population.
    """
    model_scores = np.asarray(model_scores, dtype=np.float64)
    rfm_segments = np.asarray(rfm_segments, dtype=object)
    truths = np.asarray(truths)
    if not (model_scores.shape == rfm_segments.shape == truths.shape):
        raise ValueError("model scores, RFM segments and truths must cover the same population")
    targets = [r.name for r in rules] if targets is None else list(targets)
    rows = [ComparisonRow(f"{t} (RFM)",
                          evaluate_predictions(rfm_as_binary_predictor(rfm_segments, t, rules), truths))
            for t in targets]
    rows.append(ComparisonRow("Model segment",
                              evaluate_predictions(model_scores > cut, truths)))
    return rows


def write_comparison_csv(rows, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["method", "precision", "recall", "balanced_accuracy", "weighted_f1"])
        for row in rows:
            r = row.report
            w.writerow([row.method, repr(r.precision), repr(r.recall),
                        repr(r.balanced_accuracy), repr(r.weighted_f1)])


def format_comparison(rows) -> str:
    lines = [f"{'method':<28}{'precision':>10}{'recall':>10}{'bal_acc':>10}{'w_f1':>10}"]
    for row in rows:
        r = row.report
        lines.append(f"{row.method:<28}{r.precision:>10.3f}{r.recall:>10.3f}"
                     f"{r.balanced_accuracy:>10.3f}{r.weighted_f1:>10.3f}")
    return "\n".join(lines)
