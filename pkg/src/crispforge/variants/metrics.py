"""Model quality metrics.

Scores whose denominator vanishes (or whose inputs do not fit the metric)
come back as an explicit undefined :class:`MetricScore`, never as 0.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Sequence

from ..errors import DataError

ACCURACY = "metric.accuracy"
SENSITIVITY = "metric.sensitivity"
SPECIFICITY = "metric.specificity"
ROC_AUC = "metric.roc_auc"
MAE = "metric.mae"

#: metric id -> higher_is_better
METRICS = {ACCURACY: True, SENSITIVITY: True, SPECIFICITY: True, ROC_AUC: True, MAE: False}

#: metrics evaluated on real-valued scores instead of predicted labels
SCORE_METRICS = frozenset({ROC_AUC})


@dataclass(frozen=True)
class MetricScore:
    metric: str
    value: float | None
    higher_is_better: bool
    reason: str | None = None

    @property
    def defined(self) -> bool:
        return self.value is not None

    def to_dict(self) -> dict:
        d: dict[str, Any] = {"value": self.value, "higher_is_better": self.higher_is_better}
        if self.reason:
            d["undefined"] = self.reason
        return d


def undefined(metric: str, reason: str) -> MetricScore:
    return MetricScore(metric, None, METRICS[metric], reason)


@dataclass(frozen=True)
class Confusion:
    tp: int
    tn: int
    fp: int
    fn: int


def confusion(truth: Sequence, predicted: Sequence, positive: Any) -> Confusion:
    tp = tn = fp = fn = 0
    for t, p in zip(truth, predicted):
        if t == positive:
            if p == positive:
                tp += 1
            else:
                fn += 1
        elif p == positive:
            fp += 1
        else:
            tn += 1
    return Confusion(tp, tn, fp, fn)


def default_positive(truth: Sequence, predicted: Sequence = ()) -> Any:
    """Lexicographically greatest label."""
    return max(set(truth) | set(predicted))


def _is_number(v: Any) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def roc_auc(truth: Sequence, scores: Sequence[float], positive: Any) -> float | None:
    """Mann-Whitney form of the ROC area, ties at half credit (midranks)."""
    n_pos = sum(1 for t in truth if t == positive)
    n_neg = len(truth) - n_pos
    if n_pos == 0 or n_neg == 0:
        return None
    order = sorted(range(len(scores)), key=lambda i: scores[i])
    ranks = [0.0] * len(scores)
    i = 0
    while i < len(order):
        j = i
        while j + 1 < len(order) and scores[order[j + 1]] == scores[order[i]]:
            j += 1
        mid = (i + j + 2) / 2  # 1-based average rank of the tie block
        for k in range(i, j + 1):
            ranks[order[k]] = mid
        i = j + 1
    rank_sum = sum(r for r, t in zip(ranks, truth) if t == positive)
    return (rank_sum - n_pos * (n_pos + 1) / 2) / (n_pos * n_neg)


def evaluate_metric(
    metric: str, truth: Sequence, predicted: Sequence, positive: Any = None
) -> MetricScore:
    """Score ``predicted`` labels (or scores, for ROC-AUC) against ``truth``."""
    if metric not in METRICS:
        raise DataError("BAD_PARAM", f"unknown metric {metric!r}")
    if len(truth) != len(predicted):
        raise DataError("LENGTH_MISMATCH", f"{len(truth)} truths vs {len(predicted)} predictions")
    if not truth:
        raise DataError("LENGTH_MISMATCH", "no observations")
    hib = METRICS[metric]

    if metric == ACCURACY:
        hits = sum(1 for t, p in zip(truth, predicted) if t == p)
        return MetricScore(metric, hits / len(truth), hib)

    if metric == MAE:
        if not all(_is_number(v) for v in truth) or not all(_is_number(v) for v in predicted):
            return undefined(metric, "non-numeric values")
        return MetricScore(
            metric, sum(abs(t - p) for t, p in zip(truth, predicted)) / len(truth), hib
        )

    labels = set(truth)
    if len(labels) > 2:
        return undefined(metric, f"{len(labels)} classes; binary labels required")
    if metric == ROC_AUC:
        if not all(_is_number(s) for s in predicted):
            return undefined(metric, "scores must be real-valued")
        pos = default_positive(truth) if positive is None else positive
        value = roc_auc(truth, predicted, pos)
        if value is None:
            return undefined(metric, "needs both positive and negative observations")
        return MetricScore(metric, value, hib)

    pos = default_positive(truth, predicted) if positive is None else positive
    cm = confusion(truth, predicted, pos)
    if metric == SENSITIVITY:
        den = cm.tp + cm.fn
        if den == 0:
            return undefined(metric, "no positive observations")
        return MetricScore(metric, cm.tp / den, hib)
    den = cm.tn + cm.fp
    if den == 0:
        return undefined(metric, "no negative observations")
    return MetricScore(metric, cm.tn / den, hib)
