"""Per-group accuracy, recall, positive-prediction rate and precision, with group deltas.

Metrics are computed from integer confusion counts with a single final
division.  A metric whose denominator is zero is ``None`` (undefined).
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .data import GROUP_A, GROUP_B, GroupVector
from .stats import significance_stars, two_prop_test

METRICS = ("accuracy", "recall", "positive_rate", "precision")


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int = 0
    fp: int = 0
    tn: int = 0
    fn: int = 0

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn

    def __add__(self, other: "ConfusionCounts") -> "ConfusionCounts":
        return ConfusionCounts(self.tp + other.tp, self.fp + other.fp, self.tn + other.tn, self.fn + other.fn)


def _as_binary(v, name):
    a = np.asarray(v)
    if a.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional")
    if a.size and not np.isin(a, (0, 1)).all():
        raise ValueError(f"{name} must be binary 0/1")
    return a.astype(bool)


def confusion(labels, preds, group_mask=None) -> ConfusionCounts:
    y = _as_binary(labels, "labels")
    p = _as_binary(preds, "preds")
    if y.size != p.size:
        raise ValueError(f"length mismatch: {y.size} labels vs {p.size} predictions")
    if group_mask is not None:
        m = np.asarray(group_mask, dtype=bool)
        if m.size != y.size:
            raise ValueError(f"length mismatch: {m.size} mask entries vs {y.size} labels")
        y, p = y[m], p[m]
    tp = int(np.count_nonzero(y & p))
    fp = int(np.count_nonzero(~y & p))
    fn = int(np.count_nonzero(y & ~p))
    return ConfusionCounts(tp, fp, int(y.size) - tp - fp - fn, fn)


def accuracy(c: ConfusionCounts) -> float:
    if c.total == 0:
        raise ValueError("accuracy of an empty group")
    return (c.tp + c.tn) / c.total


def recall(c: ConfusionCounts) -> Optional[float]:
    d = c.tp + c.fn
    return c.tp / d if d else None


def positive_rate(c: ConfusionCounts) -> float:
    if c.total == 0:
        raise ValueError("positive rate of an empty group")
    return (c.tp + c.fp) / c.total


def precision(c: ConfusionCounts) -> Optional[float]:
    d = c.tp + c.fp
    return c.tp / d if d else None


def f_score(labels, preds) -> float:
    """F1 over all rows."""
    c = confusion(labels, preds)
    if c.tp + c.fn == 0 and c.tp + c.fp == 0:
        raise ValueError("F1 undefined: no positive labels and no positive predictions")
    # 2PR/(P+R) == 2tp / (2tp + fp + fn)
    return 2 * c.tp / (2 * c.tp + c.fp + c.fn)


def metric_proportion(c: ConfusionCounts, metric: str):
    """(successes, trials) behind a metric, as fed to the two-proportion test."""
    if metric == "accuracy":
        return c.tp + c.tn, c.total
    if metric == "recall":
        return c.tp, c.tp + c.fn
    if metric == "positive_rate":
        return c.tp + c.fp, c.total
    if metric == "precision":
        return c.tp, c.tp + c.fp
    raise ValueError(f"unknown metric {metric!r}")


@dataclass(frozen=True)
class GroupMetrics:
    group_label: str
    counts: ConfusionCounts
    accuracy: float
    recall: Optional[float]
    positive_rate: float
    precision: Optional[float]

    @property
    def n(self) -> int:
        return self.counts.total

    @classmethod
    def from_counts(cls, label: str, c: ConfusionCounts) -> "GroupMetrics":
        return cls(label, c, accuracy(c), recall(c), positive_rate(c), precision(c))

    def value(self, metric: str) -> Optional[float]:
        return getattr(self, metric)


@dataclass(frozen=True)
class FairnessReport:
    attribute_name: str
    metrics_a: GroupMetrics
    metrics_b: GroupMetrics
    deltas: dict  # metric -> B - A, or None
    p_values: dict  # metric -> two-sided p, or None
    stars: dict  # metric -> "", "*", "**", "***"

    @property
    def group_labels(self) -> tuple:
        return (self.metrics_a.group_label, self.metrics_b.group_label)

    def to_dict(self) -> dict:
        def gm(m: GroupMetrics):
            return {
                "group": m.group_label, "n": m.n,
                "counts": {"tp": m.counts.tp, "fp": m.counts.fp, "tn": m.counts.tn, "fn": m.counts.fn},
                **{k: m.value(k) for k in METRICS},
            }
        return {
            "attribute": self.attribute_name,
            "group_a": gm(self.metrics_a),
            "group_b": gm(self.metrics_b),
            "delta": dict(self.deltas),
            "p_value": dict(self.p_values),
            "stars": dict(self.stars),
        }


def build_report(labels, preds, groups: GroupVector, attribute_name: Optional[str] = None) -> FairnessReport:
    codes = np.asarray(groups.codes)
    ca = confusion(labels, preds, codes == GROUP_A)
    cb = confusion(labels, preds, codes == GROUP_B)
    if ca.total == 0 or cb.total == 0:
        empty = groups.labels[0] if ca.total == 0 else groups.labels[1]
        raise ValueError(f"group {empty!r} has no rows")
    ma = GroupMetrics.from_counts(groups.labels[0], ca)
    mb = GroupMetrics.from_counts(groups.labels[1], cb)
    deltas, pvals, stars = {}, {}, {}
    for k in METRICS:
        va, vb = ma.value(k), mb.value(k)
        deltas[k] = None if va is None or vb is None else vb - va
        xa, na = metric_proportion(ca, k)
        xb, nb = metric_proportion(cb, k)
        if na and nb:
            p = two_prop_test(xb, nb, xa, na).p_two_sided
            pvals[k] = p
            stars[k] = significance_stars(p)
        else:
            pvals[k] = None
            stars[k] = ""
    return FairnessReport(attribute_name or groups.attribute_name, ma, mb, deltas, pvals, stars)
