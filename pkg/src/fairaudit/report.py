"""Audit tables (plain text and TSV) and per-group score histograms."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from decimal import ROUND_HALF_EVEN, Decimal
from typing import Optional, Sequence

import numpy as np

from .data import GROUP_A, GROUP_B, GroupVector
from .fairness import FairnessReport
from .postprocess import ThresholdPolicy

UNDEFINED = "—"

ROW_TITLES = (
    ("accuracy", "Accuracy"),
    ("recall", "Equality of opportunity (Recall)"),
    ("positive_rate", "Demographic Parity (Prop. Positive Predictions)"),
    ("precision", "Positive Predictive Parity (Precision)"),
)


def fmt3(value: Optional[float]) -> str:
    """Round half-to-even at 3 decimals; negative zero prints as 0.000."""
    if value is None:
        return UNDEFINED
    d = Decimal(value).quantize(Decimal("0.001"), rounding=ROUND_HALF_EVEN)
    if d == 0:
        d = abs(d)
    return f"{d:.3f}"


def _models(orig: FairnessReport, fair: Optional[FairnessReport], tag: str) -> list:
    if fair is None:
        return [(tag, orig)]
    if orig.attribute_name != fair.attribute_name or orig.group_labels != fair.group_labels:
        raise ValueError("orig and fair reports describe different attributes or groups")
    return [("orig", orig), ("fair", fair)]


def table_rows(orig: FairnessReport, fair: Optional[FairnessReport] = None, tag: str = "orig") -> list:
    rows = []
    for key, title in ROW_TITLES:
        for model, rep in _models(orig, fair, tag):
            delta = rep.deltas[key]
            cell = fmt3(delta) + (rep.stars[key] if delta is not None else "")
            rows.append((title, model, fmt3(rep.metrics_a.value(key)), fmt3(rep.metrics_b.value(key)), cell))
    return rows


def render_table(orig: FairnessReport, fair: Optional[FairnessReport] = None, tag: str = "orig") -> tuple:
    """Render one attribute's table; returns (plain text, TSV).

    With ``fair`` given, each metric gets an orig and a fair row.  Without it
    the single report is rendered under ``tag``.
    """
    rows = table_rows(orig, fair, tag)
    per_metric = 1 if fair is None else 2
    a, b = orig.group_labels
    header = (orig.attribute_name, "", a, b, "Delta")
    widths = [max(len(r[i]) for r in rows + [header]) for i in range(5)]

    def line(cells):
        left = [cells[0].ljust(widths[0]), cells[1].ljust(widths[1])]
        right = [c.rjust(w) for c, w in zip(cells[2:], widths[2:])]
        return "  ".join(left + right).rstrip()

    out = [line(header), "-" * len(line(header))]
    for i, r in enumerate(rows):
        out.append(line(r if i % per_metric == 0 else ("",) + r[1:]))
    text = "\n".join(out) + "\n"

    buf = io.StringIO()
    w = csv.writer(buf, delimiter="\t", lineterminator="\n")
    w.writerow(("attribute", "metric", "model", "group_a", "group_b", "delta"))
    for r in rows:
        w.writerow((orig.attribute_name,) + r)
    return text, buf.getvalue()


def render_tables(pairs: Sequence[tuple], tag: str = "orig") -> tuple:
    """Concatenate attribute sections: blank line between text sections, one TSV header.

    ``pairs`` holds (orig, fair) tuples; fair may be None.
    """
    texts, tsvs = [], []
    for orig, fair in pairs:
        t, s = render_table(orig, fair, tag)
        texts.append(t)
        tsvs.append(s if not tsvs else s.split("\n", 1)[1])
    return "\n".join(texts), "".join(tsvs)


@dataclass(frozen=True)
class HistogramExport:
    edges: np.ndarray  # n_bins + 1 increasing edges from 0 to 1
    groups: tuple  # group labels in output order
    counts: np.ndarray  # (n_groups, 2 classes, n_bins); class index = true label
    thresholds: tuple  # ((group label or "default", threshold), ...)

    @property
    def bins(self) -> list:
        return list(zip(self.edges[:-1], self.edges[1:]))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(("bin_lo", "bin_hi", "group", "true_class", "count"))
        for g, label in enumerate(self.groups):
            for cls in (0, 1):
                for k, (lo, hi) in enumerate(self.bins):
                    w.writerow((repr(float(lo)), repr(float(hi)), label, cls, int(self.counts[g, cls, k])))
        return buf.getvalue()

    def thresholds_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(("group", "threshold"))
        for g, t in self.thresholds:
            w.writerow((g, repr(float(t))))
        return buf.getvalue()


def bin_index(probs: np.ndarray, edges: np.ndarray) -> np.ndarray:
    """Half-open bins [lo, hi) with the last bin closed at 1."""
    k = np.searchsorted(edges, probs, side="right") - 1
    return np.clip(k, 0, edges.size - 2)


def export_histograms(probs, labels, groups: GroupVector, policy: ThresholdPolicy, n_bins: int = 50) -> HistogramExport:
    probs = np.asarray(probs, dtype=np.float64)
    labels = np.asarray(labels).astype(np.int64)
    if n_bins < 1:
        raise ValueError("n_bins must be >= 1")
    if probs.size == 0:
        raise ValueError("no probabilities to bin")
    if not (probs.size == labels.size == len(groups)):
        raise ValueError("probs, labels and groups must have equal length")
    if ((probs < 0) | (probs > 1)).any():
        raise ValueError("probabilities must lie in [0, 1]")
    edges = np.arange(n_bins + 1) / n_bins
    k = bin_index(probs, edges)
    counts = np.zeros((2, 2, n_bins), dtype=np.int64)
    codes = np.asarray(groups.codes)
    for g in (GROUP_A, GROUP_B):
        for cls in (0, 1):
            sel = (codes == g) & (labels == cls)
            counts[g, cls] = np.bincount(k[sel], minlength=n_bins)
    marks = [("default", policy.default_threshold)]
    marks += [(lab, policy.overrides[lab]) for lab in groups.labels if lab in policy.overrides]
    return HistogramExport(edges, tuple(groups.labels), counts, tuple(marks))
