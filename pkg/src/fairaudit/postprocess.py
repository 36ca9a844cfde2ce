"""Threshold policies and the equal-opportunity threshold search."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .data import GROUP_A, GROUP_B, GroupVector
from .fairness import FairnessReport, build_report


@dataclass(frozen=True)
class ThresholdPolicy:
    default_threshold: float = 0.5
    overrides: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "overrides", dict(self.overrides))
        for t in (self.default_threshold, *self.overrides.values()):
            if not (0.0 <= t <= 1.0):
                raise ValueError(f"threshold {t!r} outside [0, 1]")

    def threshold_for(self, label) -> float:
        return self.overrides.get(label, self.default_threshold)


def format_policy(policy: ThresholdPolicy) -> str:
    lines = [f"default = {policy.default_threshold!r}"]
    lines += [f"group.{g} = {t!r}" for g, t in sorted(policy.overrides.items())]
    return "\n".join(lines) + "\n"


def parse_policy(text: str) -> ThresholdPolicy:
    default = 0.5
    overrides = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = (s.strip() for s in line.partition("="))
        if not sep:
            raise ValueError(f"policy line {lineno}: expected 'key = value'")
        try:
            t = float(value)
        except ValueError:
            raise ValueError(f"policy line {lineno}: bad threshold {value!r}") from None
        if key == "default":
            default = t
        elif key.startswith("group.") and len(key) > 6:
            overrides[key[6:]] = t
        else:
            raise ValueError(f"policy line {lineno}: unknown key {key!r}")
    return ThresholdPolicy(default, overrides)


def save_policy(policy: ThresholdPolicy, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(format_policy(policy))


def load_policy(path) -> ThresholdPolicy:
    with open(path, encoding="utf-8") as fh:
        return parse_policy(fh.read())


def row_thresholds(groups: GroupVector, policy: ThresholdPolicy) -> np.ndarray:
    codes = np.asarray(groups.codes)
    th = np.full(codes.size, policy.default_threshold, dtype=np.float64)
    for code in (GROUP_A, GROUP_B):
        th[codes == code] = policy.threshold_for(groups.labels[code])
    return th


def apply_policy(probs, groups: GroupVector, policy: ThresholdPolicy) -> np.ndarray:
    """1 where prob >= the row's group threshold; excluded rows use the default."""
    probs = np.asarray(probs, dtype=np.float64)
    if probs.size != len(groups):
        raise ValueError(f"length mismatch: {probs.size} probabilities vs {len(groups)} group entries")
    return (probs >= row_thresholds(groups, policy)).astype(np.uint8)


def grid_points(grid_step: float) -> int:
    """Number of intervals ``m`` in the grid {0, 1/m, ..., 1}; ``1/grid_step`` must be an integer."""
    m = round(1.0 / grid_step)
    if m < 1 or not math.isclose(m * grid_step, 1.0, rel_tol=1e-9):
        raise ValueError(f"grid_step {grid_step!r} must divide 1 evenly")
    return m


def _counts_by_threshold(probs, labels, grid):
    # rows predicted positive at each grid threshold, split by label
    pos = np.sort(probs[labels == 1])
    neg = np.sort(probs[labels == 0])
    tp = pos.size - np.searchsorted(pos, grid, side="left")
    fp = neg.size - np.searchsorted(neg, grid, side="left")
    return tp.astype(np.int64), fp.astype(np.int64), pos.size, neg.size


def equalize_opportunity(probs, labels, groups: GroupVector, grid_step: float = 0.01) -> ThresholdPolicy:
    """Per-group thresholds minimizing the recall gap over the grid.

    Ties are broken by higher accuracy over both groups, then by the smaller
    total distance from 0.5, then by the lexicographically smaller pair.
    """
    probs = np.asarray(probs, dtype=np.float64)
    labels = np.asarray(labels).astype(np.int64)
    codes = np.asarray(groups.codes)
    if not (probs.size == labels.size == codes.size):
        raise ValueError("probs, labels and groups must have equal length")
    m = grid_points(grid_step)
    grid = np.arange(m + 1) / m
    per = []
    for code in (GROUP_A, GROUP_B):
        sel = codes == code
        tp, fp, P, N = _counts_by_threshold(probs[sel], labels[sel], grid)
        if P == 0:
            raise ValueError(f"group {groups.labels[code]!r} has no positive labels; recall undefined")
        per.append((tp, fp, P, N))
    (tpa, fpa, Pa, Na), (tpb, fpb, Pb, Nb) = per
    # |recall_a - recall_b| * Pa * Pb, exact in integers
    gap = np.abs(tpa[:, None] * Pb - tpb[None, :] * Pa)
    correct = (tpa + (Na - fpa))[:, None] + (tpb + (Nb - fpb))[None, :]
    idx = np.arange(m + 1)
    dist = np.abs(2 * idx - m)[:, None] + np.abs(2 * idx - m)[None, :]
    cand = gap == gap.min()
    best_correct = correct[cand].max()
    cand &= correct == best_correct
    best_dist = dist[cand].min()
    cand &= dist == best_dist
    i, j = np.argwhere(cand)[0]  # row-major order = lexicographic
    return ThresholdPolicy(0.5, {groups.labels[0]: float(grid[i]), groups.labels[1]: float(grid[j])})


def audit_pair(probs, labels, groups: GroupVector, policy_orig: ThresholdPolicy,
               policy_fair: ThresholdPolicy) -> tuple[FairnessReport, FairnessReport]:
    """(orig report, fair report) for the same scores under two policies."""
    orig = build_report(labels, apply_policy(probs, groups, policy_orig), groups)
    fair = build_report(labels, apply_policy(probs, groups, policy_fair), groups)
    return orig, fair

