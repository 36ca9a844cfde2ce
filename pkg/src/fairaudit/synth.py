"""Synthetic student-record generator.

Emits raw records in the same layout the preprocessing pipeline consumes:
an id, semester and term, target course, letter/pass-fail grade, two
protected attributes, numeric academic features (some missing) and
label-skewed categorical features.

Labels are drawn per row from the ethnicity subgroup's base rate plus the
gender offset, then turned into grades.  Positive rows get A/A-/B+ and
negative rows lower grades, so the per-course median rule recovers the drawn
label whenever a course's positive share lies in [0.5, 0.83].

Numeric features are Gaussian with unit noise: the class-conditional means
differ by ``separability`` and the mean is lowered by ``group_shift`` times the
row's subgroup shift factors.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .data import (
    CATEGORICAL,
    ID,
    LABEL_SOURCE,
    NUMERIC,
    PROTECTED_SOURCE,
    SEMESTER,
    Dataset,
    FeatureSchema,
)


@dataclass(frozen=True)
class Subgroup:
    token: str
    share: float
    base_rate: float = 0.0  # ethnicity: positive rate; gender: additive offset
    shift: float = 0.0  # multiplier on SynthSpec.group_shift


DEFAULT_ETHNICITY = (
    Subgroup("American Indian", 0.01, 0.55, 1.0),
    Subgroup("Black", 0.06, 0.55, 1.0),
    Subgroup("Hawaiian or Pacific Islander", 0.01, 0.55, 1.0),
    Subgroup("Hispanic", 0.09, 0.55, 1.0),
    Subgroup("Multicultural", 0.04, 0.55, 1.0),
    Subgroup("Asian", 0.26, 0.75, 0.0),
    Subgroup("White", 0.48, 0.75, 0.0),
    Subgroup("Unknown", 0.05, 0.70, 0.0),
)

DEFAULT_GENDER = (
    Subgroup("Male", 0.5, -0.04, 0.5),
    Subgroup("Female", 0.5, 0.04, 0.0),
)

POSITIVE_GRADES = (("A", 0.3), ("A-", 0.3), ("B+", 0.4))
NEGATIVE_GRADES = (("B", 0.3), ("B-", 0.2), ("C+", 0.15), ("C", 0.15), ("C-", 0.07), ("D", 0.05), ("F", 0.08))

# (name, tokens) for the leading categorical features; extra ones are generic.
_NAMED_CATEGORICAL = (
    ("first_gen", ("yes", "no")),
    ("career", ("Undergrad", "Grad")),
    ("program", ("Engineering", "Arts and Sciences", "Agriculture", "Human Ecology")),
    ("level", ("Freshman", "Sophomore", "Junior", "Senior")),
    ("major", tuple(f"Major{k:02d}" for k in range(1, 26))),
    ("double_major", ("no", "yes")),
)


@dataclass(frozen=True)
class SynthSpec:
    seed: int = 0
    n_rows: int = 5000
    groups: tuple = DEFAULT_ETHNICITY
    genders: tuple = DEFAULT_GENDER
    n_numeric_features: int = 24
    n_categorical_features: int = 6
    separability: float = 0.5
    group_shift: float = 0.5
    missing_rate: float = 0.1
    n_semesters: int = 10
    semester_weights: Optional[tuple] = None
    n_courses: int = 6
    pass_fail_rate: float = 0.03
    dirty_rate: float = 0.02

    def __post_init__(self):
        for name, subs in (("groups", self.groups), ("genders", self.genders)):
            if not subs:
                raise ValueError(f"{name} must not be empty")
            if not math.isclose(sum(s.share for s in subs), 1.0, abs_tol=1e-9):
                raise ValueError(f"{name} shares must sum to 1")
            if any(s.share < 0 for s in subs):
                raise ValueError(f"{name} shares must be non-negative")
        if any(not 0.0 <= s.base_rate <= 1.0 for s in self.groups):
            raise ValueError("base rates must lie in [0, 1]")
        if self.n_rows < 1:
            raise ValueError("n_rows must be >= 1")
        if self.n_numeric_features < 1 or self.n_categorical_features < 0:
            raise ValueError("need at least one numeric feature")
        if self.separability < 0:
            raise ValueError("separability must be >= 0")
        if not 0.0 <= self.missing_rate < 1.0:
            raise ValueError("missing_rate must lie in [0, 1)")
        if self.n_semesters < 2:
            raise ValueError("n_semesters must be >= 2")
        if self.semester_weights is not None:
            if len(self.semester_weights) != self.n_semesters or min(self.semester_weights) <= 0:
                raise ValueError("semester_weights needs one positive weight per semester")
        if self.n_courses < 1:
            raise ValueError("n_courses must be >= 1")
        if not (0.0 <= self.pass_fail_rate <= 1.0 and 0.0 <= self.dirty_rate < 1.0):
            raise ValueError("pass_fail_rate and dirty_rate must be fractions")


def semester_tokens(n: int) -> tuple:
    """F14, S15, F15, S16, ... alternating from Fall 2014."""
    return tuple(("F" if k % 2 == 0 else "S") + f"{14 + (k + 1) // 2:02d}" for k in range(n))


def weighted_round_robin(n: int, weights) -> np.ndarray:
    """Smooth weighted round-robin assignment; equal weights give plain round-robin."""
    w = np.asarray(weights, dtype=np.float64)
    cur = np.zeros_like(w)
    total = w.sum()
    out = np.empty(n, dtype=np.int64)
    for i in range(n):
        cur += w
        k = int(np.argmax(cur))
        cur[k] -= total
        out[i] = k
    return out


def numeric_names(n: int) -> list:
    names = ["sat_score", "prior_gpa"][:n]
    names += [f"prior_course_{k:02d}_grade" for k in range(1, n - len(names) + 1)]
    return names


def categorical_specs(n: int) -> list:
    specs = list(_NAMED_CATEGORICAL[:n])
    specs += [(f"cat_{k:02d}", tuple(f"level{t}" for t in range(5))) for k in range(len(specs) + 1, n + 1)]
    return specs


def synth_schema(spec: SynthSpec) -> FeatureSchema:
    cols = [("student_id", ID), ("semester", SEMESTER), ("term", CATEGORICAL), ("course", CATEGORICAL),
            ("grade", LABEL_SOURCE), ("ethnicity", PROTECTED_SOURCE), ("gender", PROTECTED_SOURCE)]
    cols += [(name, CATEGORICAL) for name, _ in categorical_specs(spec.n_categorical_features)]
    cols += [(name, NUMERIC) for name in numeric_names(spec.n_numeric_features)]
    return FeatureSchema(tuple(cols), "success", semester_tokens(spec.n_semesters), "course")


def _pick(rng, options, size):
    tokens = [t for t, _ in options]
    p = np.array([w for _, w in options], dtype=np.float64)
    return np.array(tokens, dtype=object)[rng.choice(len(tokens), size=size, p=p / p.sum())]


def generate(spec: SynthSpec) -> Dataset:
    rng = np.random.default_rng(spec.seed)
    n = spec.n_rows
    schema = synth_schema(spec)

    eth_idx = rng.choice(len(spec.groups), size=n, p=[g.share for g in spec.groups])
    gen_idx = rng.choice(len(spec.genders), size=n, p=[g.share for g in spec.genders])
    base = np.array([g.base_rate for g in spec.groups])[eth_idx]
    offset = np.array([g.base_rate for g in spec.genders])[gen_idx]
    rate = np.clip(base + offset, 0.0, 1.0)
    y = (rng.random(n) < rate).astype(np.int64)
    shift = spec.group_shift * (np.array([g.shift for g in spec.groups])[eth_idx]
                                + np.array([g.shift for g in spec.genders])[gen_idx])

    semesters = semester_tokens(spec.n_semesters)
    weights = spec.semester_weights or (1.0,) * spec.n_semesters
    sem_idx = weighted_round_robin(n, weights)
    course_idx = rng.integers(0, spec.n_courses, size=n)

    grades = np.where(y == 1, _pick(rng, POSITIVE_GRADES, n), _pick(rng, NEGATIVE_GRADES, n))
    pf = rng.random(n) < spec.pass_fail_rate
    grades[pf] = np.where(y[pf] == 1, "P", "NP")

    cat_cols = []
    for name, tokens in categorical_specs(spec.n_categorical_features):
        k = len(tokens)
        base_w = 1.0 / np.arange(1, k + 1) ** 1.2
        tilt = np.linspace(-0.5, 0.5, k) * spec.separability
        probs = np.stack([base_w, base_w * np.exp(tilt)])
        probs /= probs.sum(axis=1, keepdims=True)
        u = rng.random(n)
        cdf = np.cumsum(probs, axis=1)[y]
        pick = np.minimum((u[:, None] >= cdf).sum(axis=1), k - 1)
        cat_cols.append(np.array(tokens, dtype=object)[pick])

    num_names = numeric_names(spec.n_numeric_features)
    num_cols = []
    for j, name in enumerate(num_names):
        z = rng.normal(size=n) + spec.separability * y - shift
        if name == "sat_score":
            vals = np.round(1200.0 + 120.0 * z, 0)
        elif name == "prior_gpa":
            vals = np.round(np.clip(3.2 + 0.35 * z, 0.0, 4.3), 2)
        else:
            vals = np.round(3.0 + 0.5 * z, 1)
        miss = rng.random(n) < spec.missing_rate
        if name == "prior_gpa":
            miss[:] = False
        col = vals.astype(object)
        col[miss] = None
        num_cols.append(col)

    rows = []
    for i in range(n):
        sem = semesters[sem_idx[i]]
        row = [f"S{i + 1:06d}", sem, "Fall" if sem.startswith("F") else "Spring",
               f"CRS{course_idx[i] + 1:02d}", str(grades[i]),
               spec.groups[eth_idx[i]].token, spec.genders[gen_idx[i]].token]
        row += [str(c[i]) for c in cat_cols]
        row += [None if c[i] is None else float(c[i]) for c in num_cols]
        rows.append(tuple(row))

    rows = _add_dirt(rows, spec, rng, schema)
    return Dataset(schema, tuple(rows))


def _add_dirt(rows, spec: SynthSpec, rng, schema: FeatureSchema):
    """Duplicates, retakes, non-letter grades and missing grades for the cleaning stages."""
    n_dirty = int(round(spec.dirty_rate * len(rows)))
    if n_dirty == 0:
        return rows
    j_grade = schema.index("grade")
    j_sem = schema.index("semester")
    semesters = schema.semester_order
    out = list(rows)
    picks = rng.choice(len(rows), size=n_dirty, replace=False)
    kinds = rng.integers(0, 4, size=n_dirty)
    for i, kind in zip(picks, kinds):
        r = list(out[i])
        if kind == 0:
            out.append(tuple(r))
        elif kind == 1:
            retake = list(r)
            retake[j_grade] = "A" if r[j_grade] != "A" else "B"
            retake[j_sem] = semesters[(semesters.index(r[j_sem]) + 1) % len(semesters)]
            out.append(tuple(retake))
        elif kind == 2:
            r[j_grade] = "W" if rng.random() < 0.5 else "INC"
            out[i] = tuple(r)
        else:
            r[j_grade] = None
            out[i] = tuple(r)
    return out
