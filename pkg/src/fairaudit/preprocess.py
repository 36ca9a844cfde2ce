"""Cleaning pipeline: dedup, record filtering, label derivation, rare-token merging,
placeholder imputation and the semester split.

The stages run in a fixed order (see :func:`run_pipeline`) and the pipeline is
idempotent on its own output.
"""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Mapping

from .data import (
    CATEGORICAL,
    ID,
    INDICATOR,
    LABEL,
    NEGATIVE,
    NUMERIC,
    POSITIVE,
    SEMESTER,
    DataError,
    Dataset,
    LabeledSplit,
    SchemaError,
)

OTHER = "Other"


def _default_points():
    return {
        "A": 4.0, "A-": 3.7, "B+": 3.3, "B": 3.0, "B-": 2.7, "C+": 2.3,
        "C": 2.0, "C-": 1.7, "D+": 1.3, "D": 1.0, "D-": 0.7, "F": 0.0,
    }


@dataclass(frozen=True)
class GradeScale:
    points: Mapping[str, float] = field(default_factory=_default_points)
    pass_token: str = "P"
    fail_token: str = "NP"

    def __post_init__(self):
        values = list(self.points.values())
        if any(a <= b for a, b in zip(values, values[1:])):
            raise ValueError("grade points must be strictly decreasing in letter order")
        if self.pass_token == self.fail_token or {self.pass_token, self.fail_token} & set(self.points):
            raise ValueError("pass/fail tokens must be distinct and disjoint from letter grades")

    def is_valid(self, token) -> bool:
        return token in self.points or token == self.pass_token or token == self.fail_token


DEFAULT_SCALE = GradeScale()


@dataclass(frozen=True)
class PreprocessConfig:
    placeholder_value: float = -999.0
    rare_category_min: int = 30
    grade_scale: GradeScale = DEFAULT_SCALE

    def __post_init__(self):
        if self.rare_category_min < 1:
            raise ValueError("rare_category_min must be >= 1")


def deduplicate(data: Dataset) -> Dataset:
    return data.replace_rows(dict.fromkeys(data.rows))


def _require(data: Dataset, name, what: str) -> int:
    if name is None:
        raise SchemaError(f"schema has no {what} column")
    return data.schema.index(name)


def filter_records(data: Dataset, scale: GradeScale = DEFAULT_SCALE) -> Dataset:
    """Drop ungraded rows, repeated (student, course) pairs, and non-letter/pass/fail grades.

    Steps apply in that order, so a retake paired with a missing-grade row
    survives while a retake paired with a withdrawal does not.
    """
    schema = data.schema
    j_id = _require(data, schema.single(ID), "id")
    j_course = _require(data, schema.course_name, "course")
    j_grade = schema.index(schema.grade_name)
    graded = [r for r in data.rows if r[j_grade] is not None]
    pairs = Counter((r[j_id], r[j_course]) for r in graded)
    kept = [r for r in graded if pairs[(r[j_id], r[j_course])] == 1 and scale.is_valid(r[j_grade])]
    return data.replace_rows(kept)


def _median(values):
    v = sorted(values)
    n = len(v)
    mid = n // 2
    if n % 2:
        return v[mid]
    return (v[mid - 1] + v[mid]) / 2.0


def course_medians(reference: Dataset, scale: GradeScale = DEFAULT_SCALE) -> dict:
    schema = reference.schema
    j_course = _require(reference, schema.course_name, "course")
    j_grade = schema.index(schema.grade_name)
    points: dict = {}
    for r in reference.rows:
        g = r[j_grade]
        if g in scale.points:
            points.setdefault(r[j_course], []).append(scale.points[g])
    return {c: _median(p) for c, p in points.items()}


def derive_label(data: Dataset, scale: GradeScale = DEFAULT_SCALE, reference: Dataset = None) -> Dataset:
    """Append (or overwrite) the binary label: grade at or above the course median.

    Medians come from the letter-graded rows of ``reference`` only; pass rows
    are positive and fail rows negative.
    """
    if reference is None:
        reference = data
    medians = course_medians(reference, scale)
    schema = data.schema
    j_course = _require(data, schema.course_name, "course")
    j_grade = schema.index(schema.grade_name)
    missing = sorted({r[j_course] for r in data.rows} - set(medians), key=str)
    if missing:
        raise DataError(f"no letter-graded reference rows for target course(s) {missing}")

    def label(r):
        g = r[j_grade]
        if g == scale.pass_token:
            return POSITIVE
        if g == scale.fail_token:
            return NEGATIVE
        if g not in scale.points:
            raise DataError(f"grade {g!r} is not on the grade scale")
        return POSITIVE if scale.points[g] >= medians[r[j_course]] else NEGATIVE

    existing = schema.single(LABEL)
    if existing is not None:
        j = schema.index(existing)
        return data.replace_rows(r[:j] + (label(r),) + r[j + 1:] for r in data.rows)
    if schema.label_name in schema.names:
        raise SchemaError(f"label name {schema.label_name!r} collides with an existing column")
    new_schema = schema.with_columns([(schema.label_name, LABEL)])
    return data.replace_rows((r + (label(r),) for r in data.rows), new_schema)


def merge_rare_categories(data: Dataset, cfg: PreprocessConfig = PreprocessConfig()) -> Dataset:
    """Replace tokens seen fewer than ``rare_category_min`` times with ``"Other"``.

    Only plain categorical columns are merged; the course key, protected
    attributes, ids, grades and indicators keep their tokens.
    """
    schema = data.schema
    cols = [schema.index(n) for n in schema.names_of_kind(CATEGORICAL) if n != schema.course_name]
    rare = {}
    for j in cols:
        counts = Counter(r[j] for r in data.rows if r[j] is not None)
        rare[j] = {t for t, c in counts.items() if c < cfg.rare_category_min}
    if not any(rare.values()):
        return data

    def fix(r):
        out = list(r)
        for j in cols:
            if out[j] in rare[j]:
                out[j] = OTHER
        return tuple(out)

    return data.replace_rows(fix(r) for r in data.rows)


def impute_missing(data: Dataset, cfg: PreprocessConfig = PreprocessConfig()) -> Dataset:
    """Fill missing numeric cells with the placeholder and add ``<name>_reported`` indicators."""
    schema = data.schema
    holes = [
        (n, schema.index(n)) for n in schema.names_of_kind(NUMERIC)
        if any(r[schema.index(n)] is None for r in data.rows)
    ]
    if not holes:
        return data
    new_cols = []
    for name, _ in holes:
        ind = f"{name}_reported"
        if ind in schema.names:
            raise SchemaError(f"indicator column {ind!r} already exists")
        new_cols.append((ind, INDICATOR))
    fill = float(cfg.placeholder_value)

    def fix(r):
        out = list(r)
        flags = []
        for _, j in holes:
            if out[j] is None:
                out[j] = fill
                flags.append("no")
            else:
                flags.append("yes")
        return tuple(out) + tuple(flags)

    return data.replace_rows((fix(r) for r in data.rows), schema.with_columns(new_cols))


def last_semester(data: Dataset) -> str:
    schema = data.schema
    name = _require(data, schema.single(SEMESTER), "semester")
    present = {r[name] for r in data.rows}
    if None in present:
        raise DataError("semester column has missing cells")
    unknown = present - set(schema.semester_order)
    if unknown:
        raise SchemaError(f"semester tokens {sorted(unknown)} missing from the schema's semester order")
    ordered = [s for s in schema.semester_order if s in present]
    if len(ordered) < 2:
        raise DataError(f"need at least two semesters to split, found {ordered}")
    return ordered[-1]


def split_by_semester(data: Dataset) -> LabeledSplit:
    last = last_semester(data)
    j = data.schema.index(data.schema.single(SEMESTER))
    train = [r for r in data.rows if r[j] != last]
    test = [r for r in data.rows if r[j] == last]
    return LabeledSplit(data.replace_rows(train), data.replace_rows(test))


def run_pipeline(data: Dataset, cfg: PreprocessConfig = PreprocessConfig()) -> LabeledSplit:
    """deduplicate -> filter_records -> derive_label -> merge_rare_categories -> impute_missing -> split."""
    data = deduplicate(data)
    data = filter_records(data, cfg.grade_scale)
    if not data.rows:
        raise DataError("no rows survive record filtering")
    last = last_semester(data)
    j = data.schema.index(data.schema.single(SEMESTER))
    reference = data.replace_rows(r for r in data.rows if r[j] != last)
    data = derive_label(data, cfg.grade_scale, reference)
    data = merge_rare_categories(data, cfg)
    data = impute_missing(data, cfg)
    return split_by_semester(data)
