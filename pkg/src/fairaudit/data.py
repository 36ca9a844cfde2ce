"""Tabular data container, schema files, CSV ingestion and protected-group assignment.

A :class:`Dataset` is an immutable row-major table.  Cells are ``str`` for
token-valued columns, ``float`` for numeric columns and ``None`` when missing.
"""
from __future__ import annotations

import csv
import os
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional, Sequence, Union

import numpy as np

Cell = Union[str, float, None]
Row = tuple

# Raw column kinds accepted in schema files.
CATEGORICAL = "categorical"
NUMERIC = "numeric"
SEMESTER = "semester"
LABEL_SOURCE = "label-source"
PROTECTED_SOURCE = "protected-source"
ID = "id"
# Kinds produced by preprocessing (derived label, missing-value indicators).
LABEL = "label"
INDICATOR = "indicator"

KINDS = (CATEGORICAL, NUMERIC, SEMESTER, LABEL_SOURCE, PROTECTED_SOURCE, ID, LABEL, INDICATOR)
TOKEN_KINDS = frozenset(KINDS) - {NUMERIC}
# Columns the forest consumes as predictors.
FEATURE_KINDS = frozenset({CATEGORICAL, NUMERIC, PROTECTED_SOURCE, INDICATOR})

POSITIVE = "1"
NEGATIVE = "0"

# Group codes in a group vector.
GROUP_A = 0
GROUP_B = 1
EXCLUDED = -1

class SchemaError(ValueError):
    """Schema file or schema/data mismatch."""


class DataError(ValueError):
    """Malformed data contents."""


@dataclass(frozen=True)
class FeatureSchema:
    columns: tuple  # ((name, kind), ...)
    label_name: str = "success"
    semester_order: tuple = ()
    course_name: Optional[str] = None

    def __post_init__(self):
        object.__setattr__(self, "columns", tuple((str(n), str(k)) for n, k in self.columns))
        object.__setattr__(self, "semester_order", tuple(self.semester_order))
        names = [n for n, _ in self.columns]
        dup = sorted({n for n in names if names.count(n) > 1})
        if dup:
            raise SchemaError(f"duplicate column names: {dup}")
        bad = [k for _, k in self.columns if k not in KINDS]
        if bad:
            raise SchemaError(f"unknown column kinds: {bad}")
        n_src = sum(k == LABEL_SOURCE for _, k in self.columns)
        if n_src != 1:
            raise SchemaError(f"expected exactly one label-source column, found {n_src}")
        if sum(k == LABEL for _, k in self.columns) > 1:
            raise SchemaError("more than one derived label column")
        if self.course_name is not None and self.course_name not in names:
            raise SchemaError(f"course column {self.course_name!r} not among columns")

    @property
    def names(self) -> tuple:
        return tuple(n for n, _ in self.columns)

    def index(self, name: str) -> int:
        for i, (n, _) in enumerate(self.columns):
            if n == name:
                return i
        raise SchemaError(f"no column named {name!r}")

    def kind(self, name: str) -> str:
        return self.columns[self.index(name)][1]

    def names_of_kind(self, *kinds: str) -> tuple:
        return tuple(n for n, k in self.columns if k in kinds)

    def single(self, kind: str) -> Optional[str]:
        found = self.names_of_kind(kind)
        if len(found) > 1:
            raise SchemaError(f"more than one {kind} column: {list(found)}")
        return found[0] if found else None

    @property
    def grade_name(self) -> str:
        return self.names_of_kind(LABEL_SOURCE)[0]

    def with_columns(self, extra: Iterable[tuple]) -> "FeatureSchema":
        return FeatureSchema(self.columns + tuple(extra), self.label_name, self.semester_order, self.course_name)


def parse_schema(text: str) -> FeatureSchema:
    """Parse the schema format: ``name = kind`` lines plus ``@label``, ``@course``
    and ``@semesters`` directives (``@`` keeps them apart from column names)."""
    columns = []
    label_name = "success"
    semesters: tuple = ()
    course = None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise SchemaError(f"schema line {lineno}: expected 'key = value', got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key == "@label":
            label_name = value
        elif key == "@semesters":
            semesters = tuple(t.strip() for t in value.split(",") if t.strip())
        elif key == "@course":
            course = value
        elif key.startswith("@"):
            raise SchemaError(f"schema line {lineno}: unknown directive {key!r}")
        else:
            if value not in KINDS:
                raise SchemaError(f"schema line {lineno}: unknown kind {value!r} for column {key!r}")
            columns.append((key, value))
    return FeatureSchema(tuple(columns), label_name, semesters, course)


def load_schema(path: Union[str, os.PathLike]) -> FeatureSchema:
    with open(path, encoding="utf-8") as fh:
        return parse_schema(fh.read())


def format_schema(schema: FeatureSchema) -> str:
    lines = [f"{n} = {k}" for n, k in schema.columns]
    lines.append(f"@label = {schema.label_name}")
    if schema.course_name:
        lines.append(f"@course = {schema.course_name}")
    if schema.semester_order:
        lines.append("@semesters = " + ",".join(schema.semester_order))
    return "\n".join(lines) + "\n"


def save_schema(schema: FeatureSchema, path: Union[str, os.PathLike]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(format_schema(schema))


@dataclass(frozen=True)
class Dataset:
    schema: FeatureSchema
    rows: tuple = ()
    validate: bool = field(default=True, repr=False, compare=False)

    def __post_init__(self):
        rows = tuple(tuple(r) for r in self.rows)
        object.__setattr__(self, "rows", rows)
        if self.validate:
            _check_rows(self.schema, rows)

    def __len__(self) -> int:
        return len(self.rows)

    def column(self, name: str) -> tuple:
        j = self.schema.index(name)
        return tuple(r[j] for r in self.rows)

    def labels(self) -> np.ndarray:
        """Binary label vector from the derived label column."""
        name = self.schema.single(LABEL)
        if name is None:
            raise SchemaError("dataset has no derived label column")
        col = self.column(name)
        out = np.empty(len(col), dtype=np.uint8)
        for i, v in enumerate(col):
            if v == POSITIVE:
                out[i] = 1
            elif v == NEGATIVE:
                out[i] = 0
            else:
                raise DataError(f"label column {name!r} row {i + 1}: expected 0/1, got {v!r}")
        return out

    def replace_rows(self, rows: Iterable[Sequence[Cell]], schema: Optional[FeatureSchema] = None) -> "Dataset":
        # Internal transforms construct well-typed rows; skip re-validation.
        return Dataset(schema or self.schema, tuple(rows), validate=False)

    def select(self, indices: Iterable[int]) -> "Dataset":
        return self.replace_rows(self.rows[i] for i in indices)


def _check_rows(schema: FeatureSchema, rows: tuple) -> None:
    width = len(schema.columns)
    numeric = [k == NUMERIC for _, k in schema.columns]
    for i, row in enumerate(rows):
        if len(row) != width:
            raise DataError(f"row {i + 1} has {len(row)} cells, schema has {width} columns")
        for j, cell in enumerate(row):
            if cell is None:
                continue
            if numeric[j]:
                if not isinstance(cell, float):
                    raise DataError(f"row {i + 1}, column {schema.columns[j][0]!r}: numeric cell holds {cell!r}")
            elif not isinstance(cell, str):
                raise DataError(f"row {i + 1}, column {schema.columns[j][0]!r}: token cell holds {cell!r}")


def concat(first: Dataset, *more: Dataset) -> Dataset:
    rows = list(first.rows)
    for d in more:
        if d.schema != first.schema:
            raise SchemaError("cannot concatenate datasets with different schemas")
        rows.extend(d.rows)
    return first.replace_rows(rows)


def load_csv(path: Union[str, os.PathLike], schema: FeatureSchema) -> Dataset:
    """Read a UTF-8 CSV whose header matches ``schema`` exactly."""
    if not os.path.isfile(path):
        raise FileNotFoundError(f"data file not found: {path}")
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError(f"{path}: empty file, no header row") from None
        expected = list(schema.names)
        if header != expected:
            missing = [c for c in expected if c not in header]
            unexpected = [c for c in header if c not in expected]
            detail = []
            if missing:
                detail.append(f"missing {missing}")
            if unexpected:
                detail.append(f"unexpected {unexpected}")
            if not detail:
                detail.append("column order differs")
            raise SchemaError(f"{path}: header mismatch: " + "; ".join(detail))
        numeric = [k == NUMERIC for _, k in schema.columns]
        rows = []
        for rowno, rec in enumerate(reader, 1):
            if len(rec) != len(expected):
                raise DataError(f"{path}: row {rowno} has {len(rec)} cells, expected {len(expected)}")
            row = []
            for j, text in enumerate(rec):
                if text == "":
                    row.append(None)
                elif numeric[j]:
                    try:
                        row.append(float(text))
                    except ValueError:
                        raise DataError(
                            f"{path}: row {rowno}, column {expected[j]!r}: cannot parse {text!r} as a number"
                        ) from None
                else:
                    row.append(text)
            rows.append(tuple(row))
    return Dataset(schema, tuple(rows), validate=False)


def _format_cell(cell: Cell) -> str:
    if cell is None:
        return ""
    if isinstance(cell, float):
        return repr(cell)
    return cell


def write_csv(data: Dataset, path: Union[str, os.PathLike]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(data.schema.names)
        for row in data.rows:
            writer.writerow([_format_cell(c) for c in row])


@dataclass(frozen=True)
class LabeledSplit:
    train: Dataset
    test: Dataset

    def __post_init__(self):
        if self.train.schema != self.test.schema:
            raise SchemaError("train and test schemas differ")
        id_col = self.train.schema.single(ID)
        if id_col is not None:
            # a record is one (student, course) pair when a course column exists
            keys = [id_col] + ([self.train.schema.course_name] if self.train.schema.course_name else [])
            idx = [self.train.schema.index(k) for k in keys]
            seen = {tuple(r[j] for j in idx) for r in self.train.rows}
            overlap = [tuple(r[j] for j in idx) for r in self.test.rows if tuple(r[j] for j in idx) in seen]
            if overlap:
                raise DataError(f"records present in both train and test: {overlap[:5]}")


@dataclass(frozen=True)
class GroupSpec:
    attribute_name: str
    source_column: str
    group_a_label: str
    group_b_label: str
    mapping: Mapping[str, str]  # token -> "A" | "B" | "excluded"

    def __post_init__(self):
        object.__setattr__(self, "mapping", dict(self.mapping))
        bad = {t: v for t, v in self.mapping.items() if v not in ("A", "B", "excluded")}
        if bad:
            raise SchemaError(f"group mapping values must be A, B or excluded: {bad}")
        if self.group_a_label == self.group_b_label:
            raise SchemaError("group labels must differ")

    @property
    def labels(self) -> tuple:
        return (self.group_a_label, self.group_b_label)


URM_SPEC = GroupSpec(
    attribute_name="ethnicity",
    source_column="ethnicity",
    group_a_label="URM",
    group_b_label="non-URM",
    mapping={
        "American Indian": "A",
        "Black": "A",
        "Hawaiian or Pacific Islander": "A",
        "Hispanic": "A",
        "Multicultural": "A",
        "Asian": "B",
        "White": "B",
        "Other": "excluded",
        "Unknown": "excluded",
    },
)

GENDER_SPEC = GroupSpec(
    attribute_name="gender",
    source_column="gender",
    group_a_label="Male",
    group_b_label="Female",
    mapping={"Male": "A", "Female": "B", "Other": "excluded", "Unknown": "excluded"},
)

BUILTIN_GROUP_SPECS = {"urm": URM_SPEC, "gender": GENDER_SPEC}


@dataclass(frozen=True)
class GroupVector:
    """Per-row group codes: ``GROUP_A``, ``GROUP_B`` or ``EXCLUDED``."""

    attribute_name: str
    labels: tuple  # (label of A, label of B)
    codes: np.ndarray

    def __len__(self) -> int:
        return len(self.codes)

    def mask(self, code: int) -> np.ndarray:
        return self.codes == code

    def label_of(self, code: int) -> Optional[str]:
        if code == EXCLUDED:
            return None
        return self.labels[code]


def assign_groups(data: Dataset, spec: GroupSpec) -> GroupVector:
    kind = data.schema.kind(spec.source_column)
    if kind not in (CATEGORICAL, PROTECTED_SOURCE):
        raise SchemaError(f"group source column {spec.source_column!r} has kind {kind}, expected a token column")
    code_of = {"A": GROUP_A, "B": GROUP_B, "excluded": EXCLUDED}
    col = data.column(spec.source_column)
    unknown = sorted({t for t in col if t is not None and t not in spec.mapping})
    if unknown:
        raise DataError(f"tokens {unknown} in column {spec.source_column!r} are not covered by the "
                        f"{spec.attribute_name!r} group mapping")
    codes = np.fromiter(
        (EXCLUDED if t is None else code_of[spec.mapping[t]] for t in col), dtype=np.int8, count=len(col)
    )
    return GroupVector(spec.attribute_name, spec.labels, codes)
