import os
import sys

import numpy as np
import pytest

from fairaudit.data import (
    CATEGORICAL,
    ID,
    LABEL,
    LABEL_SOURCE,
    NUMERIC,
    PROTECTED_SOURCE,
    SEMESTER,
    Dataset,
    FeatureSchema,
    GroupVector,
)

DATA_DIR = os.path.join(os.path.dirname(__file__), "data")


def raw_schema(extra=(("x", NUMERIC), ("c", CATEGORICAL))):
    cols = (("sid", ID), ("sem", SEMESTER), ("course", CATEGORICAL), ("grade", LABEL_SOURCE),
            ("ethnicity", PROTECTED_SOURCE)) + tuple(extra)
    return FeatureSchema(cols, "success", ("F14", "S15", "F15"), "course")


def labeled_dataset(X_num, X_cat=None, y=None):
    """Training-ready dataset: numeric columns n0.., categorical k0.., label column."""
    X_num = np.asarray(X_num, dtype=np.float64)
    n = X_num.shape[0]
    X_cat = [] if X_cat is None else X_cat
    cols = [("grade", LABEL_SOURCE)]
    cols += [(f"n{j}", NUMERIC) for j in range(X_num.shape[1])]
    cols += [(f"k{j}", CATEGORICAL) for j in range(len(X_cat))]
    cols += [("success", LABEL)]
    rows = []
    for i in range(n):
        r = ["A"] + [float(v) for v in X_num[i]] + [str(c[i]) for c in X_cat] + ["1" if y[i] else "0"]
        rows.append(tuple(r))
    return Dataset(FeatureSchema(tuple(cols)), tuple(rows))


def group_vector(codes, labels=("A", "B"), name="attr"):
    return GroupVector(name, tuple(labels), np.asarray(codes, dtype=np.int8))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.LINES:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(mod.LINES, key=lambda s: int(s.split("criterion ")[1].split(":")[0])):
        terminalreporter.write_line(line)
