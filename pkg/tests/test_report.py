import os

import numpy as np
import pytest

from fairaudit.fairness import build_report
from fairaudit.postprocess import ThresholdPolicy
from fairaudit.report import UNDEFINED, bin_index, export_histograms, fmt3, render_table, render_tables

from conftest import DATA_DIR, group_vector


def _group(npos, tp, nneg, fp):
    y = [1] * npos + [0] * nneg
    p = [1] * tp + [0] * (npos - tp) + [1] * fp + [0] * (nneg - fp)
    return y, p


def golden_reports():
    g = group_vector([0] * 800 + [1] * 800, ("URM", "non-URM"), "ethnicity")
    ya, pa = _group(500, 300, 300, 60)
    yb, pb = _group(500, 401, 300, 90)
    orig = build_report(np.array(ya + yb), np.array(pa + pb), g)
    ya, pa = _group(500, 401, 300, 120)
    fair = build_report(np.array(ya + yb), np.array(pa + pb), g)
    return orig, fair


def read(name):
    with open(os.path.join(DATA_DIR, name), encoding="utf-8") as fh:
        return fh.read()


def test_golden_table():
    text, tsv = render_table(*golden_reports())
    assert text == read("golden_table.txt")
    assert tsv == read("golden_table.tsv")
    assert "0.202***" in text


@pytest.mark.parametrize("value, out", [
    (0.5625, "0.562"), (0.1875, "0.188"), (0.0625, "0.062"),  # exact binary ties go to even
    (0.2024, "0.202"), (-0.0004, "0.000"), (-0.0, "0.000"), (1.0, "1.000"),
    (-0.0166, "-0.017"), (None, UNDEFINED),
])
def test_fmt3(value, out):
    assert fmt3(value) == out


def test_single_policy_table_and_sections():
    orig, fair = golden_reports()
    text, tsv = render_table(orig, tag="orig")
    assert text.count("orig") == 4 and "fair" not in text
    full, _ = render_table(orig, fair)
    orig_rows = [ln for ln in tsv.splitlines()[1:]]
    assert set(orig_rows) <= set(render_table(orig, fair)[1].splitlines())
    both, both_tsv = render_tables([(orig, fair), (orig, fair)])
    assert both == full + "\n" + full
    assert both_tsv.count("attribute\tmetric") == 1


def test_undefined_cells_render_as_dash():
    rep = build_report(np.array([1, 0, 1, 0]), np.array([0, 0, 1, 1]), group_vector([0, 0, 1, 1]))
    text, _ = render_table(rep)
    prec = [ln for ln in text.splitlines() if ln.startswith("Positive Predictive")][0]
    assert prec.split()[-3:] == [UNDEFINED, "0.500", UNDEFINED]


def test_mismatched_reports_rejected():
    orig, _ = golden_reports()
    other = build_report(np.array([1, 0]), np.array([1, 0]), group_vector([0, 1], ("M", "F"), "gender"))
    with pytest.raises(ValueError):
        render_table(orig, other)


def histogram_oracle(probs, labels, codes, n_bins):
    counts = np.zeros((2, 2, n_bins), dtype=int)
    for p, y, g in zip(probs, labels, codes):
        if g < 0:
            continue
        for k in range(n_bins):
            lo, hi = k / n_bins, (k + 1) / n_bins
            if lo <= p < hi or (k == n_bins - 1 and p == 1.0):
                counts[g, y, k] += 1
                break
    return counts


def test_histogram_matches_oracle(rng):
    probs = np.r_[rng.integers(0, 501, 300) / 500, [0.0, 1.0, 0.02, 0.98]]
    labels = rng.integers(0, 2, probs.size)
    codes = rng.integers(-1, 2, probs.size)
    h = export_histograms(probs, labels, group_vector(codes), ThresholdPolicy(0.5, {"A": 0.4}), n_bins=50)
    assert np.array_equal(h.counts, histogram_oracle(probs, labels, codes, 50))
    assert h.counts.sum() == np.count_nonzero(codes >= 0)
    assert h.thresholds == (("default", 0.5), ("A", 0.4))


def test_bin_edges():
    edges = np.arange(51) / 50
    assert bin_index(np.array([0.0, 0.02, 0.0199, 1.0, 0.999]), edges).tolist() == [0, 1, 0, 49, 49]


def test_histogram_csv_layout(rng):
    h = export_histograms([0.1, 0.9], [0, 1], group_vector([0, 1]), ThresholdPolicy(), n_bins=4)
    lines = h.to_csv().splitlines()
    assert lines[0] == "bin_lo,bin_hi,group,true_class,count"
    assert len(lines) == 1 + 2 * 2 * 4
    assert "0.0,0.25,A,0,1" in lines and "0.75,1.0,B,1,1" in lines
    assert h.thresholds_csv() == "group,threshold\ndefault,0.5\n"


@pytest.mark.parametrize("kw", [dict(n_bins=0), dict(probs=[1.5, 0.1]), dict(probs=[])])
def test_histogram_errors(kw):
    args = dict(probs=[0.1, 0.9], labels=[0, 1], groups=group_vector([0, 1]), policy=ThresholdPolicy(), n_bins=5)
    args.update(kw)
    if "probs" in kw and not kw["probs"]:
        args.update(labels=[], groups=group_vector([]))
    with pytest.raises(ValueError):
        export_histograms(**args)
