import json
import os

import numpy as np
import pytest

from fairaudit.data import SchemaError
from fairaudit.forest import (
    BACKEND,
    DegenerateModelWarning,
    ModelFormatError,
    TrainConfig,
    class_weights,
    dumps_model,
    load_model,
    loads_model,
    oob_error,
    oob_proba,
    predict_proba,
    predict_proba_batch,
    predict_votes,
    save_model,
    train,
    tree_vote_matrix,
)
from fairaudit.forest.model import weighted_bootstrap

from conftest import labeled_dataset

ARRAYS = ("feature", "threshold", "left", "right", "cat_offset", "n_pos", "n_neg", "members", "roots", "bootstrap")


def mixed_data(rng, n=300, sep=1.0, flip=False):
    y = (rng.random(n) < 0.6).astype(int)
    X = rng.normal(size=(n, 3)) + sep * y[:, None] * np.array([1.0, 0.5, 0.0])
    X[:, 2] = np.round(X[:, 2], 1)  # many ties
    cat0 = np.where(rng.random(n) < 0.3 + 0.4 * y, "a", rng.choice(["b", "c", "d"], n))
    cat1 = rng.choice(["u", "v"], n)
    labels = 1 - y if flip else y
    return labeled_dataset(X, [cat0, cat1], labels)


def assert_same_forest(m1, m2):
    for k in ARRAYS:
        assert np.array_equal(getattr(m1, k), getattr(m2, k)), k
    assert m1.oob_error == m2.oob_error or (np.isnan(m1.oob_error) and np.isnan(m2.oob_error))


def test_class_weights_from_label_proportions():
    y = np.array([1] * 606 + [0] * 394)
    w_pos, w_neg = class_weights(y)
    assert w_pos == pytest.approx(1 / 0.606, rel=1e-12)
    assert w_neg == pytest.approx(1 / 0.394, rel=1e-12)


def test_model_exposes_instance_weights(rng):
    d = mixed_data(rng, n=200)
    m = train(d, TrainConfig(n_trees=3, seed=1))
    y = d.labels()
    w = m.instance_weights
    assert np.allclose(w[y == 1], len(y) / y.sum())
    assert np.allclose(w[y == 0], len(y) / (len(y) - y.sum()))
    off = train(d, TrainConfig(n_trees=3, seed=1, class_weighting=False))
    assert np.all(off.instance_weights == 1.0)


def test_weighted_bootstrap_follows_weights():
    w = np.r_[np.full(100, 3.0), np.full(100, 1.0)]
    draws = np.concatenate([weighted_bootstrap(w, np.random.default_rng(s)) for s in range(50)])
    assert np.mean(draws < 100) == pytest.approx(0.75, abs=0.01)


@pytest.mark.skipif(BACKEND != "compiled", reason="compiled core not built")
@pytest.mark.parametrize("cfg", [
    TrainConfig(n_trees=20, seed=3),
    TrainConfig(n_trees=10, seed=4, mtry=4, min_node_size=3, max_depth=5),
    TrainConfig(n_trees=10, seed=5, class_weighting=False, mtry=1),
])
def test_backends_bit_identical(rng, cfg):
    d = mixed_data(rng)
    a = train(d, cfg, backend="compiled")
    b = train(d, cfg, backend="python")
    assert_same_forest(a, b)
    X = a.encoder.encode(d)
    assert np.array_equal(tree_vote_matrix(a, X, backend="compiled"), tree_vote_matrix(a, X, backend="python"))


def test_same_seed_bit_identical(rng):
    d = mixed_data(rng)
    a = train(d, TrainConfig(n_trees=15, seed=9))
    b = train(d, TrainConfig(n_trees=15, seed=9))
    assert_same_forest(a, b)
    assert np.array_equal(predict_proba_batch(a, d), predict_proba_batch(b, d))
    c = train(d, TrainConfig(n_trees=15, seed=10))
    assert not np.array_equal(a.bootstrap, c.bootstrap)


def test_thread_count_does_not_change_result(rng, monkeypatch):
    d = mixed_data(rng)
    monkeypatch.setenv("FAIRAUDIT_THREADS", "1")
    a = train(d, TrainConfig(n_trees=12, seed=2))
    monkeypatch.setenv("FAIRAUDIT_THREADS", "4")
    b = train(d, TrainConfig(n_trees=12, seed=2))
    assert_same_forest(a, b)


def test_label_flip_symmetry():
    d = mixed_data(np.random.default_rng(7), n=250)
    dflip = mixed_data(np.random.default_rng(7), n=250, flip=True)
    cfg = TrainConfig(n_trees=40, seed=11)
    m = train(d, cfg)
    mf = train(dflip, cfg)
    assert np.array_equal(m.bootstrap, mf.bootstrap)
    v = predict_votes(m, d, tie_positive=True)
    vf = predict_votes(mf, dflip, tie_positive=False)
    assert np.array_equal(vf, cfg.n_trees - v)
    p = predict_proba_batch(m, d)
    pf = predict_proba_batch(mf, dflip, tie_positive=False)
    # vote counts are exact; the division may differ by one ulp
    assert np.allclose(pf, 1.0 - p, rtol=0, atol=1e-15)


def _gini(a, b):
    w = a + b
    return 0.0 if w == 0 else w * (1.0 - (a / w) ** 2 - (b / w) ** 2)


def test_chosen_splits_are_optimal(rng):
    """Instrumented re-check: with mtry = all features, each split beats every candidate."""
    d = mixed_data(rng, n=120)
    m = train(d, TrainConfig(n_trees=3, seed=6, mtry=5))
    X = m.encoder.encode(d)
    y = d.labels()
    is_cat = m.encoder.is_cat.astype(bool)
    for t in range(m.n_trees):
        stack = [(int(m.roots[t]), np.asarray(m.bootstrap[t]))]
        while stack:
            node, rows = stack.pop()
            npos = int(y[rows].sum())
            assert (m.n_pos[node], m.n_neg[node]) == (npos, rows.size - npos)
            f = m.feature[node]
            if f < 0:
                continue
            a = y[rows] * m.w_pos
            b = (1 - y[rows]) * m.w_neg
            parent = _gini(a.sum(), b.sum())

            def decrease(mask):
                return parent - _gini(a[mask].sum(), b[mask].sum()) - _gini(a[~mask].sum(), b[~mask].sum())

            if is_cat[f]:
                k = m.encoder.n_levels_cat[f]
                member = m.members[m.cat_offset[node]:m.cat_offset[node] + k].astype(bool)
                go_left = member[X[rows, f].astype(int)]
            else:
                go_left = X[rows, f] <= m.threshold[node]
            chosen = decrease(go_left)
            best = -np.inf
            for j in range(X.shape[1]):
                x = X[rows, j]
                if is_cat[j]:
                    levels = np.unique(x).astype(int)
                    for bits in range(1, 2 ** (levels.size - 1)):
                        s = levels[[(bits >> q) & 1 == 1 for q in range(levels.size)]]
                        best = max(best, decrease(np.isin(x, s)))
                else:
                    for v in np.unique(x)[:-1]:
                        best = max(best, decrease(x <= v))
            assert chosen >= best - 1e-9 * (a.sum() + b.sum())
            stack.append((int(m.left[node]), rows[go_left]))
            stack.append((int(m.right[node]), rows[~go_left]))


def test_separable_clusters_fit_exactly(rng):
    y = np.r_[np.zeros(100, int), np.ones(100, int)]
    X = np.where(y == 1, 10.0, 0.0)[:, None] + rng.normal(0, 1, (200, 1))
    d = labeled_dataset(X, None, y)
    m = train(d, TrainConfig(n_trees=25, seed=0))
    assert np.all((predict_proba_batch(m, d) >= 0.5) == y)


def test_probability_grid_and_unanimity(rng):
    d = mixed_data(rng)
    m = train(d, TrainConfig(n_trees=8, seed=0))
    p = predict_proba_batch(m, d)
    assert np.all((p * 8) == np.round(p * 8))
    assert np.all((p >= 0) & (p <= 1))
    assert predict_proba_batch(m, d.select([])).size == 0


def test_unseen_category_goes_right(rng):
    d = mixed_data(rng)
    m = train(d, TrainConfig(n_trees=10, seed=1))
    r = list(d.rows[0])
    r[4] = "zzz-never-seen"
    p = predict_proba(m, r)
    assert 0.0 <= p <= 1.0
    X = m.encoder.encode(d.replace_rows([tuple(r)]))
    assert X[0, 3] == -1
    with pytest.raises(SchemaError):
        predict_proba(m, r[:-1])


def test_missing_numeric_rejected(rng):
    d = mixed_data(rng, n=50)
    m = train(d, TrainConfig(n_trees=2, seed=1))
    r = list(d.rows[0])
    r[1] = None
    with pytest.raises(SchemaError, match="missing"):
        predict_proba(m, r)


def test_single_tree_oob_uses_out_of_bag_rows_only(rng):
    d = mixed_data(rng, n=150)
    m = train(d, TrainConfig(n_trees=1, seed=3))
    y = d.labels()
    out = np.setdiff1d(np.arange(len(d)), m.bootstrap[0])
    votes = tree_vote_matrix(m, m.encoder.encode(d))[:, 0]
    assert m.oob_error == pytest.approx(np.mean(votes[out] != y[out]), abs=1e-15)
    assert oob_error(m, d) == m.oob_error
    op = oob_proba(m, d)
    assert np.isnan(op[np.unique(m.bootstrap[0])]).all()
    assert np.array_equal(op[out], votes[out].astype(float))


def test_degenerate_labels_warn(rng):
    d = labeled_dataset(rng.normal(size=(20, 2)), None, np.ones(20, int))
    with pytest.warns(DegenerateModelWarning):
        m = train(d, TrainConfig(n_trees=3, seed=0))
    assert np.all(predict_proba_batch(m, d) == 1.0)


def test_empty_dataset_rejected():
    d = labeled_dataset(np.zeros((0, 1)), None, [])
    with pytest.raises(ValueError):
        train(d, TrainConfig(n_trees=1))


@pytest.mark.parametrize("kw", [dict(n_trees=0), dict(min_node_size=0), dict(mtry=0), dict(seed=-1),
                                dict(max_depth=-2)])
def test_config_validation(kw):
    with pytest.raises(ValueError):
        TrainConfig(**kw)


def test_min_node_size_and_depth_limits(rng):
    d = mixed_data(rng)
    m = train(d, TrainConfig(n_trees=5, seed=1, min_node_size=10))
    leaves = m.feature < 0
    assert np.all((m.n_pos + m.n_neg)[leaves] >= 10)
    stump = train(d, TrainConfig(n_trees=5, seed=1, max_depth=1))
    for t in range(5):
        nodes = list(stump.tree_nodes(t))
        assert len(nodes) <= 3


def test_serialization_roundtrip(tmp_path, rng):
    d = mixed_data(rng)
    m = train(d, TrainConfig(n_trees=6, seed=4))
    save_model(m, tmp_path / "m.forest")
    back = load_model(tmp_path / "m.forest")
    assert_same_forest(m, back)
    assert back.encoder == m.encoder and back.config == m.config
    assert np.array_equal(predict_proba_batch(back, d), predict_proba_batch(m, d))
    assert dumps_model(back) == dumps_model(m)


def test_corrupted_and_mismatched_model_files(rng):
    d = mixed_data(rng, n=60)
    text = dumps_model(train(d, TrainConfig(n_trees=2, seed=4)))
    with pytest.raises(ModelFormatError, match="JSON"):
        loads_model(text[: len(text) // 2])
    doc = json.loads(text)
    doc["version"] = 99
    with pytest.raises(ModelFormatError, match="version"):
        loads_model(json.dumps(doc))
    doc = json.loads(text)
    doc["format"] = "something-else"
    with pytest.raises(ModelFormatError):
        loads_model(json.dumps(doc))
    doc = json.loads(text)
    doc["arrays"]["left"]["data"] = "AAAA"
    with pytest.raises(ModelFormatError, match="corrupted"):
        loads_model(json.dumps(doc))
    doc = json.loads(text)
    del doc["arrays"]["roots"]
    with pytest.raises(ModelFormatError, match="corrupted"):
        loads_model(json.dumps(doc))


def test_pure_python_switch_is_honoured():
    import subprocess
    import sys
    env = dict(os.environ, FAIRAUDIT_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", "from fairaudit.forest import BACKEND; print(BACKEND)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"
