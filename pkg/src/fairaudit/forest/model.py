"""Weighted random forest: training, prediction, out-of-bag error and model files."""
from __future__ import annotations

import base64
import json
import math
import os
import warnings
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np

from ..data import CATEGORICAL, FEATURE_KINDS, NUMERIC, Dataset, FeatureSchema, SchemaError
from ._backend import get_kernels

MODEL_FORMAT = "fairaudit.forest"
MODEL_VERSION = 1
THREADS_ENV = "FAIRAUDIT_THREADS"


class ModelFormatError(ValueError):
    """Model file is corrupted or written by an incompatible version."""


class DegenerateModelWarning(UserWarning):
    """Training labels contain a single class; every tree is a single leaf."""


@dataclass(frozen=True)
class TrainConfig:
    n_trees: int = 500
    mtry: Optional[int] = None  # None: floor(sqrt(n_features))
    min_node_size: int = 1
    max_depth: Optional[int] = None  # None: unlimited
    seed: int = 0
    class_weighting: bool = True

    def __post_init__(self):
        if self.n_trees < 1:
            raise ValueError("n_trees must be >= 1")
        if self.min_node_size < 1:
            raise ValueError("min_node_size must be >= 1")
        if self.mtry is not None and self.mtry < 1:
            raise ValueError("mtry must be >= 1")
        if self.max_depth is not None and self.max_depth < 0:
            raise ValueError("max_depth must be >= 0")
        if not 0 <= self.seed < 2 ** 64:
            raise ValueError("seed must be a 64-bit unsigned integer")

    def resolved_mtry(self, n_features: int) -> int:
        m = self.mtry if self.mtry is not None else max(1, math.isqrt(n_features))
        if not 1 <= m <= n_features:
            raise ValueError(f"mtry={m} outside [1, {n_features}]")
        return m


def _level_key(t):
    return (t is None, t or "")


@dataclass(frozen=True)
class FeatureEncoder:
    """Maps dataset rows to the numeric matrix the kernels consume.

    Numeric columns pass through; token columns become level codes, with
    tokens unseen at training time coded -1.
    """

    names: tuple
    kinds: tuple  # "numeric" or "categorical" per feature
    levels: tuple  # per feature: tuple of tokens (categorical) or ()

    @classmethod
    def fit(cls, data: Dataset) -> "FeatureEncoder":
        names, kinds, levels = [], [], []
        for name, kind in data.schema.columns:
            if kind not in FEATURE_KINDS:
                continue
            names.append(name)
            if kind == NUMERIC:
                kinds.append(NUMERIC)
                levels.append(())
            else:
                kinds.append(CATEGORICAL)
                levels.append(tuple(sorted(set(data.column(name)), key=_level_key)))
        if not names:
            raise SchemaError("dataset has no feature columns")
        return cls(tuple(names), tuple(kinds), tuple(levels))

    @property
    def is_cat(self) -> np.ndarray:
        return np.array([k == CATEGORICAL for k in self.kinds], dtype=np.uint8)

    @property
    def n_levels_cat(self) -> np.ndarray:
        return np.array([len(lv) for lv in self.levels], dtype=np.int32)

    def encode(self, data: Dataset) -> np.ndarray:
        schema = data.schema
        X = np.empty((len(data), len(self.names)), dtype=np.float64)
        for j, (name, kind, lv) in enumerate(zip(self.names, self.kinds, self.levels)):
            if name not in schema.names:
                raise SchemaError(f"feature column {name!r} missing from dataset")
            have = schema.kind(name)
            if (kind == NUMERIC) != (have == NUMERIC):
                raise SchemaError(f"feature column {name!r} has kind {have}, model expects {kind}")
            col = data.column(name)
            if kind == NUMERIC:
                if any(v is None for v in col):
                    raise SchemaError(f"numeric feature {name!r} has missing cells; impute first")
                X[:, j] = col
            else:
                code = {t: i for i, t in enumerate(lv)}
                X[:, j] = [code.get(t, -1) for t in col]
        return X


def _ranks(X: np.ndarray, is_cat: np.ndarray, n_levels_cat: np.ndarray):
    n, p = X.shape
    ranks = np.empty((n, p), dtype=np.int32)
    uniq_parts, offsets, n_levels = [], [], []
    off = 0
    for j in range(p):
        if is_cat[j]:
            ranks[:, j] = X[:, j].astype(np.int32)
            n_levels.append(int(n_levels_cat[j]))
            offsets.append(off)
        else:
            u = np.unique(X[:, j])
            ranks[:, j] = np.searchsorted(u, X[:, j])
            uniq_parts.append(u)
            offsets.append(off)
            off += u.size
            n_levels.append(u.size)
    uniq = np.concatenate(uniq_parts) if uniq_parts else np.zeros(0)
    return ranks, uniq, np.array(offsets, dtype=np.int64), np.array(n_levels, dtype=np.int32)


def class_weights(labels: np.ndarray):
    """Inverse label-proportion weights ``(w_pos, w_neg)``."""
    n = labels.size
    npos = int(labels.sum())
    nneg = n - npos
    w_pos = 1.0 / (npos / n) if npos else 1.0
    w_neg = 1.0 / (nneg / n) if nneg else 1.0
    return w_pos, w_neg


def tree_seeds(seed: int, n_trees: int):
    """Independent per-tree seed sequences; tree ``i`` depends only on (seed, i)."""
    return np.random.SeedSequence(seed).spawn(n_trees)


def weighted_bootstrap(weights: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Draw ``len(weights)`` rows with replacement, probability proportional to weight."""
    n = weights.size
    cdf = np.cumsum(weights)
    u = rng.random(n) * cdf[-1]
    idx = np.minimum(np.searchsorted(cdf, u, side="right"), n - 1)
    return np.sort(idx)


def worker_count() -> int:
    raw = os.environ.get(THREADS_ENV)
    if raw:
        try:
            return max(1, int(raw))
        except ValueError:
            raise ValueError(f"{THREADS_ENV} must be an integer, got {raw!r}") from None
    return os.cpu_count() or 1


@dataclass
class ForestModel:
    config: TrainConfig
    schema_columns: tuple
    encoder: FeatureEncoder
    w_pos: float
    w_neg: float
    train_labels: np.ndarray
    bootstrap: np.ndarray  # (n_trees, n_boot) sorted row indices
    # concatenated tree arrays; child and member offsets are global
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    cat_offset: np.ndarray
    n_pos: np.ndarray
    n_neg: np.ndarray
    members: np.ndarray
    roots: np.ndarray
    oob_error: float = float("nan")
    degenerate: bool = False
    backend: str = field(default="", compare=False)

    @property
    def n_trees(self) -> int:
        return int(self.roots.size)

    @property
    def instance_weights(self) -> np.ndarray:
        return np.where(self.train_labels == 1, self.w_pos, self.w_neg)

    def tree_nodes(self, t: int) -> range:
        end = self.roots[t + 1] if t + 1 < self.roots.size else self.feature.size
        return range(int(self.roots[t]), int(end))


def train(data: Dataset, cfg: TrainConfig = TrainConfig(), backend: Optional[str] = None) -> ForestModel:
    """Grow ``cfg.n_trees`` weighted CART trees on ``data`` (which must carry a label column)."""
    if len(data) == 0:
        raise ValueError("cannot train on an empty dataset")
    kernels = get_kernels(backend)
    y = data.labels()
    encoder = FeatureEncoder.fit(data)
    X = encoder.encode(data)
    n, p = X.shape
    mtry = cfg.resolved_mtry(p)
    degenerate = y.min() == y.max()
    if degenerate:
        warnings.warn("training labels contain a single class; the forest predicts a constant",
                      DegenerateModelWarning, stacklevel=2)
    w_pos, w_neg = class_weights(y) if cfg.class_weighting else (1.0, 1.0)
    weights = np.where(y == 1, w_pos, w_neg)
    ranks, uniq, uniq_off, n_levels = _ranks(X, encoder.is_cat, encoder.n_levels_cat)
    max_depth = -1 if cfg.max_depth is None else cfg.max_depth

    seqs = tree_seeds(cfg.seed, cfg.n_trees)

    def grow(t):
        seq = seqs[t]
        boot = weighted_bootstrap(weights, np.random.default_rng(seq))
        node_seed = int(seq.generate_state(1, np.uint64)[0])
        tree = kernels.build_tree(ranks, uniq, uniq_off, encoder.is_cat, n_levels, y, boot,
                                  w_pos, w_neg, mtry, cfg.min_node_size, max_depth, node_seed)
        return boot, tree

    workers = min(worker_count(), cfg.n_trees)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            grown = list(pool.map(grow, range(cfg.n_trees)))
    else:
        grown = [grow(t) for t in range(cfg.n_trees)]

    model = _assemble(cfg, data.schema, encoder, w_pos, w_neg, y, grown)
    model.degenerate = bool(degenerate)
    model.backend = kernels.__name__.rsplit(".", 1)[-1]
    model.oob_error = _oob_from_votes(model, tree_vote_matrix(model, X, backend=backend), y)
    return model


def _assemble(cfg, schema: FeatureSchema, encoder, w_pos, w_neg, y, grown) -> ForestModel:
    parts = {k: [] for k in ("feature", "threshold", "left", "right", "cat_offset", "n_pos", "n_neg", "members")}
    roots = []
    node_off = 0
    mem_off = 0
    for _, tree in grown:
        roots.append(node_off)
        left = tree["left"].astype(np.int32)
        right = tree["right"].astype(np.int32)
        cat = tree["cat_offset"].astype(np.int32)
        parts["left"].append(np.where(left >= 0, left + node_off, -1))
        parts["right"].append(np.where(right >= 0, right + node_off, -1))
        parts["cat_offset"].append(np.where(cat >= 0, cat + mem_off, -1))
        for k in ("feature", "threshold", "n_pos", "n_neg", "members"):
            parts[k].append(tree[k])
        node_off += tree["feature"].size
        mem_off += tree["members"].size
    dtypes = {"threshold": np.float64, "members": np.uint8}
    arrays = {k: np.concatenate(v).astype(dtypes.get(k, np.int32)) for k, v in parts.items()}
    return ForestModel(
        config=cfg,
        schema_columns=schema.columns,
        encoder=encoder,
        w_pos=float(w_pos),
        w_neg=float(w_neg),
        train_labels=np.asarray(y, dtype=np.uint8),
        bootstrap=np.stack([b for b, _ in grown]).astype(np.int32),
        roots=np.array(roots, dtype=np.int64),
        **arrays,
    )


def tree_vote_matrix(model: ForestModel, X: np.ndarray, tie_positive: bool = True,
                     backend: Optional[str] = None) -> np.ndarray:
    """(n_rows, n_trees) uint8 matrix: 1 where the tree votes positive."""
    k = get_kernels(backend)
    return k.tree_votes(
        np.ascontiguousarray(X, dtype=np.float64), model.encoder.is_cat, model.encoder.n_levels_cat,
        model.feature, model.threshold, model.left, model.right, model.cat_offset,
        model.n_pos, model.n_neg, model.members, model.roots, model.w_pos, model.w_neg, tie_positive,
    )


def predict_votes(model: ForestModel, data: Dataset, tie_positive: bool = True) -> np.ndarray:
    """Number of trees voting positive for each row."""
    if len(data) == 0:
        return np.zeros(0, dtype=np.int64)
    X = model.encoder.encode(data)
    return tree_vote_matrix(model, X, tie_positive).sum(axis=1, dtype=np.int64)


def predict_proba_batch(model: ForestModel, data: Dataset, tie_positive: bool = True) -> np.ndarray:
    return predict_votes(model, data, tie_positive) / model.n_trees


def predict_proba(model: ForestModel, row: Sequence, tie_positive: bool = True) -> float:
    """Vote fraction for a single row laid out in the training schema."""
    if len(row) != len(model.schema_columns):
        raise SchemaError(f"row has {len(row)} cells, training schema has {len(model.schema_columns)}")
    schema = FeatureSchema(model.schema_columns)
    return float(predict_proba_batch(model, Dataset(schema, (tuple(row),)), tie_positive)[0])


def _oob_from_votes(model: ForestModel, votes: np.ndarray, y: np.ndarray) -> float:
    n = votes.shape[0]
    inbag = np.zeros((model.n_trees, n), dtype=bool)
    for t in range(model.n_trees):
        inbag[t, model.bootstrap[t]] = True
    oob = ~inbag.T
    n_oob = oob.sum(axis=1)
    pos = (votes.astype(bool) & oob).sum(axis=1)
    has = n_oob > 0
    if not has.any():
        return float("nan")
    pred = (2 * pos[has] >= n_oob[has]).astype(np.uint8)
    return float(np.count_nonzero(pred != y[has]) / int(has.sum()))


def oob_error(model: ForestModel, data: Dataset) -> float:
    """Misclassification rate of out-of-bag majority votes over rows with any out-of-bag tree."""
    y = data.labels()
    if y.size != model.bootstrap.shape[1]:
        raise ValueError("data is not the training set of this model")
    return _oob_from_votes(model, tree_vote_matrix(model, model.encoder.encode(data)), y)


def oob_proba(model: ForestModel, data: Dataset) -> np.ndarray:
    """Out-of-bag positive vote fraction per training row; NaN where every tree saw the row."""
    if len(data) != model.bootstrap.shape[1]:
        raise ValueError("data is not the training set of this model")
    votes = tree_vote_matrix(model, model.encoder.encode(data))
    oob = np.ones((len(data), model.n_trees), dtype=bool)
    for t in range(model.n_trees):
        oob[model.bootstrap[t], t] = False
    n_oob = oob.sum(axis=1)
    pos = (votes.astype(bool) & oob).sum(axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(n_oob > 0, pos / n_oob, np.nan)


# -- model files -----------------------------------------------------------------

_ARRAYS = ("train_labels", "bootstrap", "feature", "threshold", "left", "right",
           "cat_offset", "n_pos", "n_neg", "members", "roots")


def _pack(a: np.ndarray) -> dict:
    dt = a.dtype.newbyteorder("<")
    raw = np.ascontiguousarray(a, dtype=dt).tobytes()
    return {"dtype": dt.str, "shape": list(a.shape),
            "data": base64.b64encode(zlib.compress(raw, 6)).decode("ascii")}


def _unpack(d: dict) -> np.ndarray:
    raw = zlib.decompress(base64.b64decode(d["data"], validate=True))
    return np.frombuffer(raw, dtype=np.dtype(d["dtype"])).reshape(d["shape"]).copy()


def dumps_model(model: ForestModel) -> str:
    doc = {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "config": asdict(model.config),
        "schema": [list(c) for c in model.schema_columns],
        "features": [
            {"name": n, "kind": k, "levels": list(lv)}
            for n, k, lv in zip(model.encoder.names, model.encoder.kinds, model.encoder.levels)
        ],
        "class_weights": {"positive": model.w_pos, "negative": model.w_neg},
        "oob_error": model.oob_error,
        "degenerate": model.degenerate,
        "arrays": {k: _pack(getattr(model, k)) for k in _ARRAYS},
    }
    return json.dumps(doc, sort_keys=True, indent=1) + "\n"


def loads_model(text: str) -> ForestModel:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"model file is not valid JSON: {exc}") from None
    if not isinstance(doc, dict) or doc.get("format") != MODEL_FORMAT:
        raise ModelFormatError("not a fairaudit forest model file")
    if doc.get("version") != MODEL_VERSION:
        raise ModelFormatError(f"model file version {doc.get('version')!r}, this build reads {MODEL_VERSION}")
    try:
        feats = doc["features"]
        encoder = FeatureEncoder(
            tuple(f["name"] for f in feats), tuple(f["kind"] for f in feats),
            tuple(tuple(f["levels"]) for f in feats),
        )
        arrays = {k: _unpack(doc["arrays"][k]) for k in _ARRAYS}
        model = ForestModel(
            config=TrainConfig(**doc["config"]),
            schema_columns=tuple((n, k) for n, k in doc["schema"]),
            encoder=encoder,
            w_pos=float(doc["class_weights"]["positive"]),
            w_neg=float(doc["class_weights"]["negative"]),
            oob_error=float(doc["oob_error"]),
            degenerate=bool(doc["degenerate"]),
            **arrays,
        )
    except (KeyError, TypeError, ValueError, zlib.error) as exc:
        raise ModelFormatError(f"corrupted model file: {exc}") from None
    _check_model(model)
    return model


def _check_model(model: ForestModel) -> None:
    n_nodes = model.feature.size
    ok = (
        model.roots.size == model.config.n_trees
        and all(getattr(model, k).size == n_nodes for k in ("threshold", "left", "right", "cat_offset", "n_pos", "n_neg"))
        and model.bootstrap.shape[0] == model.config.n_trees
        and int(model.feature.max(initial=-1)) < len(model.encoder.names)
        and int(model.left.max(initial=-1)) < n_nodes
        and int(model.right.max(initial=-1)) < n_nodes
    )
    if not ok:
        raise ModelFormatError("corrupted model file: inconsistent tree arrays")


def save_model(model: ForestModel, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(dumps_model(model))


def load_model(path) -> ForestModel:
    with open(path, encoding="utf-8") as fh:
        return loads_model(fh.read())
