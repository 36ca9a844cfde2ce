"""Weighted random forest with a compiled split-search core and a numpy fallback."""
from ._backend import BACKEND
from .model import (
    DegenerateModelWarning,
    FeatureEncoder,
    ForestModel,
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

__all__ = [
    "BACKEND", "DegenerateModelWarning", "FeatureEncoder", "ForestModel", "ModelFormatError",
    "TrainConfig", "class_weights", "dumps_model", "load_model", "loads_model", "oob_error", "oob_proba",
    "predict_proba", "predict_proba_batch", "predict_votes", "save_model", "train", "tree_vote_matrix",
]
