"""End-to-end helpers shared by the synth tests and the acceptance suite."""
import numpy as np

from fairaudit.forest import TrainConfig, predict_proba_batch, train
from fairaudit.preprocess import run_pipeline
from fairaudit.synth import generate


def fit_on_synth(spec, cfg):
    """generate -> preprocess -> train; returns (model, split, test probabilities)."""
    split = run_pipeline(generate(spec))
    model = train(split.train, cfg)
    return model, split, predict_proba_batch(model, split.test)


def test_accuracy(spec, n_trees=100, seed=0, class_weighting=True):
    model, split, probs = fit_on_synth(spec, TrainConfig(n_trees=n_trees, seed=seed, class_weighting=class_weighting))
    y = split.test.labels()
    return float(np.mean((probs >= 0.5) == y)), model, y


test_accuracy.__test__ = False  # not a pytest test despite the name
