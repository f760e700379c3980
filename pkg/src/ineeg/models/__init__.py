"""From-scratch classifiers and the model specification layer."""

from .base import (
    DEFAULT_PARAMS,
    DEFAULT_MODELS,
    ModelFamily,
    ModelSpec,
    Standardizer,
    TrainedModel,
    load_model,
    predict,
    predict_batch,
    save_model,
    train,
    train_samples,
)
from .estimators import AdaBoost, DecisionTree, LinearSVM, RandomBaseline, RandomForest, stump_weight

__all__ = [
    "AdaBoost", "DecisionTree", "LinearSVM", "RandomBaseline", "RandomForest", "stump_weight",
    "DEFAULT_PARAMS", "DEFAULT_MODELS", "ModelFamily", "ModelSpec", "Standardizer", "TrainedModel",
    "load_model", "predict", "predict_batch", "save_model", "train", "train_samples",
]
