from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from ..data_model import Label
from .estimators import AdaBoost, DecisionTree, LinearSVM, RandomBaseline, RandomForest


class ModelFamily(enum.Enum):
    RANDOM_FOREST = "RandomForest"
    SVM = "SVM"
    ADABOOST = "AdaBoost"
    RANDOM_BASELINE = "RandomBaseline"
    DECISION_TREE = "DecisionTree"

    @classmethod
    def parse(cls, value) -> "ModelFamily":
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower()
        for fam in cls:
            if key in (fam.value.lower(), fam.name.lower()):
                return fam
        raise ValueError(f"unknown model family {value!r}")


_ESTIMATORS = {
    ModelFamily.RANDOM_FOREST: RandomForest,
    ModelFamily.SVM: LinearSVM,
    ModelFamily.ADABOOST: AdaBoost,
    ModelFamily.RANDOM_BASELINE: RandomBaseline,
    ModelFamily.DECISION_TREE: DecisionTree,
}

DEFAULT_PARAMS = {
    ModelFamily.RANDOM_FOREST: {"n_trees": 100, "max_depth": 10, "min_samples_leaf": 1,
                                "max_features": "sqrt", "bootstrap": True},
    ModelFamily.SVM: {"lam": 1e-3, "epochs": 100, "project": True},
    ModelFamily.ADABOOST: {"n_rounds": 50},
    ModelFamily.RANDOM_BASELINE: {},
    ModelFamily.DECISION_TREE: {"max_depth": 10, "min_samples_leaf": 1, "max_features": None},
}

DEFAULT_MODELS = (ModelFamily.RANDOM_FOREST, ModelFamily.SVM, ModelFamily.ADABOOST)


def _check_params(family: ModelFamily, p: dict) -> None:
    unknown = set(p) - set(DEFAULT_PARAMS[family])
    if unknown:
        raise ValueError(f"{family.value}: unknown hyperparameters {sorted(unknown)}")
    positive_ints = {"n_trees", "max_depth", "min_samples_leaf", "n_rounds", "epochs"}
    for key in positive_ints & set(p):
        if int(p[key]) != p[key] or p[key] < 1:
            raise ValueError(f"{family.value}: {key} must be a positive integer, got {p[key]!r}")
    if "lam" in p and not p["lam"] > 0:
        raise ValueError(f"{family.value}: lam must be positive")
    mf = p.get("max_features")
    if mf not in (None, "all", "sqrt") and not (
            (isinstance(mf, int) and mf >= 1) or (isinstance(mf, float) and 0 < mf <= 1)):
        raise ValueError(f"{family.value}: invalid max_features {mf!r}")


@dataclass(frozen=True)
class ModelSpec:
    family: ModelFamily
    params: dict = field(default_factory=dict)
    seed: int = 0

    def __post_init__(self):
        fam = ModelFamily.parse(self.family)
        object.__setattr__(self, "family", fam)
        merged = {**DEFAULT_PARAMS[fam], **(self.params or {})}
        _check_params(fam, merged)
        object.__setattr__(self, "params", merged)

    @property
    def name(self) -> str:
        return self.family.value

    def with_seed(self, seed: int) -> "ModelSpec":
        return replace(self, seed=int(seed))

    def build(self):
        return _ESTIMATORS[self.family](**self.params, seed=self.seed)

    def to_dict(self) -> dict:
        return {"family": self.family.value, "params": self.params, "seed": self.seed}


@dataclass(frozen=True, eq=False)
class Standardizer:
    mean: np.ndarray
    scale: np.ndarray

    @classmethod
    def fit(cls, X: np.ndarray) -> "Standardizer":
        X = np.asarray(X, dtype=np.float64)
        mean = X.mean(axis=0)
        std = X.std(axis=0)
        flat = std <= 1e-12 * np.maximum(1.0, np.abs(mean))
        return cls(mean, np.where(flat, 1.0, std))

    @classmethod
    def identity(cls, d: int) -> "Standardizer":
        return cls(np.zeros(d), np.ones(d))

    def transform(self, X: np.ndarray) -> np.ndarray:
        return (np.asarray(X, dtype=np.float64) - self.mean) / self.scale


@dataclass(frozen=True, eq=False)
class TrainedModel:
    spec: ModelSpec
    standardizer: Standardizer
    estimator: object

    @property
    def n_dims(self) -> int:
        return self.standardizer.mean.shape[0]

    def predict_codes(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.n_dims:
            raise ValueError(f"expected vectors of dimension {self.n_dims}, got shape {X.shape}")
        return self.estimator.predict(self.standardizer.transform(X))


def train(spec: ModelSpec, X, y) -> TrainedModel:
    """Fit ``spec`` on rows ``X`` with 0/1 labels ``y`` (1 = NeedToSearch).

    Standardisation statistics come from ``X`` only.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if X.ndim != 2 or X.shape[1] == 0:
        raise ValueError(f"training matrix must have at least one dimension, got shape {X.shape}")
    if spec.family is not ModelFamily.RANDOM_BASELINE:
        if X.shape[0] < 2:
            raise ValueError("need at least 2 training samples")
        if len(np.unique(y)) < 2:
            raise ValueError("training set contains a single class")
    scaler = Standardizer.fit(X)
    est = spec.build().fit(scaler.transform(X), y)
    return TrainedModel(spec, scaler, est)


def train_samples(spec: ModelSpec, samples) -> TrainedModel:
    X = np.stack([s.vector for s in samples])
    y = np.array([s.label.code for s in samples])
    return train(spec, X, y)


def predict_batch(model: TrainedModel, vectors) -> list[Label]:
    return [Label.from_code(c) for c in model.predict_codes(vectors)]


def predict(model: TrainedModel, vector) -> Label:
    return predict_batch(model, np.asarray(vector, dtype=np.float64)[None, :])[0]


def save_model(model: TrainedModel, path) -> Path:
    path = Path(path)
    doc = {
        "format": "ineeg-model",
        "version": 1,
        **model.spec.to_dict(),
        "standardizer": {"mean": model.standardizer.mean.tolist(), "scale": model.standardizer.scale.tolist()},
        "state": model.estimator.get_state(),
    }
    path.write_text(json.dumps(doc))
    return path


def load_model(path) -> TrainedModel:
    doc = json.loads(Path(path).read_text())
    if doc.get("format") != "ineeg-model":
        raise ValueError(f"{path}: not a model file")
    spec = ModelSpec(doc["family"], doc["params"], doc["seed"])
    scaler = Standardizer(np.array(doc["standardizer"]["mean"], np.float64),
                          np.array(doc["standardizer"]["scale"], np.float64))
    cls = _ESTIMATORS[spec.family]
    est = cls.from_state(doc["state"], **spec.params, seed=spec.seed)
    return TrainedModel(spec, scaler, est)
