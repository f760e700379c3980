"""Binary classifiers written against 0/1 labels (1 = NeedToSearch).

Every estimator exposes ``fit(X, y)``, ``predict(X)`` and a JSON-friendly
``get_state()`` / ``from_state()`` pair used by model persistence.
"""

from __future__ import annotations

import math

import numpy as np

from .._seeding import derive_rng
from . import _kernels

EPS_CLAMP = 1e-10


def _check_xy(X, y):
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if X.ndim != 2 or X.shape[1] == 0:
        raise ValueError(f"training matrix must be 2-D with at least one column, got {X.shape}")
    if X.shape[0] != y.shape[0]:
        raise ValueError("X and y lengths differ")
    if X.shape[0] < 2:
        raise ValueError("need at least 2 training samples")
    if not np.all(np.isin(y, (0, 1))):
        raise ValueError("labels must be 0/1")
    if len(np.unique(y)) < 2:
        raise ValueError("training set contains a single class")
    return X, y


def resolve_max_features(max_features, d: int) -> int:
    if max_features is None or max_features == "all":
        return d
    if max_features == "sqrt":
        return max(1, math.ceil(math.sqrt(d)))
    if isinstance(max_features, float) and 0 < max_features <= 1:
        return max(1, math.ceil(max_features * d))
    m = int(max_features)
    if m < 1:
        raise ValueError(f"max_features must be >= 1, got {max_features}")
    return min(m, d)


def _tree_seeds(seed, n_trees):
    return derive_rng(seed, "forest").integers(0, 2**31 - 1, n_trees).astype(np.int64)


class _TreeEnsemble:
    """Shared storage: concatenated node arrays plus per-tree offsets."""

    nodes_ = None

    def _fit_trees(self, X, y, n_trees, bootstrap, max_features):
        X, y = _check_xy(X, y)
        mf = resolve_max_features(max_features, X.shape[1])
        XT = np.ascontiguousarray(X.T)
        self.nodes_ = _kernels.grow_forest(XT, y, _tree_seeds(self.seed, n_trees), bool(bootstrap),
                                           int(self.max_depth), int(self.min_samples_leaf), int(mf))
        return self

    @property
    def n_trees_fitted(self) -> int:
        return len(self.nodes_[5]) - 1

    @property
    def n_nodes(self) -> int:
        return len(self.nodes_[0])

    def votes(self, X):
        return _kernels.forest_votes(*self.nodes_, np.ascontiguousarray(X, dtype=np.float64))

    def predict(self, X):
        return (2 * self.votes(X) > self.n_trees_fitted).astype(np.int64)

    def get_state(self):
        f, t, l, r, v, o = self.nodes_
        return {"feature": f.tolist(), "threshold": t.tolist(), "left": l.tolist(),
                "right": r.tolist(), "value": v.tolist(), "offsets": o.tolist()}

    @classmethod
    def from_state(cls, state, **params):
        model = cls(**params)
        model.nodes_ = (np.array(state["feature"], np.int64), np.array(state["threshold"], np.float64),
                        np.array(state["left"], np.int64), np.array(state["right"], np.int64),
                        np.array(state["value"], np.float64), np.array(state["offsets"], np.int64))
        return model


class DecisionTree(_TreeEnsemble):
    """CART classifier (Gini, exhaustive midpoint scan)."""

    def __init__(self, max_depth=10, min_samples_leaf=1, max_features=None, seed=0):
        self.max_depth = max_depth
        self.min_samples_leaf = min_samples_leaf
        self.max_features = max_features
        self.seed = seed

    def fit(self, X, y):
        return self._fit_trees(X, y, 1, False, self.max_features)


class RandomForest(_TreeEnsemble):
    """Bagged CART trees with per-split feature subsampling and majority vote.

    Per-tree seeds are the first ``n_trees`` draws of
    ``derive_rng(seed, "forest")``; each tree's bootstrap rows and feature
    orders come from that seed. A tie vote predicts NoNeedToSearch.
    """

    def __init__(self, n_trees=100, max_depth=10, min_samples_leaf=1, max_features="sqrt",
                 bootstrap=True, seed=0):
        self.n_trees = n_trees
        self.max_depth = max_depth
        self.min_samples_leaf = min_samples_leaf
        self.max_features = max_features
        self.bootstrap = bootstrap
        self.seed = seed

    def fit(self, X, y):
        return self._fit_trees(X, y, self.n_trees, self.bootstrap, self.max_features)


def stump_weight(eps: float) -> float:
    """AdaBoost vote ``0.5 * ln((1 - eps) / eps)`` with ``eps`` clamped away from 0 and 1."""
    eps = min(max(eps, EPS_CLAMP), 1.0 - EPS_CLAMP)
    return 0.5 * math.log((1.0 - eps) / eps)


class AdaBoost:
    """Discrete AdaBoost over depth-1 stumps."""

    def __init__(self, n_rounds=50, seed=0):
        self.n_rounds = n_rounds
        self.seed = seed
        self.stumps_ = []  # (feature, threshold, polarity, alpha)
        self.errors_ = []  # weighted error of each stump
        self.train_error_ = []  # ensemble 0/1 training error after each round

    def fit(self, X, y):
        X, y = _check_xy(X, y)
        n = X.shape[0]
        ys = 2.0 * y - 1.0
        order = np.ascontiguousarray(np.argsort(X, axis=0, kind="stable"))
        w = np.full(n, 1.0 / n)
        score = np.zeros(n)
        self.stumps_, self.errors_, self.train_error_ = [], [], []
        for _ in range(self.n_rounds):
            f, thr, pol, err = _kernels.best_stump(X, order, ys, w)
            if err >= 0.5 and self.stumps_:
                break
            alpha = stump_weight(err)
            h = np.where(X[:, f] <= thr, pol, -pol).astype(np.float64)
            self.stumps_.append((int(f), float(thr), int(pol), alpha))
            self.errors_.append(float(err))
            score += alpha * h
            self.train_error_.append(float(np.mean(np.where(score > 0, 1.0, -1.0) != ys)))
            if err <= 0.0:
                break
            w = w * np.exp(-alpha * ys * h)
            w /= w.sum()
        return self

    def decision_function(self, X):
        X = np.asarray(X, dtype=np.float64)
        score = np.zeros(X.shape[0])
        for f, thr, pol, alpha in self.stumps_:
            score += alpha * np.where(X[:, f] <= thr, pol, -pol)
        return score

    def predict(self, X):
        return (self.decision_function(X) > 0).astype(np.int64)

    def get_state(self):
        return {"stumps": [list(s) for s in self.stumps_], "errors": self.errors_,
                "train_error": self.train_error_}

    @classmethod
    def from_state(cls, state, **params):
        model = cls(**params)
        model.stumps_ = [(int(f), float(t), int(p), float(a)) for f, t, p, a in state["stumps"]]
        model.errors_ = list(state.get("errors", []))
        model.train_error_ = list(state.get("train_error", []))
        return model


class LinearSVM:
    """Soft-margin linear SVM trained by epoch-wise Pegasos subgradient steps.

    The bias is an extra constant input, so it is regularised with the
    weights. Subgradient steps do not decrease the objective monotonically;
    the iterate with the lowest objective at an epoch end is kept.
    """

    def __init__(self, lam=1e-3, epochs=100, project=True, seed=0):
        self.lam = lam
        self.epochs = epochs
        self.project = project
        self.seed = seed
        self.coef_ = None
        self.intercept_ = 0.0
        self.objective_ = []
        self.raw_objective_ = []

    @classmethod
    def from_params(cls, coef, intercept=0.0, **params):
        model = cls(**params)
        model.coef_ = np.asarray(coef, dtype=np.float64)
        model.intercept_ = float(intercept)
        return model

    def fit(self, X, y):
        X, y = _check_xy(X, y)
        n = X.shape[0]
        Xa = np.ascontiguousarray(np.hstack([X, np.ones((n, 1))]))
        ys = 2.0 * y - 1.0
        rng = derive_rng(self.seed, "svm-shuffle")
        perms = np.stack([rng.permutation(n) for _ in range(self.epochs)]).astype(np.int64)
        w, best, raw = _kernels.pegasos(Xa, ys, float(self.lam), perms, bool(self.project))
        self.coef_ = w[:-1].copy()
        self.intercept_ = float(w[-1])
        self.objective_ = best.tolist()
        self.raw_objective_ = raw.tolist()
        return self

    def objective(self, X, y) -> float:
        X = np.asarray(X, dtype=np.float64)
        Xa = np.ascontiguousarray(np.hstack([X, np.ones((X.shape[0], 1))]))
        w = np.append(self.coef_, self.intercept_)
        return float(_kernels.svm_objective(w, Xa, 2.0 * np.asarray(y, np.float64) - 1.0, float(self.lam)))

    def decision_function(self, X):
        return np.asarray(X, dtype=np.float64) @ self.coef_ + self.intercept_

    def predict(self, X):
        return (self.decision_function(X) > 0).astype(np.int64)

    def get_state(self):
        return {"coef": self.coef_.tolist(), "intercept": self.intercept_, "objective": self.objective_}

    @classmethod
    def from_state(cls, state, **params):
        model = cls.from_params(state["coef"], state["intercept"], **params)
        model.objective_ = list(state.get("objective", []))
        return model


class RandomBaseline:
    """Coin-flip classifier; ``predict`` draws from a stream seeded by ``seed``."""

    def __init__(self, seed=0):
        self.seed = seed

    def fit(self, X, y):
        X = np.asarray(X)
        if X.ndim != 2 or X.shape[0] < 1:
            raise ValueError("training matrix must be 2-D and non-empty")
        return self

    def predict(self, X):
        n = np.asarray(X).shape[0]
        return derive_rng(self.seed, "baseline").integers(0, 2, n).astype(np.int64)

    def get_state(self):
        return {}

    @classmethod
    def from_state(cls, state, **params):
        return cls(**params)
