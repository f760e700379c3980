"""Stratified cross-validation, fold metrics and significance against chance."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ._seeding import derive_rng, derive_seed
from .dataset import Dataset
from .models import ModelFamily, ModelSpec, train
from .stats import wilcoxon_signed_rank

METRICS = ("accuracy", "precision", "recall")
DEFAULT_K = 5
# Repeated CV reuses the same samples, so model fold scores are correlated across
# repeats while baseline scores are not; two repeats is the least inflation that
# still yields the ten pairs the test needs.
DEFAULT_REPEATS = 2


@dataclass(frozen=True)
class FoldMetrics:
    accuracy: float
    precision_macro: float
    recall_macro: float

    def __post_init__(self):
        for v in (self.accuracy, self.precision_macro, self.recall_macro):
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"metric out of [0, 1]: {v}")

    def as_dict(self) -> dict:
        return {"accuracy": self.accuracy, "precision": self.precision_macro, "recall": self.recall_macro}


def stratified_kfold(labels, k: int = DEFAULT_K, seed: int = 0) -> list[np.ndarray]:
    """Split indices into ``k`` disjoint folds preserving class proportions.

    Indices of each class are shuffled, the classes are laid end to end and
    position ``i`` of that sequence goes to fold ``i % k``. Fold sizes then
    differ by at most one and each fold's class counts are within one of
    the global proportion.
    """
    labels = np.asarray(labels)
    if k < 2:
        raise ValueError(f"k must be >= 2, got {k}")
    rng = derive_rng(seed, "folds")
    classes, counts = np.unique(labels, return_counts=True)
    if len(classes) == 0:
        raise ValueError("no labels given")
    if counts.min() < k:
        raise ValueError(f"each class needs at least k={k} samples, class counts are "
                         f"{dict(zip(classes.tolist(), counts.tolist()))}")
    sequence = np.concatenate([rng.permutation(np.flatnonzero(labels == c)) for c in classes])
    assignment = np.arange(len(sequence)) % k
    return [np.sort(sequence[assignment == f]) for f in range(k)]


def compute_metrics(predictions, labels) -> FoldMetrics:
    """Accuracy plus macro-averaged precision and recall over the two classes.

    A class that is never predicted contributes a precision of 0.
    """
    pred = np.asarray(predictions)
    true = np.asarray(labels)
    if pred.shape != true.shape:
        raise ValueError("predictions and labels differ in length")
    if pred.size == 0:
        raise ValueError("empty predictions")
    precisions, recalls = [], []
    for c in (1, 0):
        tp = np.sum((pred == c) & (true == c))
        n_pred = np.sum(pred == c)
        n_true = np.sum(true == c)
        precisions.append(tp / n_pred if n_pred else 0.0)
        recalls.append(tp / n_true if n_true else 0.0)
    return FoldMetrics(float(np.mean(pred == true)), float(np.mean(precisions)), float(np.mean(recalls)))


def summarize(metrics: Sequence[FoldMetrics]) -> tuple[dict, dict]:
    """Mean and population SD of each metric."""
    arr = np.array([[m.accuracy, m.precision_macro, m.recall_macro] for m in metrics])
    return dict(zip(METRICS, arr.mean(axis=0).tolist())), dict(zip(METRICS, arr.std(axis=0).tolist()))


@dataclass(frozen=True)
class CvResult:
    spec: ModelSpec
    seed: int
    k: int
    folds: tuple[FoldMetrics, ...]
    mean: dict
    sd: dict
    provenance: dict = field(default_factory=dict)
    fold_correct: tuple = ()  # per fold, 0/1 correctness of each held-out sample

    @property
    def accuracies(self) -> np.ndarray:
        return np.array([f.accuracy for f in self.folds])


def fold_model_seed(spec: ModelSpec, cv_seed: int, fold: int) -> int:
    return derive_seed(spec.seed, "cv", cv_seed, fold)


def cross_validate(spec: ModelSpec, dataset: Dataset, k: int = DEFAULT_K, seed: int = 0) -> CvResult:
    """Stratified k-fold CV: fit on k-1 folds, score the held-out one."""
    X, y = dataset.X, dataset.y
    folds = stratified_kfold(y, k, seed)
    metrics, correct = [], []
    all_idx = np.arange(len(y))
    for f, test in enumerate(folds):
        train_idx = np.setdiff1d(all_idx, test, assume_unique=True)
        model = train(spec.with_seed(fold_model_seed(spec, seed, f)), X[train_idx], y[train_idx])
        pred = model.predict_codes(X[test])
        metrics.append(compute_metrics(pred, y[test]))
        correct.append((pred == y[test]).astype(np.int8))
    mean, sd = summarize(metrics)
    prov = {"window": dataset.window, "mask": dataset.mask.name, "condition": dataset.condition.value,
            "subject": dataset.subject, "n_samples": len(dataset)}
    return CvResult(spec, seed, k, tuple(metrics), mean, sd, prov, tuple(correct))


def repeat_seeds(seed: int, repeats: int = DEFAULT_REPEATS) -> list[int]:
    """CV seeds for repeated runs; the first one is ``seed`` itself."""
    return [seed] + [derive_seed(seed, "repeat", r) for r in range(1, repeats)]


def baseline_spec(spec: ModelSpec) -> ModelSpec:
    return ModelSpec(ModelFamily.RANDOM_BASELINE, {}, derive_seed(spec.seed, "baseline"))


def paired_scores(cv_result: CvResult, dataset: Dataset, k: int = DEFAULT_K,
                  seeds: Sequence[int] | None = None, pairing: str = "fold",
                  baseline: ModelSpec | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Model and baseline scores on identical folds, pooled over ``seeds``.

    ``pairing="fold"`` pairs per-fold accuracies; ``pairing="sample"`` pairs
    the 0/1 correctness of every held-out prediction.
    """
    if pairing not in ("fold", "sample"):
        raise ValueError("pairing must be 'fold' or 'sample'")
    seeds = list(seeds) if seeds is not None else repeat_seeds(cv_result.seed)
    baseline = baseline or baseline_spec(cv_result.spec)
    model_scores, base_scores = [], []
    for s in seeds:
        cv = cv_result if s == cv_result.seed and cv_result.k == k else cross_validate(
            cv_result.spec, dataset, k, s)
        base = cross_validate(baseline, dataset, k, s)
        if pairing == "fold":
            model_scores.extend(cv.accuracies.tolist())
            base_scores.extend(base.accuracies.tolist())
        else:
            model_scores.extend(np.concatenate(cv.fold_correct).tolist())
            base_scores.extend(np.concatenate(base.fold_correct).tolist())
    return np.array(model_scores), np.array(base_scores)


def significance_vs_baseline(cv_result: CvResult, dataset: Dataset, k: int = DEFAULT_K,
                             seeds: Sequence[int] | None = None, pairing: str = "fold",
                             baseline: ModelSpec | None = None) -> float:
    """Two-sided Wilcoxon p-value of the model against the seeded random baseline.

    By default two CV repeats (the first reusing ``cv_result``) give 10
    paired per-fold accuracies. More repeats add pairs but not independent
    data, which makes the test increasingly liberal under the null.
    """
    model_scores, base_scores = paired_scores(cv_result, dataset, k, seeds, pairing, baseline)
    if len(model_scores) < 10:
        raise ValueError(f"need at least 10 paired observations, got {len(model_scores)}")
    return wilcoxon_signed_rank(model_scores, base_scores).pvalue
