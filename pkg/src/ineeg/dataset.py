"""Classifier-ready datasets from featurized recordings.

A sample is the expanding window of the last ``W`` segments of a trial
(response last), restricted to a subset of the seven features and flattened
in slot, channel, band, feature order.
"""

from __future__ import annotations

import csv
import enum
import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from ._seeding import derive_rng
from .data_model import FEATURE_KINDS, FeatureKind, Label
from .features import FeaturizedRecording

CANONICAL_WINDOWS = (2, 4, 8, 16)


class SkippedSubjectWarning(UserWarning):
    """A subject could not contribute a balanced dataset."""


class Condition(enum.Enum):
    GENERALISED = "Generalised"
    PERSONALISED = "Personalised"

    @classmethod
    def parse(cls, value) -> "Condition":
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower()
        for c in cls:
            if c.value.lower() == key or c.name.lower() == key:
                return c
        raise ValueError(f"unknown condition {value!r}")


@dataclass(frozen=True, order=True)
class FeatureMask:
    """Non-empty subset of features; ``bits`` has bit ``i`` set for the i-th canonical feature."""

    bits: int

    def __post_init__(self):
        if not 0 < self.bits < (1 << len(FEATURE_KINDS)):
            raise ValueError(f"feature mask bits out of range: {self.bits}")

    @classmethod
    def of(cls, kinds) -> "FeatureMask":
        bits = 0
        for k in kinds:
            k = k if isinstance(k, FeatureKind) else FeatureKind.from_name(k)
            bits |= 1 << k.index
        return cls(bits)

    @classmethod
    def from_name(cls, name: str) -> "FeatureMask":
        parts = [p for p in name.split("-") if p.strip()]
        if not parts:
            raise ValueError("empty feature mask name")
        return cls.of(parts)

    @classmethod
    def all(cls) -> "FeatureMask":
        return cls((1 << len(FEATURE_KINDS)) - 1)

    @property
    def kinds(self) -> tuple[FeatureKind, ...]:
        return tuple(k for i, k in enumerate(FEATURE_KINDS) if self.bits >> i & 1)

    @property
    def indices(self) -> np.ndarray:
        return np.array([k.index for k in self.kinds], dtype=np.intp)

    @property
    def name(self) -> str:
        return "-".join(k.short_name for k in self.kinds)

    def __len__(self):
        return len(self.kinds)

    def __str__(self):
        return self.name


def enumerate_feature_masks(features: Sequence[FeatureKind] = FEATURE_KINDS) -> list[FeatureMask]:
    """All non-empty subsets of ``features`` in binary counting order."""
    features = [f if isinstance(f, FeatureKind) else FeatureKind.from_name(f) for f in features]
    return [FeatureMask.of(f for j, f in enumerate(features) if i >> j & 1)
            for i in range(1, 1 << len(features))]


@dataclass(frozen=True, eq=False)
class Sample:
    vector: np.ndarray
    label: Label
    subject_id: str
    trial_id: str


@dataclass(frozen=True, eq=False)
class Dataset:
    X: np.ndarray  # (n_samples, n_dims)
    y: np.ndarray  # 1 = NeedToSearch
    subject_ids: np.ndarray
    trial_ids: np.ndarray
    condition: Condition
    window: int
    mask: FeatureMask
    seed: int
    subject: str | None = None
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        n = self.X.shape[0]
        if not (len(self.y) == len(self.subject_ids) == len(self.trial_ids) == n):
            raise ValueError("dataset arrays have inconsistent lengths")

    def __len__(self):
        return self.X.shape[0]

    @property
    def n_dims(self) -> int:
        return self.X.shape[1]

    def class_counts(self) -> tuple[int, int]:
        """(NeedToSearch, NoNeedToSearch)."""
        pos = int(np.sum(self.y == 1))
        return pos, len(self.y) - pos

    @property
    def samples(self) -> list[Sample]:
        return [Sample(self.X[i], Label.from_code(self.y[i]), str(self.subject_ids[i]), str(self.trial_ids[i]))
                for i in range(len(self))]

    def manifest(self) -> dict:
        return {
            "condition": self.condition.value,
            "subject": self.subject,
            "window": self.window,
            "mask": self.mask.name,
            "seed": self.seed,
            "n_samples": len(self),
            "n_dims": self.n_dims,
            **self.provenance,
        }

    def export_csv(self, path) -> Path:
        """Write ``subject_id,trial_id,label,v0..vN`` plus a sibling ``.manifest.json``."""
        path = Path(path)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["subject_id", "trial_id", "label"] + [f"v{i}" for i in range(self.n_dims)])
            for i in range(len(self)):
                w.writerow([self.subject_ids[i], self.trial_ids[i], Label.from_code(self.y[i]).value]
                           + [repr(float(v)) for v in self.X[i]])
        path.with_suffix(".manifest.json").write_text(json.dumps(self.manifest(), indent=2) + "\n")
        return path


def build_window(trial_tensor: np.ndarray, window: int) -> np.ndarray:
    """Last ``window`` segment tensors of a trial, front-padded with zeros."""
    if window < 1:
        raise ValueError(f"window size must be >= 1, got {window}")
    tail = trial_tensor[-window:]
    if tail.shape[0] == window:
        return tail.copy()
    pad = np.zeros((window - tail.shape[0],) + trial_tensor.shape[1:], dtype=trial_tensor.dtype)
    return np.concatenate([pad, tail], axis=0)


def stack_windows(feat: FeaturizedRecording, window: int) -> np.ndarray:
    """``(n_trials, window, channels, bands, features)`` for one subject."""
    out = np.zeros((feat.n_trials, window) + feat.cell_shape)
    for i, tensor in enumerate(feat.tensors):
        out[i] = build_window(tensor, window)
    return out


def masked_matrix(windows: np.ndarray, mask: FeatureMask) -> np.ndarray:
    """Select ``mask`` features from stacked windows and flatten per trial."""
    sel = windows[..., mask.indices]
    return sel.reshape(sel.shape[0], -1)


def balance_indices(labels: np.ndarray, seed: int) -> np.ndarray:
    """Indices of a class-balanced subset.

    The majority class is undersampled without replacement to the minority
    count; the result is shuffled. Both steps are driven by ``seed``.
    """
    labels = np.asarray(labels)
    pos = np.flatnonzero(labels == 1)
    neg = np.flatnonzero(labels != 1)
    if len(pos) == 0 or len(neg) == 0:
        raise ValueError(f"cannot balance: class counts are {len(pos)} NeedToSearch / {len(neg)} NoNeedToSearch")
    rng = derive_rng(seed, "balance")
    m = min(len(pos), len(neg))
    if len(pos) > m:
        pos = rng.choice(pos, m, replace=False)
    if len(neg) > m:
        neg = rng.choice(neg, m, replace=False)
    return rng.permutation(np.concatenate([pos, neg]))


def balance_classes(samples: Sequence[Sample], seed: int) -> list[Sample]:
    idx = balance_indices(np.array([s.label.code for s in samples]), seed)
    return [samples[i] for i in idx]


def _make_dataset(X, y, sids, tids, condition, window, mask, seed, subject=None) -> Dataset:
    return Dataset(X, y, sids, tids, condition, window, mask, seed, subject,
                   {"balance_seed": seed})


def assemble_from_windows(feats: Sequence[FeaturizedRecording], windows: Sequence[np.ndarray],
                          condition, window: int, mask: FeatureMask, seed: int,
                          balance_scope: str = "condition"):
    """Like :func:`assemble` but reuses precomputed :func:`stack_windows` output."""
    condition = Condition.parse(condition)
    parts = []
    for feat, win in zip(feats, windows):
        X = masked_matrix(win, mask)
        sids = np.array([feat.subject_id] * feat.n_trials, dtype=object)
        parts.append((feat, X, feat.labels, sids, np.array(feat.trial_ids, dtype=object)))

    if condition is Condition.PERSONALISED:
        out = []
        for feat, X, y, sids, tids in parts:
            if len(set(y.tolist())) < 2:
                warnings.warn(f"subject {feat.subject_id} lacks one class; skipped", SkippedSubjectWarning)
                continue
            idx = balance_indices(y, seed)
            out.append(_make_dataset(X[idx], y[idx], sids[idx], tids[idx], condition, window, mask, seed,
                                     subject=feat.subject_id))
        return out

    if balance_scope == "subject":
        chunks = []
        for feat, X, y, sids, tids in parts:
            if len(set(y.tolist())) < 2:
                warnings.warn(f"subject {feat.subject_id} lacks one class; skipped", SkippedSubjectWarning)
                continue
            idx = balance_indices(y, seed)
            chunks.append((X[idx], y[idx], sids[idx], tids[idx]))
        if not chunks:
            raise ValueError("no subject has both classes")
        X, y, sids, tids = (np.concatenate(c) for c in zip(*chunks))
        order = derive_rng(seed, "pool").permutation(len(y))
        return _make_dataset(X[order], y[order], sids[order], tids[order], condition, window, mask, seed)
    if balance_scope != "condition":
        raise ValueError("balance_scope must be 'condition' or 'subject'")
    X = np.concatenate([p[1] for p in parts])
    y = np.concatenate([p[2] for p in parts])
    sids = np.concatenate([p[3] for p in parts])
    tids = np.concatenate([p[4] for p in parts])
    idx = balance_indices(y, seed)
    return _make_dataset(X[idx], y[idx], sids[idx], tids[idx], condition, window, mask, seed)


def assemble(feats: Sequence[FeaturizedRecording], condition, window: int, mask: FeatureMask,
             seed: int, balance_scope: str = "condition"):
    """Build the balanced dataset(s) for one (condition, window, mask) cell.

    Generalised returns one pooled :class:`Dataset`; Personalised returns a
    list with one dataset per subject that has both classes.
    """
    if not feats:
        raise ValueError("no featurized recordings given")
    windows = [stack_windows(f, window) for f in feats]
    return assemble_from_windows(feats, windows, condition, window, mask, seed, balance_scope)
