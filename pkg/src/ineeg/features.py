"""Band decomposition and the seven per-band segment features.

All kernels reduce over the last axis, so they accept a single series or a
stack of series (e.g. ``(channels, time)``) and return a scalar or an array
with the time axis removed.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .data_model import (
    CANONICAL_BANDS,
    FEATURE_KINDS,
    BandSpec,
    FeatureKind,
    Recording,
    Segment,
    Trial,
    segment_length,
)
from .preprocess import (
    DEFAULT_ORDER,
    FilterCoefficients,
    apply_zero_phase,
    default_filter,
    design_band_filter,
    preprocess_continuous,
)

CURVE_LENGTH_MODES = ("line", "arc")
_FLAT_VARIANCE = 1e-15


def _check_len(x: np.ndarray, minimum: int, name: str) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 0 or x.shape[-1] < minimum:
        n = 0 if x.ndim == 0 else x.shape[-1]
        raise ValueError(f"{name} needs at least {minimum} samples, got {n}")
    return x


def band_decompose(x: np.ndarray, band: BandSpec, rate: float, order: int = DEFAULT_ORDER) -> np.ndarray:
    """Zero-phase Butterworth band-pass of ``x`` restricted to ``band``."""
    band.check(rate)
    return apply_zero_phase(design_band_filter(band.low_hz, band.high_hz, order, rate), x)


def feat_mean(x):
    x = _check_len(x, 1, "mean")
    return x.mean(axis=-1)


def feat_std(x):
    """Population standard deviation."""
    x = _check_len(x, 1, "standard deviation")
    return x.std(axis=-1)


def _central_moments(x):
    d = x - x.mean(axis=-1, keepdims=True)
    d2 = d * d
    return d, d2.mean(axis=-1), d2


def feat_skewness(x):
    """Fisher-Pearson coefficient ``m3 / m2**1.5``; 0 for flat input."""
    x = _check_len(x, 2, "skewness")
    d, m2, d2 = _central_moments(x)
    m3 = (d2 * d).mean(axis=-1)
    flat = m2 < _FLAT_VARIANCE
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(flat, 0.0, m3 / np.where(flat, 1.0, m2) ** 1.5)
    return out[()] if out.ndim == 0 else out


def feat_kurtosis(x):
    """Excess kurtosis ``m4 / m2**2 - 3``; 0 for flat input."""
    x = _check_len(x, 2, "kurtosis")
    _, m2, d2 = _central_moments(x)
    m4 = (d2 * d2).mean(axis=-1)
    flat = m2 < _FLAT_VARIANCE
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(flat, 0.0, m4 / np.where(flat, 1.0, m2) ** 2 - 3.0)
    return out[()] if out.ndim == 0 else out


def feat_curve_length(x, mode: str = "line"):
    """Sum of absolute consecutive differences.

    ``mode="arc"`` instead sums ``sqrt(1 + dx**2)``, the arc length with a
    unit sample spacing.
    """
    x = _check_len(x, 2, "curve length")
    dx = np.diff(x, axis=-1)
    if mode == "line":
        return np.abs(dx).sum(axis=-1)
    if mode == "arc":
        return np.sqrt(1.0 + dx * dx).sum(axis=-1)
    raise ValueError(f"curve length mode must be one of {CURVE_LENGTH_MODES}")


def feat_num_peaks(x):
    """Number of strict local maxima; plateaus do not count."""
    x = _check_len(x, 3, "peak count")
    mid = x[..., 1:-1]
    peaks = (mid > x[..., :-2]) & (mid > x[..., 2:])
    return peaks.sum(axis=-1).astype(np.float64)


def feat_avg_nonlinear_energy(x):
    """Mean Teager-Kaiser energy ``x[i]**2 - x[i-1] * x[i+1]``."""
    x = _check_len(x, 3, "nonlinear energy")
    mid = x[..., 1:-1]
    return (mid * mid - x[..., :-2] * x[..., 2:]).mean(axis=-1)


FEATURE_FUNCS = {
    FeatureKind.MEAN: feat_mean,
    FeatureKind.STD: feat_std,
    FeatureKind.SKEWNESS: feat_skewness,
    FeatureKind.KURTOSIS: feat_kurtosis,
    FeatureKind.CURVE_LENGTH: feat_curve_length,
    FeatureKind.NUM_PEAKS: feat_num_peaks,
    FeatureKind.AVG_NONLINEAR_ENERGY: feat_avg_nonlinear_energy,
}


def feature_stack(x: np.ndarray, curve_length: str = "line") -> np.ndarray:
    """All seven features of ``x``, stacked on a new last axis."""
    out = []
    for kind in FEATURE_KINDS:
        if kind is FeatureKind.CURVE_LENGTH:
            out.append(feat_curve_length(x, curve_length))
        else:
            out.append(FEATURE_FUNCS[kind](x))
    return np.stack(out, axis=-1)


def feature_tensor(x: np.ndarray, rate: float, bands: Sequence[BandSpec] = CANONICAL_BANDS,
                   curve_length: str = "line") -> np.ndarray:
    """Features of ``x`` (``(..., time)``) per band: shape ``(..., bands, 7)``."""
    return np.stack([feature_stack(band_decompose(x, band, rate), curve_length) for band in bands],
                    axis=-2)


@dataclass(frozen=True, eq=False)
class SegmentFeatures:
    values: np.ndarray  # (channel, band, feature)
    channel_names: tuple[str, ...]
    band_names: tuple[str, ...]
    feature_names: tuple[str, ...] = tuple(k.short_name for k in FEATURE_KINDS)

    def __post_init__(self):
        expected = (len(self.channel_names), len(self.band_names), len(self.feature_names))
        if self.values.shape != expected:
            raise ValueError(f"feature tensor shape {self.values.shape} != {expected}")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("feature tensor contains non-finite values")

    def cell(self, channel: int, band: int, feature: int) -> float:
        return float(self.values[channel, band, feature])


def extract_segment_features(segment, rate: float, bands: Sequence[BandSpec] = CANONICAL_BANDS,
                             channel_names: Sequence[str] | None = None,
                             curve_length: str = "line") -> SegmentFeatures:
    samples = segment.samples if isinstance(segment, Segment) else np.asarray(segment)
    if samples.ndim != 2:
        raise ValueError(f"segment samples must be (channels, time), got {samples.shape}")
    if channel_names is None:
        channel_names = tuple(str(i) for i in range(samples.shape[0]))
    values = feature_tensor(samples, rate, bands, curve_length)
    return SegmentFeatures(values, tuple(channel_names), tuple(b.name for b in bands))


# ------------------------------------------------------------- whole recordings


@dataclass(frozen=True, eq=False)
class FeaturizedRecording:
    """Per-segment feature tensors of every trial of one subject.

    ``tensors[i]`` has shape ``(n_segments_i, channels, bands, features)``
    with the response segment last.
    """

    subject_id: str
    sampling_rate_hz: float
    channel_names: tuple[str, ...]
    band_names: tuple[str, ...]
    feature_names: tuple[str, ...]
    trial_ids: tuple[str, ...]
    labels: np.ndarray
    tensors: tuple[np.ndarray, ...]

    @property
    def n_trials(self) -> int:
        return len(self.trial_ids)

    @property
    def total_segments(self) -> int:
        return int(sum(t.shape[0] for t in self.tensors))

    @property
    def cell_shape(self) -> tuple[int, int, int]:
        return len(self.channel_names), len(self.band_names), len(self.feature_names)

    def save(self, path) -> Path:
        path = Path(path)
        offsets = np.cumsum([0] + [t.shape[0] for t in self.tensors])
        stacked = (np.concatenate(self.tensors, axis=0) if self.tensors
                   else np.zeros((0,) + self.cell_shape))
        meta = {
            "subject_id": self.subject_id,
            "sampling_rate_hz": self.sampling_rate_hz,
            "channel_names": list(self.channel_names),
            "band_names": list(self.band_names),
            "feature_names": list(self.feature_names),
            "trial_ids": list(self.trial_ids),
        }
        with open(path, "wb") as fh:
            np.savez(fh, features=stacked, offsets=offsets, labels=self.labels,
                     meta=np.array(json.dumps(meta)))
        return path

    @classmethod
    def load(cls, path) -> "FeaturizedRecording":
        with np.load(path, allow_pickle=False) as data:
            meta = json.loads(str(data["meta"]))
            feats = data["features"]
            offsets = data["offsets"]
            labels = data["labels"]
        tensors = tuple(feats[offsets[i]:offsets[i + 1]] for i in range(len(offsets) - 1))
        return cls(meta["subject_id"], float(meta["sampling_rate_hz"]), tuple(meta["channel_names"]),
                   tuple(meta["band_names"]), tuple(meta["feature_names"]), tuple(meta["trial_ids"]),
                   labels.astype(np.int64), tensors)

    def write_csv(self, path) -> None:
        """Long-format dump: ``trial_id,segment_index,channel,band,feature,value``."""
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["trial_id", "segment_index", "channel", "band", "feature", "value"])
            for tid, tensor in zip(self.trial_ids, self.tensors):
                for s, c, b, f in np.ndindex(*tensor.shape):
                    w.writerow([tid, s, self.channel_names[c], self.band_names[b],
                                self.feature_names[f], repr(float(tensor[s, c, b, f]))])


def featurize_trial(trial: Trial, rate: float, filt: FilterCoefficients | None,
                    bands: Sequence[BandSpec] = CANONICAL_BANDS, curve_length: str = "line") -> np.ndarray:
    """Preprocess (if ``filt`` is given) and featurize one trial.

    Returns ``(n_segments, channels, bands, 7)``.
    """
    n_seg = trial.n_segments
    seg_len = segment_length(rate)
    cont = trial.continuous()
    if filt is not None:
        cont = preprocess_continuous(cont, filt)
    if cont.shape[1] != n_seg * seg_len:
        raise ValueError(f"trial {trial.trial_id}: segments are not {seg_len} samples long")
    segs = cont.reshape(cont.shape[0], n_seg, seg_len).transpose(1, 0, 2)
    return feature_tensor(segs, rate, bands, curve_length)


def featurize_recording(rec: Recording, preprocess: bool = True, filt: FilterCoefficients | None = None,
                        bands: Sequence[BandSpec] = CANONICAL_BANDS,
                        curve_length: str = "line") -> FeaturizedRecording:
    if preprocess and filt is None:
        filt = default_filter(rec.sampling_rate_hz)
    elif not preprocess:
        filt = None
    tensors = tuple(featurize_trial(t, rec.sampling_rate_hz, filt, bands, curve_length) for t in rec.trials)
    return FeaturizedRecording(
        subject_id=rec.subject_id,
        sampling_rate_hz=rec.sampling_rate_hz,
        channel_names=rec.channel_names,
        band_names=tuple(b.name for b in bands),
        feature_names=tuple(k.short_name for k in FEATURE_KINDS),
        trial_ids=tuple(t.trial_id for t in rec.trials),
        labels=np.array([t.label.code for t in rec.trials], dtype=np.int64),
        tensors=tensors,
    )
