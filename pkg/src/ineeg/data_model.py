"""Core domain types and the on-disk recording bundle.

A recording bundle is a directory holding

``manifest.json``
    ``subject_id``, ``sampling_rate_hz``, ``channel_names`` and the sample
    ``precision`` (``"float64"`` or ``"float32"``).
``trials.jsonl``
    One trial per line: ``trial_id``, ``question_id``, ``label`` and
    ``segments``, each segment being ``{"kind": ..., "samples": [[...], ...]}``
    with samples stored channel-major in microvolts.
"""

from __future__ import annotations

import enum
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

logger = logging.getLogger(__name__)

REFERENCE_RATE_HZ = 500.0
DEFAULT_N_CHANNELS = 40
SEGMENT_SECONDS = 0.8
MIN_SEGMENTS = 4
MAX_SEGMENTS = 16

MANIFEST_NAME = "manifest.json"
TRIALS_NAME = "trials.jsonl"
FORMAT_TAG = "ineeg-recording"
FORMAT_VERSION = 1
PRECISIONS = ("float64", "float32")


class RecordingFormatError(ValueError):
    """Raised when a recording bundle cannot be parsed."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class Label(enum.Enum):
    NEED_TO_SEARCH = "NeedToSearch"
    NO_NEED_TO_SEARCH = "NoNeedToSearch"

    @property
    def code(self) -> int:
        """1 for the positive class (NeedToSearch), 0 otherwise."""
        return 1 if self is Label.NEED_TO_SEARCH else 0

    @classmethod
    def from_code(cls, code: int) -> "Label":
        return cls.NEED_TO_SEARCH if int(code) == 1 else cls.NO_NEED_TO_SEARCH


class SegmentKind(enum.Enum):
    WORD = "Word"
    RESPONSE = "Response"


class FeatureKind(enum.Enum):
    """The seven per-band features, in canonical order."""

    MEAN = "Mean"
    STD = "SD"
    SKEWNESS = "Skew"
    KURTOSIS = "Kur"
    CURVE_LENGTH = "Curve"
    NUM_PEAKS = "Peaks"
    AVG_NONLINEAR_ENERGY = "AvEn"

    @property
    def short_name(self) -> str:
        return self.value

    @property
    def index(self) -> int:
        return FEATURE_KINDS.index(self)

    @classmethod
    def from_name(cls, name: str) -> "FeatureKind":
        key = name.strip().lower()
        for kind in cls:
            if key in (kind.value.lower(), kind.name.lower()):
                return kind
        raise ValueError(f"unknown feature name {name!r}")


FEATURE_KINDS: tuple[FeatureKind, ...] = tuple(FeatureKind)


@dataclass(frozen=True)
class BandSpec:
    name: str
    low_hz: float
    high_hz: float

    def check(self, rate: float) -> None:
        if not 0 < self.low_hz < self.high_hz < rate / 2:
            raise ValueError(
                f"band {self.name} ({self.low_hz}-{self.high_hz} Hz) must satisfy "
                f"0 < low < high < {rate / 2} Hz"
            )

    @property
    def center_hz(self) -> float:
        return 0.5 * (self.low_hz + self.high_hz)


CANONICAL_BANDS: tuple[BandSpec, ...] = (
    BandSpec("Delta", 1.0, 4.0),
    BandSpec("Theta", 4.0, 8.0),
    BandSpec("Alpha", 8.0, 12.0),
    BandSpec("Beta", 12.0, 30.0),
    BandSpec("Gamma", 30.0, 40.0),
)


def band_by_name(name: str) -> BandSpec:
    for band in CANONICAL_BANDS:
        if band.name.lower() == name.strip().lower():
            return band
    raise ValueError(f"unknown band {name!r}")


def segment_length(rate: float) -> int:
    """Number of samples in one 800 ms segment at ``rate`` Hz."""
    return int(round(SEGMENT_SECONDS * rate))


def _frozen_array(samples) -> np.ndarray:
    arr = np.asarray(samples)
    if not np.issubdtype(arr.dtype, np.floating):
        arr = arr.astype(np.float64)
    view = arr.view()
    view.flags.writeable = False
    return view


@dataclass(frozen=True, eq=False)
class Segment:
    kind: SegmentKind
    samples: np.ndarray  # (channels, time), microvolts

    def __post_init__(self):
        object.__setattr__(self, "samples", _frozen_array(self.samples))

    def __eq__(self, other):
        if not isinstance(other, Segment):
            return NotImplemented
        return (
            self.kind is other.kind
            and self.samples.shape == other.samples.shape
            and bool(np.array_equal(self.samples, other.samples))
        )


@dataclass(frozen=True)
class Trial:
    trial_id: str
    question_id: str
    segments: tuple[Segment, ...]
    label: Label

    def __post_init__(self):
        object.__setattr__(self, "segments", tuple(self.segments))

    @property
    def n_segments(self) -> int:
        return len(self.segments)

    def continuous(self) -> np.ndarray:
        """Segments concatenated along time, shape (channels, n_segments * seg_len)."""
        return np.concatenate([s.samples for s in self.segments], axis=1)

    def with_samples(self, continuous: np.ndarray) -> "Trial":
        """Return a copy whose segments are re-sliced from ``continuous``."""
        bounds = np.cumsum([0] + [s.samples.shape[1] for s in self.segments])
        if continuous.shape[1] != bounds[-1]:
            raise ValueError("continuous signal length does not match segment boundaries")
        segments = tuple(
            Segment(seg.kind, continuous[:, bounds[i]:bounds[i + 1]])
            for i, seg in enumerate(self.segments)
        )
        return Trial(self.trial_id, self.question_id, segments, self.label)


@dataclass(frozen=True)
class Recording:
    subject_id: str
    sampling_rate_hz: float
    channel_names: tuple[str, ...]
    trials: tuple[Trial, ...] = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "channel_names", tuple(self.channel_names))
        object.__setattr__(self, "trials", tuple(self.trials))

    @property
    def n_channels(self) -> int:
        return len(self.channel_names)

    @property
    def at_reference_rate(self) -> bool:
        return self.sampling_rate_hz == REFERENCE_RATE_HZ

    def label_counts(self) -> dict[Label, int]:
        counts = {label: 0 for label in Label}
        for trial in self.trials:
            counts[trial.label] += 1
        return counts


@dataclass(frozen=True)
class Violation:
    location: str
    kind: str
    message: str

    def __str__(self):
        return f"{self.location}: {self.kind}: {self.message}"


def validate_recording(rec: Recording) -> list[Violation]:
    """Collect every invariant violation in ``rec``; an empty list means valid."""
    out: list[Violation] = []
    if not (rec.sampling_rate_hz > 0 and math.isfinite(rec.sampling_rate_hz)):
        out.append(Violation("recording", "sampling rate", f"invalid rate {rec.sampling_rate_hz}"))
        return out
    if not rec.at_reference_rate:
        logger.warning("recording %s sampled at %g Hz, not %g Hz",
                       rec.subject_id, rec.sampling_rate_hz, REFERENCE_RATE_HZ)
    if len(set(rec.channel_names)) != len(rec.channel_names):
        out.append(Violation("recording", "channel names", "channel names are not unique"))
    if rec.n_channels == 0:
        out.append(Violation("recording", "channel names", "no channels"))

    n_samples = segment_length(rec.sampling_rate_hz)
    seen_ids: set[str] = set()
    for ti, trial in enumerate(rec.trials):
        where = f"trial {ti} ({trial.trial_id})"
        if trial.trial_id in seen_ids:
            out.append(Violation(where, "duplicate trial", f"trial id {trial.trial_id!r} repeated"))
        seen_ids.add(trial.trial_id)
        n_seg = len(trial.segments)
        if not MIN_SEGMENTS <= n_seg <= MAX_SEGMENTS:
            out.append(Violation(where, "segment count",
                                 f"{n_seg} segments, expected {MIN_SEGMENTS}..{MAX_SEGMENTS}"))
        n_resp = sum(s.kind is SegmentKind.RESPONSE for s in trial.segments)
        if n_resp != 1:
            out.append(Violation(where, "response count", f"{n_resp} response segments, expected 1"))
        if n_seg and trial.segments[-1].kind is not SegmentKind.RESPONSE:
            out.append(Violation(where, "response position", "last segment is not the response"))
        for si, seg in enumerate(trial.segments):
            swhere = f"{where} segment {si}"
            samples = seg.samples
            if samples.ndim != 2:
                out.append(Violation(swhere, "shape", f"expected 2-D samples, got {samples.ndim}-D"))
                continue
            if samples.shape[0] != rec.n_channels:
                out.append(Violation(swhere, "channel mismatch",
                                     f"{samples.shape[0]} rows for {rec.n_channels} channels"))
            if samples.shape[1] != n_samples:
                out.append(Violation(swhere, "segment length",
                                     f"{samples.shape[1]} samples, expected {n_samples}"))
            if not np.all(np.isfinite(samples)):
                out.append(Violation(swhere, "non-finite", "segment contains NaN or infinite values"))
    return out


# --------------------------------------------------------------------------- io


def _format_matrix(samples: np.ndarray, precision: str) -> str:
    if precision == "float64":
        return json.dumps(np.asarray(samples, dtype=np.float64).tolist())
    rows = (",".join(map("{:.9g}".format, row.tolist())) for row in np.asarray(samples, np.float32))
    return "[" + ",".join("[" + r + "]" for r in rows) + "]"


def save_recording(rec: Recording, path, precision: str = "float64") -> Path:
    """Write ``rec`` as a bundle directory at ``path``.

    ``float64`` bundles round-trip bit-exactly; ``float32`` bundles store nine
    significant digits, which is exact for single precision.
    """
    if precision not in PRECISIONS:
        raise ValueError(f"precision must be one of {PRECISIONS}")
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    manifest = {
        "format": FORMAT_TAG,
        "version": FORMAT_VERSION,
        "subject_id": rec.subject_id,
        "sampling_rate_hz": rec.sampling_rate_hz,
        "channel_names": list(rec.channel_names),
        "precision": precision,
    }
    (path / MANIFEST_NAME).write_text(json.dumps(manifest, indent=2) + "\n")
    with open(path / TRIALS_NAME, "w") as fh:
        for trial in rec.trials:
            parts = []
            for seg in trial.segments:
                if not np.all(np.isfinite(seg.samples)):
                    raise ValueError(f"trial {trial.trial_id}: cannot save non-finite samples")
                parts.append('{"kind": %s, "samples": %s}'
                             % (json.dumps(seg.kind.value), _format_matrix(seg.samples, precision)))
            head = json.dumps({
                "trial_id": trial.trial_id,
                "question_id": trial.question_id,
                "label": trial.label.value,
            })
            fh.write(head[:-1] + ', "segments": [' + ", ".join(parts) + "]}\n")
    return path


def _read_manifest(path: Path) -> dict:
    try:
        manifest = json.loads((path / MANIFEST_NAME).read_text())
    except FileNotFoundError:
        raise RecordingFormatError(f"malformed manifest: {path / MANIFEST_NAME} not found") from None
    except json.JSONDecodeError as exc:
        raise RecordingFormatError(f"malformed manifest: {exc}") from None
    if not isinstance(manifest, dict):
        raise RecordingFormatError("malformed manifest: expected a JSON object")
    missing = [k for k in ("subject_id", "sampling_rate_hz", "channel_names") if k not in manifest]
    if missing:
        raise RecordingFormatError(f"malformed manifest: missing keys {missing}")
    if not isinstance(manifest["channel_names"], list) or not all(
            isinstance(c, str) for c in manifest["channel_names"]):
        raise RecordingFormatError("malformed manifest: channel_names must be a list of strings")
    rate = manifest["sampling_rate_hz"]
    if not isinstance(rate, (int, float)) or not rate > 0:
        raise RecordingFormatError(f"malformed manifest: invalid sampling_rate_hz {rate!r}")
    if manifest.get("precision", "float64") not in PRECISIONS:
        raise RecordingFormatError(f"malformed manifest: unknown precision {manifest['precision']!r}")
    return manifest


def _parse_trial(line: str, lineno: int, n_channels: int, dtype) -> Trial:
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as exc:
        raise RecordingFormatError(f"invalid JSON: {exc.msg}", lineno) from None
    try:
        label = Label(obj["label"])
    except KeyError:
        raise RecordingFormatError("missing key 'label'", lineno) from None
    except ValueError:
        raise RecordingFormatError(f"unknown label {obj['label']!r}", lineno) from None
    segments = []
    for si, raw in enumerate(obj.get("segments", [])):
        try:
            kind = SegmentKind(raw["kind"])
        except (KeyError, ValueError, TypeError):
            raise RecordingFormatError(f"segment {si}: invalid kind", lineno) from None
        try:
            samples = np.array(raw["samples"], dtype=dtype)
        except (KeyError, ValueError, TypeError):
            raise RecordingFormatError(f"segment {si}: samples are not a numeric matrix", lineno) from None
        if samples.ndim != 2 or samples.shape[0] != n_channels:
            raise RecordingFormatError(
                f"schema mismatch: segment {si} has shape {samples.shape}, "
                f"manifest declares {n_channels} channels", lineno)
        if not np.all(np.isfinite(samples)):
            raise RecordingFormatError(f"segment {si}: non-finite sample values", lineno)
        segments.append(Segment(kind, samples))
    try:
        return Trial(str(obj["trial_id"]), str(obj["question_id"]), tuple(segments), label)
    except KeyError as exc:
        raise RecordingFormatError(f"missing key {exc.args[0]!r}", lineno) from None


def load_recording(path) -> Recording:
    path = Path(path)
    manifest = _read_manifest(path)
    dtype = np.dtype(manifest.get("precision", "float64"))
    n_channels = len(manifest["channel_names"])
    trials = []
    try:
        fh = open(path / TRIALS_NAME)
    except FileNotFoundError:
        raise RecordingFormatError(f"{path / TRIALS_NAME} not found") from None
    with fh:
        for lineno, line in enumerate(fh, start=1):
            if line.strip():
                trials.append(_parse_trial(line, lineno, n_channels, dtype))
    return Recording(
        subject_id=str(manifest["subject_id"]),
        sampling_rate_hz=float(manifest["sampling_rate_hz"]),
        channel_names=tuple(manifest["channel_names"]),
        trials=tuple(trials),
    )


def find_bundles(root) -> list[Path]:
    """Bundle directories directly under ``root`` (or ``root`` itself), sorted."""
    root = Path(root)
    if (root / MANIFEST_NAME).exists():
        return [root]
    return sorted(p.parent for p in root.glob(f"*/{MANIFEST_NAME}"))


def iter_recordings(paths: Iterable) -> Iterable[Recording]:
    for p in paths:
        yield load_recording(p)


def recordings_equal(a: Recording, b: Recording) -> bool:
    return (
        a.subject_id == b.subject_id
        and a.sampling_rate_hz == b.sampling_rate_hz
        and a.channel_names == b.channel_names
        and a.trials == b.trials
    )


def default_channel_names(n: int = DEFAULT_N_CHANNELS) -> tuple[str, ...]:
    return tuple(f"E{i + 1:02d}" for i in range(n))


def labels_array(trials: Sequence[Trial]) -> np.ndarray:
    return np.array([t.label.code for t in trials], dtype=np.int64)
