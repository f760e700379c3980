"""Synthetic EEG cohorts with a planted, tunable class effect.

Each trial is generated as one continuous multichannel stream: 1/f
background noise plus one sinusoid per band at the band centre, whose
amplitude is redrawn for every 800 ms segment. In NeedToSearch trials the
amplitudes of the affected segments are multiplied by the per-band effect.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Iterator

import numpy as np

from ._seeding import derive_rng
from .data_model import (
    CANONICAL_BANDS,
    MAX_SEGMENTS,
    MIN_SEGMENTS,
    Label,
    Recording,
    Segment,
    SegmentKind,
    Trial,
    band_by_name,
    default_channel_names,
    segment_length,
)

DEFAULT_BAND_AMPLITUDES_UV = {"Delta": 6.0, "Theta": 4.0, "Alpha": 2.0, "Beta": 2.0, "Gamma": 1.0}
EFFECT_SEGMENTS = ("response", "response+last_word")


@dataclass(frozen=True)
class SynthProfile:
    n_subjects: int = 14
    n_trials: int = 120
    channels: int = 40
    rate: float = 500.0
    word_count_range: tuple[int, int] = (3, 15)
    mean_word_count: float = 6.0
    effect: dict = field(default_factory=lambda: {"Alpha": 1.5})
    effect_segments: str = "response"
    need_fraction: float = 0.15
    noise_exponent: float = 1.0
    noise_uv: float = 10.0
    band_amplitudes_uv: dict = field(default_factory=lambda: dict(DEFAULT_BAND_AMPLITUDES_UV))
    amplitude_jitter: float = 0.5
    subject_jitter: bool = True
    subject_factor_range: tuple[float, float] = (0.5, 1.5)
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "word_count_range", tuple(self.word_count_range))
        object.__setattr__(self, "subject_factor_range", tuple(self.subject_factor_range))
        if self.n_subjects < 1:
            raise ValueError("n_subjects must be >= 1")
        if self.n_trials < 2:
            raise ValueError("n_trials must be >= 2")
        if self.channels < 2:
            raise ValueError("at least 2 channels are needed for average re-referencing")
        if not self.rate > 2 * max(b.high_hz for b in CANONICAL_BANDS):
            raise ValueError(f"rate {self.rate} Hz too low for the canonical bands")
        lo, hi = self.word_count_range
        if not (MIN_SEGMENTS - 1 <= lo <= hi <= MAX_SEGMENTS - 1):
            raise ValueError(f"word_count_range {self.word_count_range} must keep segment counts "
                             f"within [{MIN_SEGMENTS}, {MAX_SEGMENTS}]")
        if not lo <= self.mean_word_count <= hi:
            raise ValueError("mean_word_count must lie inside word_count_range")
        if not 0.0 < self.need_fraction < 1.0:
            raise ValueError(f"need_fraction must lie in (0, 1), got {self.need_fraction}")
        for name, m in self.effect.items():
            band_by_name(name)
            if not m > 0:
                raise ValueError(f"effect multiplier for {name} must be positive, got {m}")
        for name, a in self.band_amplitudes_uv.items():
            band_by_name(name)
            if a < 0:
                raise ValueError(f"band amplitude for {name} must be non-negative")
        if self.effect_segments not in EFFECT_SEGMENTS:
            raise ValueError(f"effect_segments must be one of {EFFECT_SEGMENTS}")
        if not 0.0 <= self.amplitude_jitter < 1.0:
            raise ValueError("amplitude_jitter must lie in [0, 1)")
        flo, fhi = self.subject_factor_range
        if not 0.0 <= flo <= fhi:
            raise ValueError("subject_factor_range must be an ordered non-negative pair")
        if self.noise_uv < 0:
            raise ValueError("noise_uv must be non-negative")

    @classmethod
    def from_dict(cls, d: dict) -> "SynthProfile":
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown synth profile keys {sorted(unknown)}")
        return cls(**d)

    def to_dict(self) -> dict:
        return asdict(self)

    def null(self) -> "SynthProfile":
        """Same profile with every effect multiplier set to 1."""
        return SynthProfile.from_dict({**self.to_dict(), "effect": {}})


def pink_noise(n_channels: int, n_samples: int, rate: float, exponent: float,
               rng: np.random.Generator) -> np.ndarray:
    """Noise with power spectral density proportional to ``1 / f**exponent``.

    Random complex spectrum shaped in the frequency domain, DC removed,
    normalised to unit standard deviation per channel.
    """
    freqs = np.fft.rfftfreq(n_samples, d=1.0 / rate)
    spec = rng.standard_normal((n_channels, freqs.size)) + 1j * rng.standard_normal((n_channels, freqs.size))
    shape = np.zeros_like(freqs)
    shape[1:] = freqs[1:] ** (-exponent / 2.0)
    x = np.fft.irfft(spec * shape, n=n_samples, axis=-1)
    return x / x.std(axis=-1, keepdims=True)


def subject_factor(profile: SynthProfile, subject_index: int) -> float:
    if not profile.subject_jitter:
        return 1.0
    lo, hi = profile.subject_factor_range
    return float(derive_rng(profile.seed, "subject-factor", subject_index).uniform(lo, hi))


def question_word_counts(profile: SynthProfile) -> np.ndarray:
    """Word count of every question; shared by all subjects of a cohort."""
    lo, hi = profile.word_count_range
    rng = derive_rng(profile.seed, "questions")
    if hi == lo:
        return np.full(profile.n_trials, lo)
    p = (profile.mean_word_count - lo) / (hi - lo)
    return lo + rng.binomial(hi - lo, p, profile.n_trials)


def _trial_signal(n_words: int, need: bool, profile: SynthProfile, multipliers: dict,
                  rng: np.random.Generator) -> np.ndarray:
    seg_len = segment_length(profile.rate)
    n_seg = n_words + 1
    n_samples = n_seg * seg_len
    C = profile.channels
    x = profile.noise_uv * pink_noise(C, n_samples, profile.rate, profile.noise_exponent, rng)
    t = np.arange(n_samples) / profile.rate
    affected = [n_seg - 1] if profile.effect_segments == "response" else [n_seg - 2, n_seg - 1]
    j = profile.amplitude_jitter
    for band in CANONICAL_BANDS:
        base = profile.band_amplitudes_uv.get(band.name, 0.0)
        phase = rng.uniform(0.0, 2 * np.pi, (C, 1))
        amps = base * rng.uniform(1.0 - j, 1.0 + j, (C, n_seg))
        if need:
            amps[:, affected] *= multipliers.get(band.name, 1.0)
        envelope = np.repeat(amps, seg_len, axis=1)
        x += envelope * np.sin(2 * np.pi * band.center_hz * t + phase)
    return x


def generate_recording(profile: SynthProfile, subject_index: int) -> Recording:
    """One subject's recording; deterministic in ``(profile, subject_index)``."""
    if not 0 <= subject_index:
        raise ValueError("subject_index must be non-negative")
    rng = derive_rng(profile.seed, "subject", subject_index)
    factor = subject_factor(profile, subject_index)
    multipliers = {name: 1.0 + (m - 1.0) * factor for name, m in profile.effect.items()}

    n = profile.n_trials
    n_need = int(min(max(round(profile.need_fraction * n), 1), n - 1))
    need = np.zeros(n, dtype=bool)
    need[rng.permutation(n)[:n_need]] = True
    question_order = rng.permutation(n)
    words = question_word_counts(profile)

    seg_len = segment_length(profile.rate)
    subject_id = f"S{subject_index + 1:02d}"
    trials = []
    for i in range(n):
        q = int(question_order[i])
        x = _trial_signal(int(words[q]), bool(need[i]), profile, multipliers, rng)
        n_seg = x.shape[1] // seg_len
        segments = tuple(
            Segment(SegmentKind.RESPONSE if s == n_seg - 1 else SegmentKind.WORD,
                    x[:, s * seg_len:(s + 1) * seg_len])
            for s in range(n_seg)
        )
        label = Label.NEED_TO_SEARCH if need[i] else Label.NO_NEED_TO_SEARCH
        trials.append(Trial(f"{subject_id}-T{i + 1:03d}", f"Q{q + 1:03d}", segments, label))
    return Recording(subject_id, float(profile.rate), default_channel_names(profile.channels), tuple(trials))


def iter_cohort(profile: SynthProfile) -> Iterator[Recording]:
    for i in range(profile.n_subjects):
        yield generate_recording(profile, i)


def generate_cohort(profile: SynthProfile) -> list[Recording]:
    return list(iter_cohort(profile))
