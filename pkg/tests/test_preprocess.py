import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from ineeg.data_model import Label, Segment, SegmentKind, Trial
from ineeg.preprocess import (
    FilterCoefficients,
    apply_zero_phase,
    average_rereference,
    default_filter,
    design_band_filter,
    design_butterworth_bandpass,
    preprocess_continuous,
    preprocess_trial,
)

RATE = 500.0


def fft_amplitude(x, freq, rate=RATE):
    """Amplitude of the ``freq`` component of ``x`` (exact bin expected)."""
    spec = np.fft.rfft(x)
    k = int(round(freq * len(x) / rate))
    return 2 * np.abs(spec[k]) / len(x)


def direct_butterworth_gain(f, low, high, order, rate):
    """Single-pass magnitude of the HP * LP cascade via the bilinear transform, written out by hand."""
    def warp(fc):
        return 2 * rate * np.tan(np.pi * fc / rate)
    w = 2 * rate * np.tan(np.pi * f / rate)  # analog frequency that maps to f
    lp = 1 / np.sqrt(1 + (w / warp(high)) ** (2 * order))
    hp = 1 / np.sqrt(1 + (warp(low) / w) ** (2 * order))
    return lp * hp


def test_design_is_stable_and_normalised():
    f = design_butterworth_bandpass(0.5, 50, 4, RATE)
    assert isinstance(f, FilterCoefficients)
    assert f.is_stable()
    assert np.all(np.abs(f.poles()) < 1)
    assert f.denominator[0] == pytest.approx(1.0)
    assert np.allclose(f.sos[:, 3], 1.0)
    assert f.sos.shape == (4, 6)
    assert "0.5-50.0 Hz" in f.describe()


@pytest.mark.parametrize("freq", [0.5, 2.0, 10.0, 30.0, 50.0, 60.0, 100.0])
def test_frequency_response_matches_analog_prototype(freq):
    from scipy.signal import sosfreqz
    f = design_butterworth_bandpass(0.5, 50, 4, RATE)
    _, h = sosfreqz(f.sos, worN=[freq], fs=RATE)
    assert abs(h[0]) == pytest.approx(direct_butterworth_gain(freq, 0.5, 50, 4, RATE), rel=1e-6)


def test_cutoffs_are_half_power_points():
    from scipy.signal import sosfreqz
    f = design_butterworth_bandpass(0.5, 50, 4, RATE)
    _, h = sosfreqz(f.sos, worN=[0.5, 50.0], fs=RATE)
    np.testing.assert_allclose(20 * np.log10(np.abs(h)), -3.01, atol=0.05)


@pytest.mark.parametrize("args", [(50, 0.5, 4, 500), (0.5, 250, 4, 500), (0, 50, 4, 500), (0.5, 50, 0, 500),
                                  (0.5, 50, 2.5, 500), (0.5, 50, 4, -1)])
def test_invalid_designs_rejected(args):
    with pytest.raises(ValueError):
        design_butterworth_bandpass(*args)


def test_ten_hz_gain_inside_tolerance():
    t = np.arange(int(10 * RATE)) / RATE
    x = np.sin(2 * np.pi * 10 * t)
    y = apply_zero_phase(default_filter(RATE), x)
    assert 0.95 <= fft_amplitude(y, 10) / fft_amplitude(x, 10) <= 1.05


def test_sixty_hz_single_pass_gain_is_the_order_four_butterworth_value():
    # An order-4 low-pass edge at 50 Hz only reaches about -7.7 dB at 60 Hz;
    # the measured steady-state gain must equal the closed-form value.
    from scipy.signal import sosfilt
    t = np.arange(int(10 * RATE)) / RATE
    x = np.sin(2 * np.pi * 60 * t)
    y = sosfilt(default_filter(RATE).sos, x)[int(2 * RATE):]  # drop the transient
    gain = np.sqrt(2) * y.std()
    expected = direct_butterworth_gain(60.0, 0.5, 50, 4, RATE)
    assert gain == pytest.approx(expected, rel=1e-3)
    assert 20 * np.log10(expected) == pytest.approx(-7.68, abs=0.01)


def test_sixty_hz_zero_phase_gain_is_squared():
    t = np.arange(int(10 * RATE)) / RATE
    x = np.sin(2 * np.pi * 60 * t)
    y = apply_zero_phase(default_filter(RATE), x)
    expected = direct_butterworth_gain(60.0, 0.5, 50, 4, RATE) ** 2
    assert fft_amplitude(y, 60) == pytest.approx(expected, rel=3e-3)  # edges of the finite record


def test_constant_signal_is_removed():
    y = apply_zero_phase(default_filter(RATE), np.full(2000, 5.0))
    settled = y[200:-200]
    assert np.max(np.abs(settled)) < 1e-3 * 5


def test_ten_hz_sine_has_zero_lag():
    t = np.arange(int(10 * RATE)) / RATE
    x = np.sin(2 * np.pi * 10 * t)
    y = apply_zero_phase(default_filter(RATE), x)
    assert np.corrcoef(x, y)[0, 1] > 0.99
    lags = np.arange(-20, 21)
    core = slice(100, -100)
    xc = [np.dot(x[core], np.roll(y, -lag)[core]) for lag in lags]
    assert lags[int(np.argmax(xc))] == 0


def test_zero_signal_stays_zero():
    assert np.all(apply_zero_phase(default_filter(RATE), np.zeros(1000)) == 0)


def test_output_length_and_short_signal_error():
    f = default_filter(RATE)
    assert apply_zero_phase(f, np.ones(f.padlen + 1)).shape == (f.padlen + 1,)
    with pytest.raises(ValueError, match="too short"):
        apply_zero_phase(f, np.ones(f.padlen))


def test_padlen_follows_expanded_transfer_function():
    f = default_filter(RATE)
    assert f.padlen == 3 * (max(len(f.numerator), len(f.denominator)) - 1)


def test_linearity(rng):
    f = default_filter(RATE)
    x, y = rng.normal(size=(2, 3000))
    lhs = apply_zero_phase(f, 2.5 * x - 0.7 * y)
    rhs = 2.5 * apply_zero_phase(f, x) - 0.7 * apply_zero_phase(f, y)
    np.testing.assert_allclose(lhs, rhs, rtol=1e-9, atol=1e-9 * np.abs(rhs).max())


def _impulse(filt, seconds):
    from scipy.signal import sosfilt
    imp = np.zeros(int(seconds * RATE))
    imp[0] = 1.0
    return sosfilt(filt.sos, imp)


@pytest.mark.parametrize("band", [(4, 8), (8, 12), (12, 30), (30, 40)])
def test_impulse_tail_below_1e12_after_ten_seconds(band):
    h = _impulse(design_band_filter(*band, 4, RATE), 12)
    assert np.all(np.abs(h[int(10 * RATE):]) < 1e-12)


@pytest.mark.parametrize("filt", [default_filter(RATE), design_band_filter(1, 4, 4, RATE)],
                         ids=["preprocess", "delta"])
def test_low_corner_impulse_tail_decays_within_twenty_seconds(filt):
    # poles near 0.5-1 Hz decay with a time constant near one second, so the
    # 1e-12 level is reached between 10 and 20 seconds
    h = _impulse(filt, 22)
    assert np.all(np.abs(h[int(20 * RATE):]) < 1e-12)
    assert np.isfinite(np.sum(h * h))


def test_band_filter_is_true_bandpass():
    f = design_band_filter(8, 12, 4, RATE)
    assert f.is_stable()
    assert f.sos.shape[0] == 4  # order-4 prototype doubles to 8 poles


def test_rereference_example():
    np.testing.assert_array_equal(average_rereference([[1, 1], [3, 3]]), [[-1, -1], [1, 1]])


def test_rereference_rejects_single_channel():
    with pytest.raises(ValueError, match="at least 2"):
        average_rereference(np.ones((1, 10)))
    with pytest.raises(ValueError):
        average_rereference(np.ones(10))


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(2, 8), st.integers(1, 20)),
              elements=st.floats(-1e3, 1e3, allow_nan=False)))
def test_rereference_is_a_projection(x):
    once = average_rereference(x)
    scale = max(1.0, np.abs(x).max())
    assert np.all(np.abs(once.mean(axis=0)) < 1e-12 * scale)
    np.testing.assert_allclose(average_rereference(once), once, atol=1e-12 * scale)
    np.testing.assert_allclose(once, x - x.mean(axis=0), atol=1e-12 * scale)


def test_zero_mean_matrix_unchanged(rng):
    x = rng.normal(size=(6, 50))
    x -= x.mean(axis=0)
    np.testing.assert_allclose(average_rereference(x), x, atol=1e-15)


def _trial(x, seg_len=400):
    n_seg = x.shape[1] // seg_len
    segs = tuple(Segment(SegmentKind.RESPONSE if s == n_seg - 1 else SegmentKind.WORD,
                         x[:, s * seg_len:(s + 1) * seg_len]) for s in range(n_seg))
    return Trial("T", "Q", segs, Label.NEED_TO_SEARCH)


def test_preprocess_trial_zero_in_zero_out():
    out = preprocess_trial(_trial(np.zeros((4, 1600))), default_filter(RATE))
    assert all(np.all(s.samples == 0) for s in out.segments)


def test_preprocess_trial_reslices_filtered_continuous_signal(rng):
    x = rng.normal(size=(5, 2000))
    out = preprocess_trial(_trial(x), default_filter(RATE))
    expected = preprocess_continuous(x, default_filter(RATE))
    np.testing.assert_array_equal(out.continuous(), expected)
    assert [s.kind for s in out.segments] == [s.kind for s in _trial(x).segments]


def test_preprocessed_trial_is_zero_mean_and_band_limited(rng):
    t = np.arange(3200) / RATE
    x = 3.0 + np.zeros((6, 3200))
    x[0] += 10 * np.sin(2 * np.pi * 10 * t) + 10 * np.sin(2 * np.pi * 150 * t)
    y = preprocess_trial(_trial(x), default_filter(RATE)).continuous()
    assert np.all(np.abs(y.mean(axis=0)) < 1e-9)
    # channel 0 keeps 5/6 of its own 10 Hz component and loses the 150 Hz one
    assert fft_amplitude(y[0], 10) == pytest.approx(10 * 5 / 6, rel=0.02)
    assert fft_amplitude(y[0], 150) < 1e-3 * 10


def test_filter_and_rereference_commute(rng):
    x = rng.normal(size=(8, 2400)) * 20
    f = default_filter(RATE)
    a = average_rereference(apply_zero_phase(f, x))
    b = apply_zero_phase(f, average_rereference(x))
    np.testing.assert_allclose(a, b, rtol=1e-6, atol=1e-6 * np.abs(a).max())
