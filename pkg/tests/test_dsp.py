import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from jnetgait.dsp import design_bandpass, filtfilt, rasterize_labels, resample
from jnetgait.errors import ConfigError
from jnetgait.ingest import AnnotationTrack, make_interval


@pytest.fixture(scope="module")
def bp():
    return design_bandpass(0.2, 15.0, 100.0, 4)


def dft_amplitude(y, fs, freq):
    """Amplitude of the sinusoid at ``freq`` from the discrete Fourier magnitude."""
    n = len(y)
    t = np.arange(n) / fs
    c = np.sum(y * np.exp(-2j * np.pi * freq * t))
    return 2 * abs(c) / n


def test_filter_is_stable_biquad_cascade(bp):
    assert bp.sos.shape == (2, 6)
    assert bp.is_stable()
    assert len(bp.sections) == 2


@pytest.mark.parametrize("args", [(15, 0.2, 100, 4), (0.2, 50, 100, 4), (0, 15, 100, 4), (0.2, 15, 100, 3)])
def test_bad_cutoffs(args):
    with pytest.raises(ConfigError):
        design_bandpass(*args)


def test_dc_rejected(bp):
    y = filtfilt(np.ones(3000), bp)
    assert np.abs(y[500:-500]).max() < 0.01
    assert np.abs(y).max() < 0.01


def _steady_single_pass(bp, freq, fs=100.0, n=6000):
    from scipy import signal

    t = np.arange(n) / fs
    y = signal.sosfilt(bp.sos, np.sin(2 * np.pi * freq * t))
    tail = y[n // 2:]
    return dft_amplitude(tail, fs, freq)


def test_passband_gain(bp):
    assert 0.9 <= _steady_single_pass(bp, 5.0) <= 1.1
    t = np.arange(6000) / 100
    zp = filtfilt(np.sin(2 * np.pi * 5 * t), bp)
    assert 0.9 <= dft_amplitude(zp[1000:-1000], 100, 5.0) <= 1.1


def test_stopband_gain(bp):
    assert _steady_single_pass(bp, 25.0) < 0.3
    t = np.arange(6000) / 100
    assert dft_amplitude(filtfilt(np.sin(2 * np.pi * 25 * t), bp)[1000:-1000], 100, 25.0) < 0.3


def test_zero_in_zero_out(bp):
    assert not filtfilt(np.zeros(500), bp).any()


def test_time_reversal_symmetry(bp):
    x = np.random.default_rng(0).normal(size=2000)
    # odd extension at the two ends is mirrored, so only rounding-level edge differences remain
    np.testing.assert_allclose(filtfilt(x[::-1], bp), filtfilt(x, bp)[::-1], rtol=0, atol=1e-6)


def test_zero_phase_lag(bp):
    t = np.arange(4000) / 100
    x = np.sin(2 * np.pi * 5 * t)
    y = filtfilt(x, bp)
    core = slice(1000, 3000)
    lags = np.arange(-9, 10)  # under half the 20-sample period
    xc = [np.dot(x[core], np.roll(y, -k)[core]) for k in lags]
    assert lags[int(np.argmax(xc))] == 0


def test_linearity(bp):
    rng = np.random.default_rng(1)
    x, y = rng.normal(size=(2, 1500))
    a, b = 2.5, -0.7
    lhs = filtfilt(a * x + b * y, bp)
    rhs = a * filtfilt(x, bp) + b * filtfilt(y, bp)
    assert np.max(np.abs(lhs - rhs)) <= 1e-9 * np.max(np.abs(rhs))


def test_filter_multichannel_and_short(bp):
    x = np.random.default_rng(2).normal(size=(50, 3))
    y = filtfilt(x, bp)
    assert y.shape == x.shape
    with pytest.raises(ConfigError):
        filtfilt(np.zeros(0), bp)


def test_resample_length_ten_seconds():
    assert len(resample(np.zeros((1000, 3)), 100, 30)) == 300
    assert len(resample(np.zeros(250), 25, 30)) == 300


@given(st.integers(1, 3000), st.sampled_from([(100, 30), (25, 30), (30, 100), (50, 30)]))
@settings(max_examples=40, deadline=None)
def test_resample_length_rule(n, rates):
    fi, fo = rates
    assert len(resample(np.ones(n), fi, fo)) == round(n * fo / fi)


def test_resample_constant():
    c = resample(np.full((1000, 3), -0.37), 100, 30)
    np.testing.assert_allclose(c, -0.37, atol=1e-12)


def test_resample_sine_matches_analytic_grid():
    x = np.sin(2 * np.pi * 2 * np.arange(1000) / 100)
    y = resample(x, 100, 30)
    ref = np.sin(2 * np.pi * 2 * np.arange(300) / 30)
    assert np.sqrt(np.mean((y - ref) ** 2)) < 0.02


def test_resample_round_trip_bandlimited():
    from scipy import signal

    x = np.random.default_rng(4).normal(size=4000)
    x = signal.sosfiltfilt(signal.butter(8, 5, fs=100, output="sos"), x)
    back = resample(resample(x, 100, 30), 30, 100)
    assert np.sqrt(np.mean((back - x) ** 2)) / np.sqrt(np.mean(x ** 2)) < 0.03


def track(*rows):
    return AnnotationTrack("s", [make_interval(*r) for r in rows])


def test_rasterize_full_gait():
    tl = rasterize_labels(track((0, 10, "gait", 0)), 30, 300)
    assert tl.gait.all() and tl.valid.all()
    assert len(tl.gait) == len(tl.chorea) == len(tl.valid) == 300


def test_rasterize_unranked_invalid():
    tl = rasterize_labels(track((0, 5, "gait", 2), (5, 10, "nongait", -1)), 30, 300)
    assert tl.valid[:150].all() and not tl.valid[150:].any()
    assert (tl.chorea[:150] == 2).all() and (tl.chorea[150:] == -1).all()


def test_rasterize_half_open_boundary():
    tl = rasterize_labels(track((0, 5, "gait", 0), (5, 10, "nongait", 1)), 30, 300)
    # t = 5.0 s is sample 150 exactly and belongs to the later interval
    assert tl.gait[149] == 1 and tl.gait[150] == 0
    assert tl.chorea[150] == 1


def test_rasterize_uncovered_samples_invalid():
    tl = rasterize_labels(track((2, 4, "gait", 0)), 10, 100)
    assert tl.valid.sum() == 20
    assert not tl.valid[:20].any() and not tl.valid[40:].any()


def test_rasterize_with_epoch_offset():
    tl = rasterize_labels(track((0, 5, "gait", 0)), 10, 100, start_epoch=1002.0, ann_start_epoch=1000.0)
    assert tl.gait[:30].all() and not tl.gait[30:].any()
