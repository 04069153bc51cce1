"""Band-pass filtering, rational resampling and label rasterization."""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np
from scipy import signal

from .errors import ConfigError
from .ingest import GAIT

DEFAULT_LOW_HZ = 0.2
DEFAULT_HIGH_HZ = 15.0
DEFAULT_ORDER = 4


@dataclass(frozen=True)
class FilterSpec:
    """Butterworth band-pass as a cascade of biquads.

    ``sos`` rows are ``(b0, b1, b2, 1, a1, a2)``. ``order`` is the total
    filter order, split evenly between the two band edges.
    """

    sos: np.ndarray
    low_hz: float
    high_hz: float
    fs: float
    order: int

    @property
    def sections(self):
        return [(r[0], r[1], r[2], r[4], r[5]) for r in self.sos]

    def poles(self):
        return np.concatenate([np.roots([1.0, r[4], r[5]]) for r in self.sos])

    def is_stable(self):
        return bool(np.all(np.abs(self.poles()) < 1.0))

    @property
    def transient_len(self):
        # slowest pole dominates the settling time
        r = np.max(np.abs(self.poles()))
        return int(np.ceil(np.log(1e-3) / np.log(r))) if r > 0 else 1


def design_bandpass(low_hz=DEFAULT_LOW_HZ, high_hz=DEFAULT_HIGH_HZ, fs=100.0, order=DEFAULT_ORDER):
    if not fs > 0:
        raise ConfigError(f"fs must be positive, got {fs}")
    if not 0 < low_hz < high_hz < fs / 2:
        raise ConfigError(f"need 0 < low ({low_hz}) < high ({high_hz}) < fs/2 ({fs / 2})")
    if order < 2 or order % 2:
        raise ConfigError(f"order must be an even integer >= 2, got {order}")
    sos = signal.butter(order // 2, [low_hz, high_hz], btype="bandpass", fs=fs, output="sos")
    spec = FilterSpec(np.asarray(sos, dtype=np.float64), float(low_hz), float(high_hz), float(fs), int(order))
    if not spec.is_stable():
        raise ConfigError("designed filter is unstable; cutoffs too close to 0 or Nyquist for this order")
    return spec


def filtfilt(x, f):
    """Zero-phase application along axis 0 (samples).

    Short inputs are handled by odd extension of whatever length is available.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.size == 0 or len(x) == 0:
        raise ConfigError("cannot filter an empty signal")
    padlen = min(3 * f.transient_len, len(x) - 1)
    if padlen < 1:
        return x.copy()
    return signal.sosfiltfilt(f.sos, x, axis=0, padtype="odd", padlen=padlen)


def rational_ratio(fs_in, fs_out, max_den=1000):
    r = Fraction(fs_out / fs_in).limit_denominator(max_den)
    return r.numerator, r.denominator


def resample(x, fs_in, fs_out):
    """Polyphase resampling; output length is ``round(n * fs_out / fs_in)``."""
    if not (fs_in > 0 and fs_out > 0):
        raise ConfigError("sampling rates must be positive")
    x = np.asarray(x, dtype=np.float64)
    n_out = int(round(len(x) * fs_out / fs_in))
    if fs_in == fs_out:
        return x.copy()
    up, down = rational_ratio(fs_in, fs_out)
    # the per-phase DC gains of the polyphase filter differ by ~1e-5; removing
    # the mean first keeps constant signals exactly constant
    mean = x.mean(axis=0, keepdims=True)
    y = signal.resample_poly(x - mean, up, down, axis=0, padtype="line") + mean
    if len(y) >= n_out:
        return y[:n_out]
    fill = np.repeat(y[-1:], n_out - len(y), axis=0)
    return np.concatenate([y, fill], axis=0)


@dataclass
class LabelTimeline:
    fs: float
    gait: np.ndarray    # uint8 {0,1}
    chorea: np.ndarray  # int8 0..4, -1 where unranked/uncovered
    valid: np.ndarray   # uint8 {0,1}

    def __post_init__(self):
        if not len(self.gait) == len(self.chorea) == len(self.valid):
            raise ConfigError("label arrays differ in length")

    def __len__(self):
        return len(self.gait)


def rasterize_labels(ann, fs, n_samples, start_epoch=0.0, ann_start_epoch=None):
    """Per-sample labels on the grid ``t_i = start_epoch + i / fs``.

    Intervals are half-open ``[start, end)`` in seconds relative to
    ``ann_start_epoch`` (defaults to ``start_epoch``). Samples not covered by
    any interval get ``valid=0``.
    """
    if not fs > 0:
        raise ConfigError("fs must be positive")
    if ann_start_epoch is None:
        ann_start_epoch = start_epoch
    offset = start_epoch - ann_start_epoch
    gait = np.zeros(n_samples, dtype=np.uint8)
    chorea = np.full(n_samples, -1, dtype=np.int8)
    valid = np.zeros(n_samples, dtype=np.uint8)
    # first index with offset + i/fs >= t, computed on the integer grid
    def first_at(t):
        x = (t - offset) * fs
        r = round(x)
        i = int(r) if abs(x - r) < 1e-6 else int(np.ceil(x))
        return min(max(i, 0), n_samples)

    for iv in ann.intervals:
        a, b = first_at(iv.start_s), first_at(iv.end_s)
        if b <= a:
            continue
        gait[a:b] = 1 if iv.activity == GAIT else 0
        chorea[a:b] = iv.chorea
        valid[a:b] = 1 if iv.valid else 0
    return LabelTimeline(float(fs), gait, chorea, valid)


def preprocess_recording(rec, fs_out=30.0, low_hz=DEFAULT_LOW_HZ, high_hz=DEFAULT_HIGH_HZ, order=DEFAULT_ORDER):
    """Band-pass then resample a recording's samples to ``fs_out``."""
    f = design_bandpass(low_hz, min(high_hz, 0.45 * rec.fs), rec.fs, order)
    return resample(filtfilt(rec.samples, f), rec.fs, fs_out)
