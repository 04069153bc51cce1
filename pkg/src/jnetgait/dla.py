"""Daily-living walking analytics.

Stream inference produces a per-sample gait probability at 30 Hz. Walking
time is the count of worn samples with probability at or above a threshold,
binned by local hour and calendar day.
"""

from __future__ import annotations

import csv
import datetime as dt
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import stats

from . import FS_MODEL, WINDOW_SAMPLES
from .dsp import preprocess_recording
from .errors import ConfigError, FormatError
from .net.train import predict_segments, predict_windows
from .windowing import GATE_STD_G, EdgeStrategy, make_windows, parse_strategy, stack_context

SECONDS_PER_DAY = 86400
MIN_WEAR_FRACTION = 0.5


@dataclass
class GaitTimeline:
    subject_id: str
    fs: float
    start_epoch: float
    gait_prob: np.ndarray
    wear_valid: np.ndarray
    utc_offset_s: float = 0.0

    def __post_init__(self):
        self.gait_prob = np.asarray(self.gait_prob, dtype=np.float64)
        self.wear_valid = np.asarray(self.wear_valid).astype(bool)
        if len(self.gait_prob) != len(self.wear_valid):
            raise ConfigError("gait_prob and wear_valid differ in length")
        if len(self.gait_prob) and not ((self.gait_prob >= 0) & (self.gait_prob <= 1)).all():
            raise ConfigError("gait probabilities must lie in [0, 1]")

    def __len__(self):
        return len(self.gait_prob)

    def local_seconds(self):
        """Seconds since the local-time epoch, sample by sample."""
        return self.start_epoch + self.utc_offset_s + np.arange(len(self)) / self.fs


def stitch(n_samples, starts, probs, core=(0, WINDOW_SAMPLES)):
    """Average overlapping per-window predictions onto the sample grid.

    Returns ``(prob, covered)``; samples outside every window's core stay at
    probability 0 and ``covered=False``.
    """
    lo, hi = core
    acc = np.zeros(n_samples)
    cnt = np.zeros(n_samples)
    for s, p in zip(starts, probs):
        a, b = int(s) + lo, min(int(s) + hi, n_samples)
        acc[a:b] += p[lo:lo + (b - a)]
        cnt[a:b] += 1
    covered = cnt > 0
    prob = np.zeros(n_samples)
    prob[covered] = acc[covered] / cnt[covered]
    return prob, covered


def window_probs(model, ws):
    """Per-window, per-sample gait probabilities (N, 300) for every window in ``ws``.

    Windows that fail the activity gate are assigned probability 0.
    """
    n = len(ws)
    probs = np.zeros((n, WINDOW_SAMPLES))
    if n == 0:
        return probs
    if model.is_segmentation:
        if ws.strategy == EdgeStrategy.TRIPLE:
            x, tri = stack_context(ws, only_active=False)
            rows = tri[:, 1]
        else:
            x, rows = ws.data[:, None], np.arange(n)
        probs[rows] = predict_segments(model, x)
    else:
        probs[:] = predict_windows(model, ws.data)[:, None]
    probs[~ws.active] = 0.0
    return probs


def infer_stream(model, rec, strategy=EdgeStrategy.TRIPLE, gate_threshold=GATE_STD_G, utc_offset_s=0.0,
                 preprocess=None):
    """Gait probability timeline at 30 Hz for one recording.

    Segmentation models use the given edge strategy; classification models
    score non-overlapping windows and broadcast each window's probability to
    its samples.
    """
    strategy = parse_strategy(strategy)
    if not model.is_segmentation:
        strategy = EdgeStrategy.PLAIN
    x30 = preprocess_recording(rec, FS_MODEL, **(preprocess or {}))
    ws = make_windows(x30, None, strategy, session_id=rec.session_id, gate_threshold=gate_threshold,
                      drop_gated=False)
    if len(ws) == 0:
        return GaitTimeline(rec.session_id, FS_MODEL, rec.start_epoch, np.zeros(0), np.zeros(0, bool), utc_offset_s)
    probs = window_probs(model, ws)
    prob, covered = stitch(len(x30), ws.start_index, probs, ws.core)
    return GaitTimeline(rec.session_id, FS_MODEL, rec.start_epoch, prob, covered, utc_offset_s)


def save_timeline(tl, path):
    """``.npz`` with ``gait_prob``, ``wear_valid`` and the scalar timing fields."""
    np.savez(path, subject_id=np.array(tl.subject_id), fs=tl.fs, start_epoch=tl.start_epoch,
             gait_prob=tl.gait_prob, wear_valid=tl.wear_valid, utc_offset_s=tl.utc_offset_s)


def load_timeline(path):
    try:
        with np.load(path) as z:
            return GaitTimeline(str(z["subject_id"]), float(z["fs"]), float(z["start_epoch"]), z["gait_prob"],
                                z["wear_valid"], float(z["utc_offset_s"]))
    except (KeyError, ValueError, OSError) as exc:
        raise FormatError(f"not a gait timeline: {exc}", path=path) from None


# ---------------------------------------------------------------------------
# aggregates
# ---------------------------------------------------------------------------

def _day_hour(tl):
    sec = np.floor(tl.local_seconds()).astype(np.int64)
    day = sec // SECONDS_PER_DAY
    hour = (sec % SECONDS_PER_DAY) // 3600
    return day, hour


def day_label(day_index):
    return (dt.date(1970, 1, 1) + dt.timedelta(days=int(day_index))).isoformat()


def _hourly_counts(tl, threshold):
    day, hour = _day_hour(tl)
    walking = (tl.gait_prob >= threshold) & tl.wear_valid
    d0 = int(day.min())
    k = day - d0
    n_days = int(k.max()) + 1
    walk = np.bincount(k * 24 + hour, weights=walking, minlength=n_days * 24).reshape(n_days, 24)
    worn = np.bincount(k, weights=tl.wear_valid, minlength=n_days)
    present = np.bincount(k, minlength=n_days) > 0
    return d0, walk, worn, present


def hourly_walking_minutes(tl, threshold=0.5):
    """``{date: 24-vector of walking minutes}`` for each calendar day touched."""
    if len(tl) == 0:
        raise ConfigError("timeline is empty")
    d0, walk, _, present = _hourly_counts(tl, threshold)
    return {day_label(d0 + k): walk[k] / (tl.fs * 60.0) for k in np.flatnonzero(present)}


@dataclass
class DayRecord:
    subject_id: str
    date: str
    walking_minutes: float
    walking_pct: float
    wear_pct: float
    included: bool


@dataclass
class DailyStats:
    days: list = field(default_factory=list)
    median_daily_walking_minutes: dict = field(default_factory=dict)
    median_daily_walking_pct: dict = field(default_factory=dict)

    def excluded(self):
        return [d for d in self.days if not d.included]

    def write_csv(self, path):
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["subject_id", "date", "walking_minutes", "walking_pct", "wear_pct"])
            for d in self.days:
                if d.included:
                    w.writerow([d.subject_id, d.date, f"{d.walking_minutes:.4f}", f"{d.walking_pct:.4f}",
                                f"{d.wear_pct:.4f}"])


def day_records(tl, threshold=0.5, min_wear=MIN_WEAR_FRACTION):
    """One record per calendar day; walking minutes are the sum of that day's hourly bins."""
    d0, walk, worn, present = _hourly_counts(tl, threshold)
    out = []
    for i in np.flatnonzero(present):
        minutes = math.fsum(walk[i] / (tl.fs * 60.0))
        wear_frac = worn[i] / (tl.fs * SECONDS_PER_DAY)
        pct = 100.0 * walk[i].sum() / worn[i] if worn[i] else math.nan
        out.append(DayRecord(tl.subject_id, day_label(d0 + i), minutes, pct, 100.0 * wear_frac,
                             bool(wear_frac >= min_wear)))
    return out


def daily_walking_stats(timelines, threshold=0.5, min_wear=MIN_WEAR_FRACTION):
    """Per-day walking time and percentage; per-subject medians over included days.

    Days with less than ``min_wear`` of the 24 h worn are kept in ``days``
    with ``included=False`` and left out of the medians.
    """
    out = DailyStats()
    by_subject = {}
    for tl in timelines:
        if len(tl) == 0:
            continue
        for rec in day_records(tl, threshold, min_wear):
            out.days.append(rec)
            if rec.included:
                by_subject.setdefault(rec.subject_id, []).append(rec)
    for sid, recs in by_subject.items():
        out.median_daily_walking_minutes[sid] = float(np.median([r.walking_minutes for r in recs]))
        out.median_daily_walking_pct[sid] = float(np.median([r.walking_pct for r in recs]))
    return out


def cohort_hourly_median(profiles):
    """Median over subject-days of 24-bin profiles; ``profiles`` is a list of 24-vectors."""
    if not profiles:
        return np.full(24, math.nan)
    return np.median(np.vstack(profiles), axis=0)


def write_hourly_csv(rows, path):
    """``rows`` are (subject_id, date, profile) triples."""
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["subject_id", "date", "hour", "walking_minutes"])
        for sid, date, prof in rows:
            for h, m in enumerate(prof):
                w.writerow([sid, date, h, f"{m:.4f}"])


# ---------------------------------------------------------------------------
# group statistics
# ---------------------------------------------------------------------------

def two_sample_t(a, b, pooled=False):
    """Two-sided two-sample t-test; Welch by default, pooled variance on request."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    na, nb = len(a), len(b)
    if na < 2 or nb < 2:
        raise ConfigError("each group needs at least two values")
    va, vb = a.var(ddof=1), b.var(ddof=1)
    if va <= 0 or vb <= 0:
        raise ConfigError("t-test undefined: a group has zero variance")
    diff = a.mean() - b.mean()
    if pooled:
        df = na + nb - 2
        sp2 = ((na - 1) * va + (nb - 1) * vb) / df
        se = math.sqrt(sp2 * (1.0 / na + 1.0 / nb))
    else:
        qa, qb = va / na, vb / nb
        se = math.sqrt(qa + qb)
        df = (qa + qb) ** 2 / (qa ** 2 / (na - 1) + qb ** 2 / (nb - 1))
    t = diff / se
    p = float(min(1.0, 2.0 * stats.t.sf(abs(t), df)))
    return float(t), p


def _pearson(x, y):
    xc, yc = x - x.mean(), y - y.mean()
    den = math.sqrt(float(np.dot(xc, xc)) * float(np.dot(yc, yc)))
    return float(np.dot(xc, yc)) / den


def spearman(x, y):
    """Spearman rho (Pearson on mid-ranks) with a t-approximation p-value.

    Returns ``(nan, nan)`` when either variable is constant.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if len(x) != len(y):
        raise ConfigError("spearman needs paired samples")
    n = len(x)
    if n < 3:
        raise ConfigError("spearman needs at least three pairs")
    rx, ry = stats.rankdata(x), stats.rankdata(y)
    if np.all(rx == rx[0]) or np.all(ry == ry[0]):
        return math.nan, math.nan
    rho = max(-1.0, min(1.0, _pearson(rx, ry)))
    if abs(rho) > 1.0 - 1e-12:
        # perfectly monotone; snap the rounding residue
        return math.copysign(1.0, rho), 0.0
    t = rho * math.sqrt((n - 2) / (1.0 - rho * rho))
    return rho, float(2.0 * stats.t.sf(abs(t), n - 2))


def severity_correlation(daily, subjects):
    """Spearman of median daily walking minutes against UHDRS-TMS over HD subjects."""
    pairs = [(daily.median_daily_walking_minutes[s.subject_id], s.uhdrs_tms)
             for s in subjects
             if s.cohort == "HD" and s.uhdrs_tms is not None and s.subject_id in daily.median_daily_walking_minutes]
    if len(pairs) < 3:
        raise ConfigError(f"need at least 3 HD subjects with UHDRS-TMS and walking data, got {len(pairs)}")
    walk, tms = zip(*pairs)
    return spearman(walk, tms)
