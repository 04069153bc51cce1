"""Recording / annotation / subject-metadata I/O and synthetic sessions.

File layouts
------------
Recording CSV::

    #fs=100.0,start=1700000000.0,id=hd01
    t,x,y,z
    0.000000,0.012000,-0.981000,0.051000
    ...

Annotation CSV::

    start_s,end_s,activity,chorea,valid
    0.0,5.0,gait,2,1

``chorea`` is 0..4, or -1 for segments that could not be rated; those are
always loaded as ``valid=False``.

Subject metadata CSV::

    subject_id,cohort,uhdrs_tms
    hd01,HD,42
    hc01,HC,
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy import signal

from .errors import ConfigError, DataError, FormatError

GAIT = "gait"
NONGAIT = "nongait"
UNRANKED = -1
COHORTS = ("HD", "HC", "PD")
TMS_MAX = 124


@dataclass
class AccelRecording:
    session_id: str
    fs: float
    start_epoch: float
    samples: np.ndarray  # (n, 3), g

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if not self.fs > 0:
            raise ConfigError(f"sampling rate must be positive, got {self.fs}")
        if self.samples.ndim != 2 or self.samples.shape[1] != 3:
            raise ConfigError(f"expected (n, 3) samples, got {self.samples.shape}")
        if len(self.samples) < 1:
            raise ConfigError("recording has no samples")
        if not np.isfinite(self.samples).all():
            raise DataError("recording contains non-finite samples")

    def __len__(self):
        return len(self.samples)

    @property
    def duration_s(self):
        return len(self.samples) / self.fs


@dataclass(frozen=True)
class Interval:
    start_s: float
    end_s: float
    activity: str
    chorea: int
    valid: bool

    @property
    def is_gait(self):
        return self.activity == GAIT


@dataclass
class AnnotationTrack:
    session_id: str
    intervals: list = field(default_factory=list)

    def __post_init__(self):
        self.intervals = normalize_intervals(self.intervals)

    def gait_intervals(self):
        return [iv for iv in self.intervals if iv.is_gait]


@dataclass(frozen=True)
class SubjectMeta:
    subject_id: str
    cohort: str
    uhdrs_tms: int | None = None

    def __post_init__(self):
        if self.cohort not in COHORTS:
            raise ConfigError(f"unknown cohort {self.cohort!r}")
        if self.uhdrs_tms is not None:
            if self.cohort != "HD":
                raise ConfigError(f"{self.subject_id}: UHDRS-TMS only applies to HD subjects")
            if not 0 <= self.uhdrs_tms <= TMS_MAX:
                raise ConfigError(f"{self.subject_id}: UHDRS-TMS {self.uhdrs_tms} outside 0..{TMS_MAX}")


def make_interval(start_s, end_s, activity, chorea, valid=True):
    if activity not in (GAIT, NONGAIT):
        raise ConfigError(f"activity must be {GAIT!r} or {NONGAIT!r}, got {activity!r}")
    chorea = int(chorea)
    if chorea != UNRANKED and not 0 <= chorea <= 4:
        raise ConfigError(f"chorea level must be 0..4 or {UNRANKED}, got {chorea}")
    if not start_s < end_s:
        raise ConfigError(f"interval end {end_s} must exceed start {start_s}")
    if chorea == UNRANKED:
        valid = False
    return Interval(float(start_s), float(end_s), activity, chorea, bool(valid))


def normalize_intervals(intervals):
    """Sort by start time and reject overlaps. Idempotent."""
    out = sorted(intervals, key=lambda iv: (iv.start_s, iv.end_s))
    for iv in out:
        if not iv.start_s < iv.end_s:
            raise ConfigError(f"interval end {iv.end_s} must exceed start {iv.start_s}")
    for a, b in zip(out, out[1:]):
        if b.start_s < a.end_s:
            raise ConfigError(
                f"overlapping intervals [{a.start_s}, {a.end_s}) and [{b.start_s}, {b.end_s})"
            )
    return out


# ---------------------------------------------------------------------------
# recordings
# ---------------------------------------------------------------------------

def _parse_header(line, path):
    if not line.startswith("#"):
        raise FormatError("missing '#fs=...,start=...,id=...' header", line=1, path=path)
    fields = {}
    for part in line[1:].strip().split(","):
        key, sep, value = part.partition("=")
        if not sep:
            raise FormatError(f"malformed header field {part!r}", line=1, path=path)
        fields[key.strip()] = value.strip()
    try:
        fs = float(fields["fs"])
        start = float(fields.get("start", 0.0))
    except (KeyError, ValueError) as exc:
        raise FormatError(f"bad header: {exc}", line=1, path=path) from None
    if not fs > 0:
        raise FormatError(f"fs must be positive, got {fs}", line=1, path=path)
    return fs, start, fields.get("id", Path(path).stem if path else "")


def _scan_rows(lines, path, first_lineno):
    """Slow path: locate the first bad row and raise with its line number."""
    for k, raw in enumerate(lines):
        lineno = first_lineno + k
        if not raw.strip():
            continue
        parts = raw.strip().split(",")
        if len(parts) != 4:
            raise FormatError(f"expected 4 columns, got {len(parts)}", line=lineno, path=path)
        try:
            vals = [float(p) for p in parts]
        except ValueError:
            raise FormatError(f"unparseable row {raw.strip()!r}", line=lineno, path=path) from None
        if not all(math.isfinite(v) for v in vals):
            raise DataError(f"non-finite value in row {raw.strip()!r}", line=lineno, path=path)
    raise FormatError("unreadable data block", path=path)


def load_recording(path):
    path = Path(path)
    text = path.read_text()
    lines = text.splitlines()
    if len(lines) < 2:
        raise FormatError("file too short for header", path=path)
    fs, start, sid = _parse_header(lines[0], path)
    if [c.strip() for c in lines[1].split(",")] != ["t", "x", "y", "z"]:
        raise FormatError("expected column header 't,x,y,z'", line=2, path=path)
    body = lines[2:]
    if not any(ln.strip() for ln in body):
        raise FormatError("no data rows", path=path)
    try:
        data = np.loadtxt(io.StringIO("\n".join(body)), delimiter=",", ndmin=2, dtype=np.float64)
        if data.shape[1] != 4:
            raise ValueError
    except ValueError:
        _scan_rows(body, path, 3)
    if not np.isfinite(data).all():
        _scan_rows(body, path, 3)
    return AccelRecording(sid, fs, start, data[:, 1:4])


def save_recording(rec, path, precision=6):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    t = np.arange(len(rec)) / rec.fs
    table = np.column_stack([t, rec.samples])
    buf = io.StringIO()
    buf.write(f"#fs={rec.fs!r},start={rec.start_epoch!r},id={rec.session_id}\n")
    buf.write("t,x,y,z\n")
    np.savetxt(buf, table, fmt=f"%.{precision}f", delimiter=",")
    path.write_text(buf.getvalue())


# ---------------------------------------------------------------------------
# annotations and subjects
# ---------------------------------------------------------------------------

ANNOTATION_HEADER = ["start_s", "end_s", "activity", "chorea", "valid"]


def load_annotations(path, session_id=None):
    path = Path(path)
    intervals = []
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ANNOTATION_HEADER:
            raise FormatError(f"expected header {','.join(ANNOTATION_HEADER)}", line=1, path=path)
        for lineno, row in enumerate(reader, start=2):
            if not row or not "".join(row).strip():
                continue
            if len(row) != 5:
                raise FormatError(f"expected 5 columns, got {len(row)}", line=lineno, path=path)
            try:
                start, end = float(row[0]), float(row[1])
                chorea = int(row[3])
                valid = int(row[4])
            except ValueError:
                raise FormatError(f"unparseable row {row}", line=lineno, path=path) from None
            activity = row[2].strip()
            if activity not in (GAIT, NONGAIT):
                raise FormatError(f"activity must be gait/nongait, got {activity!r}", line=lineno, path=path)
            if chorea != UNRANKED and not 0 <= chorea <= 4:
                raise FormatError(f"chorea {chorea} not in 0..4 or -1", line=lineno, path=path)
            if valid not in (0, 1):
                raise FormatError(f"valid must be 0 or 1, got {valid}", line=lineno, path=path)
            if not end > start:
                raise FormatError(f"end {end} must exceed start {start}", line=lineno, path=path)
            intervals.append(make_interval(start, end, activity, chorea, bool(valid)))
    try:
        return AnnotationTrack(session_id or path.stem, intervals)
    except ConfigError as exc:
        raise FormatError(str(exc), path=path) from None


def save_annotations(track, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(ANNOTATION_HEADER)
        for iv in track.intervals:
            w.writerow([repr(iv.start_s), repr(iv.end_s), iv.activity, iv.chorea, int(iv.valid)])


def load_subjects(path):
    path = Path(path)
    out = []
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["subject_id", "cohort", "uhdrs_tms"]:
            raise FormatError("expected header subject_id,cohort,uhdrs_tms", line=1, path=path)
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 3:
                raise FormatError(f"expected 3 columns, got {len(row)}", line=lineno, path=path)
            tms = row[2].strip()
            try:
                out.append(SubjectMeta(row[0].strip(), row[1].strip(), int(tms) if tms else None))
            except (ValueError, ConfigError) as exc:
                raise FormatError(str(exc), line=lineno, path=path) from None
    return out


def save_subjects(subjects, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["subject_id", "cohort", "uhdrs_tms"])
        for s in subjects:
            w.writerow([s.subject_id, s.cohort, "" if s.uhdrs_tms is None else s.uhdrs_tms])


# ---------------------------------------------------------------------------
# synthetic sessions
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SynthConfig:
    """Parameters of one synthetic session.

    Gait bouts alternate with non-gait segments. ``gait_bout_s`` bounds the
    length of a single walking bout; non-gait segment lengths are scaled so
    the expected walking share equals ``gait_fraction``.
    """

    duration_s: float = 300.0
    fs: float = 100.0
    gait_fraction: float = 0.4
    chorea_level: int = 0
    step_freq_hz: float = 2.0
    noise_std_g: float = 0.01
    seed: int = 0
    session_id: str = "synth"
    start_epoch: float = 0.0
    gait_bout_s: tuple = (8.0, 30.0)
    chorea_gain_g: float = 0.15
    chorea_rate_hz: float = 0.35
    unranked_fraction: float = 0.0

    def validate(self):
        if not self.duration_s > 0:
            raise ConfigError("duration_s must be positive")
        if not self.fs > 0:
            raise ConfigError("fs must be positive")
        if not 0.0 <= self.gait_fraction <= 1.0:
            raise ConfigError("gait_fraction must lie in [0, 1]")
        if self.chorea_level not in range(5):
            raise ConfigError("chorea_level must be 0..4")
        if not 0 < self.gait_bout_s[0] <= self.gait_bout_s[1]:
            raise ConfigError("gait_bout_s must be an increasing positive pair")
        if not 0.0 <= self.unranked_fraction < 1.0:
            raise ConfigError("unranked_fraction must lie in [0, 1)")
        if not 0 < self.step_freq_hz < self.fs / 4:
            raise ConfigError("step_freq_hz must be positive and well below Nyquist")
        return self


def _segment_plan(cfg, rng, n):
    """Alternating (start, stop, is_gait) sample ranges covering [0, n)."""
    if cfg.gait_fraction <= 0.0:
        return [(0, n, False)]
    if cfg.gait_fraction >= 1.0:
        return [(0, n, True)]
    lo, hi = cfg.gait_bout_s
    mean_gait = 0.5 * (lo + hi)
    mean_non = mean_gait * (1.0 - cfg.gait_fraction) / cfg.gait_fraction
    plan, pos = [], 0
    is_gait = bool(rng.random() < cfg.gait_fraction)
    while pos < n:
        if is_gait:
            dur = rng.uniform(lo, hi)
        else:
            dur = rng.uniform(0.4 * mean_non, 1.6 * mean_non)
        length = max(1, int(round(dur * cfg.fs)))
        stop = min(n, pos + length)
        plan.append((pos, stop, is_gait))
        pos = stop
        is_gait = not is_gait
    return plan


def _bandlimited(rng, n, fs, lo, hi):
    """Unit-RMS noise restricted to [lo, hi] Hz."""
    hi = min(hi, 0.45 * fs)
    sos = signal.butter(4, [lo, hi], btype="bandpass", fs=fs, output="sos")
    pad = int(4 * fs / lo)
    x = signal.sosfilt(sos, rng.standard_normal(n + pad))[pad:]
    rms = np.sqrt(np.mean(x ** 2))
    return x / rms if rms > 0 else x


def _gravity_path(rng, n, fs):
    """Slowly drifting unit gravity vector (orientation changes of the wrist)."""
    knots = max(2, int(n / (fs * 20.0)) + 2)
    ctrl = rng.normal([0.0, -1.0, 0.0], 0.35, size=(knots, 3))
    tk = np.linspace(0, n - 1, knots)
    t = np.arange(n)
    g = np.column_stack([np.interp(t, tk, ctrl[:, k]) for k in range(3)])
    return g / np.linalg.norm(g, axis=1, keepdims=True)


def synth_session(cfg):
    """Generate a recording and its exact ground-truth annotation track.

    Walking: vertical-axis step fundamental plus its second harmonic, with a
    weaker arm swing at half the step rate on the forward axis. Non-gait:
    sensor noise, slow orientation drift and occasional small irregular arm
    movements. Chorea: random 1-4 Hz bursts on all axes whose amplitude grows
    with the chorea level, overlaid on both activities.
    """
    cfg.validate()
    rng = np.random.default_rng(cfg.seed)
    fs = cfg.fs
    n = max(1, int(round(cfg.duration_s * fs)))
    t = np.arange(n) / fs

    plan = _segment_plan(cfg, rng, n)
    acc = _gravity_path(rng, n, fs)
    gait_mask = np.zeros(n, dtype=bool)

    for start, stop, is_gait in plan:
        m = stop - start
        tt = t[start:stop] - t[start]
        if is_gait:
            gait_mask[start:stop] = True
            f = cfg.step_freq_hz * rng.uniform(0.85, 1.15)
            # cadence wanders slowly within a bout
            inst = f * (1.0 + 0.03 * np.sin(2 * np.pi * rng.uniform(0.05, 0.2) * tt + rng.uniform(0, 2 * np.pi)))
            phase = 2 * np.pi * np.cumsum(inst) / fs + rng.uniform(0, 2 * np.pi)
            a1 = rng.uniform(0.25, 0.4)
            a2 = a1 * rng.uniform(0.35, 0.6)
            ramp = np.clip(np.minimum(tt, tt[-1] - tt) / 0.5, 0.0, 1.0)
            acc[start:stop, 1] += ramp * (a1 * np.sin(phase) + a2 * np.sin(2 * phase + rng.uniform(0, np.pi)))
            acc[start:stop, 0] += ramp * rng.uniform(0.1, 0.2) * np.sin(0.5 * phase + rng.uniform(0, np.pi))
            acc[start:stop, 2] += ramp * rng.uniform(0.03, 0.08) * np.sin(phase + rng.uniform(0, np.pi))
        else:
            # sporadic small arm movements while stationary
            n_moves = rng.poisson(m / fs / 10.0)
            for _ in range(n_moves):
                length = int(rng.uniform(0.8, 3.0) * fs)
                if length >= m:
                    continue
                s0 = int(rng.integers(0, m - length))
                env = np.hanning(length)[:, None]
                acc[start + s0:start + s0 + length] += (
                    env * rng.uniform(0.03, 0.1) * _bandlimited(rng, length, fs, 0.3, 3.0)[:, None]
                    * rng.normal(0, 1, 3)
                )

    if cfg.chorea_level > 0:
        amp = cfg.chorea_gain_g * cfg.chorea_level
        n_bursts = rng.poisson(cfg.chorea_rate_hz * cfg.duration_s)
        burst_noise = np.column_stack([_bandlimited(rng, n, fs, 1.0, 4.0) for _ in range(3)])
        env = np.zeros(n)
        for _ in range(n_bursts):
            length = max(2, int(rng.uniform(0.5, 3.0) * fs))
            s0 = int(rng.integers(0, max(1, n - length)))
            seg = env[s0:s0 + length]
            env[s0:s0 + length] = np.maximum(seg, rng.uniform(0.6, 1.0) * np.hanning(length)[: len(seg)])
        acc += amp * env[:, None] * burst_noise

    acc += rng.normal(0.0, cfg.noise_std_g, size=acc.shape)

    intervals = []
    for start, stop, is_gait in plan:
        chorea = cfg.chorea_level
        valid = True
        if cfg.unranked_fraction > 0 and rng.random() < cfg.unranked_fraction:
            chorea, valid = UNRANKED, False
        intervals.append(make_interval(start / fs, stop / fs, GAIT if is_gait else NONGAIT, chorea, valid))

    rec = AccelRecording(cfg.session_id, fs, cfg.start_epoch, acc)
    return rec, AnnotationTrack(cfg.session_id, intervals)


def with_seed(cfg, seed, **changes):
    return replace(cfg, seed=seed, **changes)
