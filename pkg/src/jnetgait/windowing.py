"""Model-ready 10-s windows at 30 Hz.

Two dataset paths share the same windows:

* classification: non-overlapping windows, one label per window by the 70 %
  rule, ambiguous and low-activity windows dropped;
* segmentation: per-sample labels, ambiguous windows kept, low-activity
  windows dropped, with one of three edge strategies.

Edge strategies (stride / scored core within each 300-sample window):

========  ======  ===========
plain     300     [0, 300)
padded6   180     [60, 240)
triple    150     [0, 300) of the middle window, 20 s context
========  ======  ===========
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np

from . import WINDOW_SAMPLES
from .errors import ConfigError, FormatError

GATE_STD_G = 0.05
MAJORITY = 0.7
INVALID = -1
HALF = WINDOW_SAMPLES // 2


class EdgeStrategy(str, Enum):
    PLAIN = "plain"
    PADDED6 = "padded6"
    TRIPLE = "triple"

    @property
    def stride(self):
        return {"plain": 300, "padded6": 180, "triple": 150}[self.value]

    @property
    def core(self):
        return {"plain": (0, 300), "padded6": (60, 240), "triple": (0, 300)}[self.value]


def parse_strategy(value):
    if isinstance(value, EdgeStrategy):
        return value
    aliases = {"padded6s": "padded6", "padded": "padded6"}
    try:
        return EdgeStrategy(aliases.get(str(value).lower(), str(value).lower()))
    except ValueError:
        raise ConfigError(f"unknown edge strategy {value!r}; use plain, padded6 or triple") from None


@dataclass
class Window:
    data: np.ndarray          # (3, 300)
    sample_gait: np.ndarray
    sample_chorea: np.ndarray
    sample_valid: np.ndarray
    window_label: int
    session_id: str
    start_index: int


def magnitude_std(data):
    """STD over time of the per-sample Euclidean norm; data is (..., 3, T)."""
    mag = np.sqrt(np.sum(np.square(data), axis=-2))
    return mag.std(axis=-1)


def activity_gate(w, threshold=GATE_STD_G):
    data = w.data if isinstance(w, Window) else np.asarray(w)
    return bool(magnitude_std(data) >= threshold)


def classify_label(sample_gait, sample_valid):
    """1 / 0 if valid gait / non-gait samples exceed 70 % of the window, else INVALID."""
    g = np.asarray(sample_gait).astype(bool)
    v = np.asarray(sample_valid).astype(bool)
    n = len(g)
    # integer form of count > 0.7 * n
    if 10 * int(np.sum(g & v)) > 7 * n:
        return 1
    if 10 * int(np.sum(~g & v)) > 7 * n:
        return 0
    return INVALID


def _window_chorea(chorea, valid):
    """Most frequent chorea level among valid samples (-1 if none)."""
    levels = chorea[(valid > 0) & (chorea >= 0)]
    if levels.size == 0:
        return -1
    return int(np.bincount(levels, minlength=5).argmax())


@dataclass
class WindowSet:
    data: np.ndarray           # (N, 3, 300)
    gait: np.ndarray           # (N, 300) uint8
    chorea: np.ndarray         # (N, 300) int8
    valid: np.ndarray          # (N, 300) uint8
    window_label: np.ndarray   # (N,) int8, 1/0/INVALID
    active: np.ndarray         # (N,) bool, passed the activity gate
    session_ids: np.ndarray    # (N,) str
    start_index: np.ndarray    # (N,) int64
    strategy: EdgeStrategy = EdgeStrategy.PLAIN
    fs: float = 30.0
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.data)

    def __getitem__(self, i):
        return Window(self.data[i], self.gait[i], self.chorea[i], self.valid[i],
                      int(self.window_label[i]), str(self.session_ids[i]), int(self.start_index[i]))

    @property
    def core(self):
        return self.strategy.core

    def select(self, mask):
        mask = np.asarray(mask)
        return WindowSet(self.data[mask], self.gait[mask], self.chorea[mask], self.valid[mask],
                         self.window_label[mask], self.active[mask], self.session_ids[mask],
                         self.start_index[mask], self.strategy, self.fs, dict(self.meta))

    def for_sessions(self, session_ids):
        return self.select(np.isin(self.session_ids, list(session_ids)))

    def window_chorea(self):
        return np.array([_window_chorea(c, v) for c, v in zip(self.chorea, self.valid)], dtype=np.int8)

    def scored_mask(self):
        """Per-sample loss mask: valid labels inside the strategy's core."""
        lo, hi = self.core
        m = self.valid.astype(bool).copy()
        m[:, :lo] = False
        m[:, hi:] = False
        return m

    @staticmethod
    def empty(strategy=EdgeStrategy.PLAIN, fs=30.0):
        n = WINDOW_SAMPLES
        return WindowSet(np.zeros((0, 3, n)), np.zeros((0, n), np.uint8), np.zeros((0, n), np.int8),
                         np.zeros((0, n), np.uint8), np.zeros(0, np.int8), np.zeros(0, bool),
                         np.zeros(0, dtype=object).astype(str), np.zeros(0, np.int64), strategy, fs)

    @staticmethod
    def concat(sets):
        sets = [s for s in sets if s is not None]
        if not sets:
            return WindowSet.empty()
        strategies = {s.strategy for s in sets}
        if len(strategies) != 1:
            raise ConfigError("cannot concatenate window sets built with different strategies")
        cat = np.concatenate
        return WindowSet(cat([s.data for s in sets]), cat([s.gait for s in sets]),
                         cat([s.chorea for s in sets]), cat([s.valid for s in sets]),
                         cat([s.window_label for s in sets]), cat([s.active for s in sets]),
                         cat([s.session_ids.astype(str) for s in sets]), cat([s.start_index for s in sets]),
                         sets[0].strategy, sets[0].fs, dict(sets[0].meta))


def window_starts(n_samples, stride, length=WINDOW_SAMPLES):
    if n_samples < length:
        return np.zeros(0, dtype=np.int64)
    return np.arange(0, n_samples - length + 1, stride, dtype=np.int64)


def make_windows(rec30, tl, strategy=EdgeStrategy.PLAIN, stride_samples=None, path="segmentation",
                 session_id="", gate_threshold=GATE_STD_G, drop_gated=True):
    """Cut a 30 Hz (n, 3) signal and its label timeline into windows.

    ``path="classification"`` keeps only gated-in windows with a definite
    70 % label; ``path="segmentation"`` keeps every gated-in window.
    ``drop_gated=False`` retains gated-out windows (``active=False``) so
    triple context and stream inference see the full recording.
    """
    strategy = parse_strategy(strategy)
    if path not in ("classification", "segmentation"):
        raise ConfigError(f"path must be classification or segmentation, got {path!r}")
    x = np.asarray(getattr(rec30, "samples", rec30), dtype=np.float64)
    if tl is not None and len(tl) != len(x):
        raise ConfigError(f"label timeline length {len(tl)} != signal length {len(x)}")
    stride = int(stride_samples or strategy.stride)
    starts = window_starts(len(x), stride)
    if len(starts) == 0:
        return WindowSet.empty(strategy)
    idx = starts[:, None] + np.arange(WINDOW_SAMPLES)[None, :]
    data = np.transpose(x[idx], (0, 2, 1)).copy()
    if tl is None:
        gait = np.zeros(idx.shape, np.uint8)
        chorea = np.full(idx.shape, -1, np.int8)
        valid = np.zeros(idx.shape, np.uint8)
    else:
        gait, chorea, valid = tl.gait[idx], tl.chorea[idx], tl.valid[idx]
    labels = np.array([classify_label(g, v) for g, v in zip(gait, valid)], dtype=np.int8)
    active = magnitude_std(data) >= gate_threshold
    ws = WindowSet(data, gait, chorea, valid, labels, active,
                   np.array([session_id] * len(starts)).astype(str), starts, strategy)
    ws.meta["n_samples"] = int(len(x))
    keep = np.ones(len(ws), dtype=bool)
    if drop_gated:
        keep &= active
    if path == "classification":
        keep &= labels != INVALID
    return ws.select(keep)


# ---------------------------------------------------------------------------
# triple windows
# ---------------------------------------------------------------------------

@dataclass
class TripleWindow:
    prev: Window
    mid: Window
    next: Window

    def __post_init__(self):
        if not (self.prev.session_id == self.mid.session_id == self.next.session_id):
            raise ConfigError("triple windows must come from one session")
        if self.mid.start_index - self.prev.start_index != HALF or self.next.start_index - self.mid.start_index != HALF:
            raise ConfigError("triple windows must be spaced by exactly 150 samples")

    @property
    def is_interior(self):
        return bool(self.prev.sample_valid.any() or self.prev.data.any()) and bool(
            self.next.sample_valid.any() or self.next.data.any())

    def context(self):
        """The 600 contiguous samples spanned by the triple, (3, 600)."""
        return np.concatenate([self.prev.data[:, :HALF], self.mid.data, self.next.data[:, HALF:]], axis=1)


def _pad_window(session_id, start):
    n = WINDOW_SAMPLES
    return Window(np.zeros((3, n)), np.zeros(n, np.uint8), np.full(n, -1, np.int8),
                  np.zeros(n, np.uint8), INVALID, session_id, int(start))


def triple_index(ws, only_active=True):
    """(prev, mid, next) row indices into ``ws``; -1 marks a zero-padded neighbour."""
    lookup = {(str(s), int(a)): i for i, (s, a) in enumerate(zip(ws.session_ids, ws.start_index))}
    rows = []
    for i, (s, a) in enumerate(zip(ws.session_ids, ws.start_index)):
        if only_active and not ws.active[i]:
            continue
        s, a = str(s), int(a)
        rows.append((lookup.get((s, a - HALF), -1), i, lookup.get((s, a + HALF), -1)))
    return np.array(rows, dtype=np.int64).reshape(-1, 3)


def make_triple_batches(ws, only_active=True):
    """One TripleWindow per middle window; absent neighbours are zero-padded with valid=0."""
    out = []
    for p, m, n in triple_index(ws, only_active):
        mid = ws[m]
        prev = ws[p] if p >= 0 else _pad_window(mid.session_id, mid.start_index - HALF)
        nxt = ws[n] if n >= 0 else _pad_window(mid.session_id, mid.start_index + HALF)
        out.append(TripleWindow(prev, mid, nxt))
    return out


def stack_context(ws, only_active=True):
    """Array form of the triples: (M, 3, 3, 300) data plus the index table."""
    tri = triple_index(ws, only_active)
    data = np.zeros((len(tri), 3, 3, WINDOW_SAMPLES), dtype=ws.data.dtype)
    for k in range(3):
        have = tri[:, k] >= 0
        data[have, k] = ws.data[tri[have, k]]
    return data, tri


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------

MAGIC = b"JNWSET01"


def save_windowset(ws, path):
    """Write ``MAGIC | u64 header_len | JSON header | blocks`` (little-endian).

    Blocks, in order: data f32 (N*3*300), gait u8 (N*300), chorea i8 (N*300),
    valid u8 (N*300), window_label i8 (N), active u8 (N), start_index i64 (N).
    """
    header = {
        "count": int(len(ws)),
        "channels": 3,
        "length": WINDOW_SAMPLES,
        "strategy": ws.strategy.value,
        "fs": float(ws.fs),
        "session_ids": [str(s) for s in ws.session_ids],
        "meta": ws.meta,
    }
    hbytes = json.dumps(header).encode("utf-8")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(hbytes)))
        fh.write(hbytes)
        fh.write(ws.data.astype("<f4").tobytes())
        fh.write(ws.gait.astype("u1").tobytes())
        fh.write(ws.chorea.astype("i1").tobytes())
        fh.write(ws.valid.astype("u1").tobytes())
        fh.write(ws.window_label.astype("i1").tobytes())
        fh.write(ws.active.astype("u1").tobytes())
        fh.write(ws.start_index.astype("<i8").tobytes())


def load_windowset(path):
    path = Path(path)
    raw = path.read_bytes()
    if raw[:8] != MAGIC:
        raise FormatError("not a window-set file (bad magic)", path=path)
    (hlen,) = struct.unpack("<Q", raw[8:16])
    try:
        header = json.loads(raw[16:16 + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"bad header: {exc}", path=path) from None
    n, c, t = header["count"], header["channels"], header["length"]
    off = 16 + hlen

    def take(dtype, count):
        nonlocal off
        size = np.dtype(dtype).itemsize * count
        if off + size > len(raw):
            raise FormatError("truncated window-set file", path=path)
        arr = np.frombuffer(raw, dtype=dtype, count=count, offset=off)
        off += size
        return arr.copy()

    data = take("<f4", n * c * t).reshape(n, c, t).astype(np.float64)
    gait = take("u1", n * t).reshape(n, t)
    chorea = take("i1", n * t).reshape(n, t)
    valid = take("u1", n * t).reshape(n, t)
    label = take("i1", n)
    active = take("u1", n).astype(bool)
    start = take("<i8", n)
    if off != len(raw):
        raise FormatError(f"{len(raw) - off} unexpected trailing bytes", path=path)
    return WindowSet(data, gait, chorea, valid, label, active, np.array(header["session_ids"], dtype=str).reshape(n),
                     start, parse_strategy(header["strategy"]), header["fs"], header.get("meta", {}))
