"""Synthetic cohorts and the participant-wise cross-validated model comparison.

A cohort is a list of ``Subject`` records (metadata, raw recording,
annotations). ``run_study`` preprocesses every subject once, then for each
fold trains the window-classification baseline and the J-Net variants on the
training subjects and scores the held-out subjects:

* baseline: one score per kept 10-s window (70 % rule, activity gate);
* J-Net variants: one score per valid sample, stitched from overlapping
  window predictions, on the samples every edge strategy covers.
"""

from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import torch

from . import FS_MODEL
from .dla import stitch, window_probs
from .dsp import LabelTimeline, preprocess_recording, rasterize_labels
from .errors import ConfigError, FormatError
from .evaluation import EvalReport, ScoreSet, evaluate_scores, participant_cv_split
from .ingest import AccelRecording, SubjectMeta, SynthConfig, synth_session
from .net.model import ModelConfig
from .net.optim import AdamHyper
from .net.train import predict_windows, prepare_classification, prepare_segmentation, train
from .windowing import (
    GATE_STD_G,
    EdgeStrategy,
    WindowSet,
    load_windowset,
    make_windows,
    parse_strategy,
    save_windowset,
)

log = logging.getLogger(__name__)


@dataclass
class Subject:
    meta: SubjectMeta
    recording: object
    annotations: object

    @property
    def subject_id(self):
        return self.meta.subject_id


def chorea_levels_for(n_hd):
    return [(i % 4) + 1 for i in range(n_hd)]


def synth_cohort(n_hd=10, n_hc=10, duration_s=240.0, fs=100.0, seed=0, gait_fraction=0.4,
                 unranked_fraction=0.05, base=None):
    """HD-like subjects with chorea levels cycling 1..4 and chorea-free HC-like subjects.

    More severe chorea comes with shorter walking bouts and a higher UHDRS-TMS.
    """
    base = base or SynthConfig()
    rng = np.random.default_rng(seed)
    subjects = []
    specs = [("HD", lv) for lv in chorea_levels_for(n_hd)] + [("HC", 0)] * n_hc
    counters = {"HD": 0, "HC": 0}
    for cohort, level in specs:
        counters[cohort] += 1
        sid = f"{cohort.lower()}{counters[cohort]:02d}"
        bout = (8.0, 30.0) if level < 3 else (5.0, 16.0)
        cfg = replace(base, duration_s=duration_s, fs=fs, gait_fraction=gait_fraction, chorea_level=level,
                      step_freq_hz=float(rng.uniform(1.7, 2.2)), seed=int(rng.integers(2**63 - 1)),
                      session_id=sid, gait_bout_s=bout, unranked_fraction=unranked_fraction)
        rec, ann = synth_session(cfg)
        tms = int(np.clip(round(12 + 18 * level + rng.normal(0, 3)), 0, 124)) if cohort == "HD" else None
        subjects.append(Subject(SubjectMeta(sid, cohort, tms), rec, ann))
    return subjects


# relative walking propensity per local hour; nights are still
DIURNAL = np.array([0, 0, 0, 0, 0, 0, 0.2, 0.6, 1.0, 0.9, 0.8, 0.9, 1.0, 0.8, 0.7, 0.8, 0.9, 1.0, 0.8, 0.6,
                    0.4, 0.3, 0.1, 0.0])


def synth_daily(meta, hours=24.0, start_epoch=1_700_006_400.0, fs=30.0, seed=0, peak_gait_fraction=0.25,
                chorea_level=0, utc_offset_s=0.0):
    """Unannotated free-living recording built hour by hour from ``DIURNAL``.

    Walking share scales down with the subject's UHDRS-TMS, so more impaired
    subjects walk less.
    """
    if hours <= 0:
        raise ConfigError("hours must be positive")
    rng = np.random.default_rng(seed)
    tms = meta.uhdrs_tms or 0
    scale = peak_gait_fraction * max(0.05, 1.0 - tms / 100.0)
    chunks = []
    t, end = 0.0, hours * 3600.0
    while t < end - 1e-9:
        local = start_epoch + utc_offset_s + t
        hour = int(local // 3600) % 24
        step = min(3600.0 - local % 3600.0, end - t)
        frac = float(np.clip(DIURNAL[hour] * scale, 0.0, 1.0))
        cfg = SynthConfig(duration_s=step, fs=fs, gait_fraction=frac, chorea_level=chorea_level,
                          step_freq_hz=float(rng.uniform(1.7, 2.2)), seed=int(rng.integers(2**63 - 1)),
                          session_id=meta.subject_id)
        rec, _ = synth_session(cfg)
        chunks.append(rec.samples)
        t += step
    return AccelRecording(meta.subject_id, fs, start_epoch, np.concatenate(chunks))


@dataclass
class PreprocessParams:
    low_hz: float = 0.2
    high_hz: float = 15.0
    order: int = 4
    fs_out: float = FS_MODEL
    gate_threshold: float = GATE_STD_G


@dataclass
class SubjectData:
    subject_id: str
    cohort: str
    n_samples: int
    labels: object                 # LabelTimeline at 30 Hz
    classification: WindowSet
    segmentation: dict             # strategy -> WindowSet (gated windows retained, active=False)


def prepare_subject(subj, strategies=tuple(EdgeStrategy), pp=None):
    pp = pp or PreprocessParams()
    rec = subj.recording
    x30 = preprocess_recording(rec, pp.fs_out, pp.low_hz, pp.high_hz, pp.order)
    tl = rasterize_labels(subj.annotations, pp.fs_out, len(x30), rec.start_epoch)
    sid = subj.subject_id
    cls = make_windows(x30, tl, EdgeStrategy.PLAIN, path="classification", session_id=sid,
                       gate_threshold=pp.gate_threshold)
    seg = {parse_strategy(s): make_windows(x30, tl, s, path="segmentation", session_id=sid,
                                           gate_threshold=pp.gate_threshold, drop_gated=False)
           for s in strategies}
    return SubjectData(sid, subj.meta.cohort, len(x30), tl, cls, seg)


def save_subject_data(sd, directory):
    """``<sid>.subject.json``, ``<sid>.labels.npz`` and one window-set file per path/strategy."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    sid = sd.subject_id
    np.savez(d / f"{sid}.labels.npz", gait=sd.labels.gait, chorea=sd.labels.chorea, valid=sd.labels.valid,
             fs=sd.labels.fs)
    written = [d / f"{sid}.labels.npz"]
    save_windowset(sd.classification, d / f"{sid}.classification.jnws")
    written.append(d / f"{sid}.classification.jnws")
    for strategy, ws in sd.segmentation.items():
        save_windowset(ws, d / f"{sid}.{strategy.value}.jnws")
        written.append(d / f"{sid}.{strategy.value}.jnws")
    (d / f"{sid}.subject.json").write_text(json.dumps({"subject_id": sid, "cohort": sd.cohort, "n_samples": sd.n_samples,
                                               "strategies": [s.value for s in sd.segmentation]}))
    written.append(d / f"{sid}.subject.json")
    return written


def load_subject_data(directory, sid):
    d = Path(directory)
    try:
        info = json.loads((d / f"{sid}.subject.json").read_text())
    except FileNotFoundError:
        raise FormatError(f"no preprocessed data for subject {sid!r}", path=d) from None
    except json.JSONDecodeError as exc:
        raise FormatError(f"bad subject record: {exc}", path=d / f"{sid}.subject.json") from None
    with np.load(d / f"{sid}.labels.npz") as z:
        labels = LabelTimeline(float(z["fs"]), z["gait"], z["chorea"], z["valid"])
    cls = load_windowset(d / f"{sid}.classification.jnws")
    seg = {parse_strategy(v): load_windowset(d / f"{sid}.{v}.jnws") for v in info["strategies"]}
    return SubjectData(sid, info["cohort"], int(info["n_samples"]), labels, cls, seg)


def list_subject_data(directory):
    return sorted(p.name[: -len(".subject.json")] for p in Path(directory).glob("*.subject.json"))


@dataclass
class StudyConfig:
    k_folds: int = 5
    seed: int = 0
    stage_channels: list = field(default_factory=lambda: [16, 16, 32, 32, 64])
    stage_downsample: list = field(default_factory=lambda: [2, 2, 3, 5, 5])
    kernel_size: int = 5
    epochs: int = 25
    patience: int = 6
    lr: float = 1e-3
    batch_size: int = 64
    strategies: tuple = ("triple", "padded6", "plain")
    multitask: bool = True
    baseline: bool = True
    # extra baseline trained on the training folds' HC subjects only
    hc_only_baseline: bool = False
    threshold: float = 0.5
    single_precision: bool = True

    def model_config(self, head):
        return ModelConfig(stage_channels=list(self.stage_channels), stage_downsample=list(self.stage_downsample),
                           kernel_size=self.kernel_size, head=head, require_rep_dim=False)

    @property
    def dtype(self):
        return torch.float32 if self.single_precision else torch.float64


@dataclass
class StudyResult:
    report: EvalReport
    scores: dict
    histories: dict
    folds: list
    elapsed_s: float

    def auc(self, model, level="all", cohort="all"):
        return self.report.get(model, cohort, level).roc_auc

    def half_width(self, model, level="all", cohort="all"):
        return self.report.get(model, cohort, level).ci_half_width


def _segment_scores(model, sd, strategy):
    ws = sd.segmentation[strategy]
    probs = window_probs(model, ws)
    return stitch(sd.n_samples, ws.start_index, probs, ws.core)


def required_strategies(cfg):
    strategies = [parse_strategy(s) for s in cfg.strategies]
    return tuple(dict.fromkeys(strategies + ([EdgeStrategy.TRIPLE] if cfg.multitask else [])))


def run_study(subjects, cfg=None, progress=None):
    """Preprocess raw subjects, then run the participant-wise k-fold comparison."""
    cfg = cfg or StudyConfig()
    t0 = time.time()
    data = {s.subject_id: prepare_subject(s, required_strategies(cfg)) for s in subjects}
    res = run_cv(data, cfg, progress)
    res.elapsed_s = time.time() - t0
    return res


def run_cv(data, cfg=None, progress=None):
    """Participant-wise k-fold comparison over prepared ``{sid: SubjectData}``."""
    cfg = cfg or StudyConfig()
    t0 = time.time()
    strategies = [parse_strategy(s) for s in cfg.strategies]
    missing = [(sid, s.value) for sid, sd in data.items() for s in required_strategies(cfg) if s not in sd.segmentation]
    if missing:
        raise ConfigError(f"prepared data lacks window sets for {missing[:3]}")
    cohorts = {sid: sd.cohort for sid, sd in data.items()}
    folds = participant_cv_split(list(data), cfg.k_folds, cfg.seed)
    h = AdamHyper(lr=cfg.lr, batch_size=cfg.batch_size)

    variants = []
    if cfg.baseline:
        variants.append(("baseline", "classification", EdgeStrategy.PLAIN))
    if cfg.hc_only_baseline:
        variants.append(("baseline_hc_only", "classification", EdgeStrategy.PLAIN))
    for s in strategies:
        variants.append((f"jnet_{s.value}", "jnet", s))
    if cfg.multitask:
        variants.append(("jnet_multitask", "jnet_multitask", EdgeStrategy.TRIPLE))

    window_scores = {name: [] for name, head, _ in variants if head == "classification"}
    sample_probs = {name: {} for name, head, _ in variants if head != "classification"}
    coverage = {}
    histories = {name: [] for name, _, _ in variants}

    for k, test_ids in enumerate(folds):
        train_ids = [sid for sid in data if sid not in set(test_ids)]
        for name, head, strategy in variants:
            mcfg = cfg.model_config(head)
            if head == "classification":
                ids = [sid for sid in train_ids if cohorts[sid] == "HC"] if name.endswith("hc_only") else train_ids
                ws = WindowSet.concat([data[sid].classification for sid in ids])
                train_data = prepare_classification(ws)
            else:
                ws = WindowSet.concat([data[sid].segmentation[strategy] for sid in train_ids])
                train_data = prepare_segmentation(ws)
            model, hist = train(mcfg, train_data, h, epochs=cfg.epochs, seed=cfg.seed + 1000 * k,
                                patience=cfg.patience, dtype=cfg.dtype)
            histories[name].append(hist)
            for sid in test_ids:
                sd = data[sid]
                if head == "classification":
                    cw = sd.classification
                    if len(cw):
                        p = predict_windows(model, cw.data)
                        window_scores[name].append(ScoreSet(p, cw.window_label, cw.window_chorea(),
                                                            np.full(len(cw), sid)))
                else:
                    prob, covered = _segment_scores(model, sd, strategy)
                    sample_probs[name][sid] = prob
                    coverage[sid] = covered if sid not in coverage else coverage[sid] & covered
            if progress:
                progress(f"fold {k + 1}/{len(folds)} {name}: {len(hist)} epochs, loss {hist[-1]['loss']:.4f}")

    report = EvalReport(meta={"k_folds": cfg.k_folds, "seed": cfg.seed, "n_subjects": len(data),
                              "granularity": {"baseline": "window", "jnet": "sample"}})
    scores = {}
    for name, sets in window_scores.items():
        if sets:
            scores[name] = ScoreSet.concat(sets)
    for name, per_subject in sample_probs.items():
        sets = []
        for sid, prob in per_subject.items():
            tl = data[sid].labels
            m = coverage[sid] & (tl.valid > 0) & (tl.chorea >= 0)
            sets.append(ScoreSet(prob[m], tl.gait[m], tl.chorea[m], np.full(int(m.sum()), sid)))
        scores[name] = ScoreSet.concat(sets)
    for name, s in scores.items():
        for cohort, levels in evaluate_scores(s, cohorts, cfg.threshold).items():
            for level, sl in levels.items():
                report.add(name, cohort, level, sl)
    return StudyResult(report, scores, histories, folds, time.time() - t0)


def compare_strategies(result, order=("jnet_triple", "jnet_padded6", "jnet_plain"), level="all"):
    """Pairwise ``a >= b`` checks along ``order`` with CI slack.

    ``a`` may trail ``b`` by at most the sum of their CI half-widths. Returns
    a list of ``(a, b, auc_a, auc_b, slack, ok)``.
    """
    out = []
    for a, b in zip(order, order[1:]):
        ua, ub = result.auc(a, level), result.auc(b, level)
        slack = result.half_width(a, level) + result.half_width(b, level)
        out.append((a, b, ua, ub, slack, bool(ua >= ub - slack)))
    return out
