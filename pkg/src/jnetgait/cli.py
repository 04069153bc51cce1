"""``jnetgait`` command line.

Subcommands communicate through files under a data root (``--data``,
default ``$JNETGAIT_DATA`` or ``./data``)::

    synth         subjects.csv, recordings/, annotations/ and optionally daily/
    preprocess    windows/        per-subject window sets and label timelines
    train         model/          weight manifest, history.json
    eval          eval/           report.json, report.csv, ablation.csv, auc_bars.svg
    infer         timelines/      per-recording gait probability timelines
    daily-report  daily_report/   daily.csv, hourly.csv, profiles, stats.json, scatter

Every run also writes ``run_manifest.json`` (resolved settings, seed,
sha256 of each artifact) and ``resolved.cfg`` next to its outputs; passing
the latter back through ``--config`` repeats the run.

Exit codes: 0 success, 2 configuration error, 3 data or format error,
4 numerical failure during training.
"""

from __future__ import annotations

import argparse
import concurrent.futures as cf
import hashlib
import json
import logging
import math
import os
import sys
from pathlib import Path

import numpy as np
import torch

from . import FS_MODEL, __version__, plotting
from .config import apply_config, check_ranges, normalize_key, read_config, write_config
from .dla import (
    cohort_hourly_median,
    daily_walking_stats,
    hourly_walking_minutes,
    infer_stream,
    load_timeline,
    save_timeline,
    severity_correlation,
    two_sample_t,
    write_hourly_csv,
)
from .errors import ConfigError, DataError, FormatError, NumericalError
from .ingest import load_annotations, load_recording, load_subjects, save_annotations, save_recording, save_subjects
from .net.model import HEADS, ModelConfig
from .net.optim import AdamHyper
from .net.train import train
from .net.weights import export_weights, import_weights, load_model
from .study import (
    PreprocessParams,
    StudyConfig,
    Subject,
    list_subject_data,
    load_subject_data,
    prepare_subject,
    run_cv,
    save_subject_data,
    synth_cohort,
    synth_daily,
)
from .windowing import WindowSet, parse_strategy

log = logging.getLogger("jnetgait")

ENV_DATA = "JNETGAIT_DATA"
EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4
MANIFEST = "run_manifest.json"
RESOLVED = "resolved.cfg"
DAILY_MIDNIGHT = 1_700_006_400.0  # 2023-11-15 00:00 UTC

DEFAULT_OUT = {
    "synth": ".",
    "preprocess": "windows",
    "train": "model",
    "eval": "eval",
    "infer": "timelines",
    "daily-report": "daily_report",
}


# ---------------------------------------------------------------------------
# argument types
# ---------------------------------------------------------------------------

def strategy_list(text):
    names = [t for t in (s.strip() for s in str(text).split(",")) if t]
    if not names:
        raise argparse.ArgumentTypeError("empty strategy list")
    try:
        return ",".join(dict.fromkeys(parse_strategy(n).value for n in names))
    except ConfigError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def single_strategy(text):
    try:
        return parse_strategy(str(text).strip()).value
    except ConfigError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def int_list(text):
    try:
        vals = [int(t) for t in str(text).split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None
    if not vals or min(vals) < 1:
        raise argparse.ArgumentTypeError(f"expected positive integers, got {text!r}")
    return ",".join(map(str, vals))


def _ints(text):
    return [int(t) for t in text.split(",")]


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def _common(p):
    p.add_argument("--config", help="flat key = value file; explicit flags override it")
    p.add_argument("--data", default=os.environ.get(ENV_DATA, "data"),
                   help=f"data root (default ${ENV_DATA} or ./data)")
    p.add_argument("--out", help="output directory (default depends on the subcommand)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--jobs", type=int, default=1, help="worker processes / torch threads; 1 is deterministic")
    p.add_argument("--log-level", default="INFO", choices=["DEBUG", "INFO", "WARNING", "ERROR"])


def _preprocessing(p):
    g = p.add_argument_group("preprocessing")
    g.add_argument("--low-hz", type=float, default=0.2)
    g.add_argument("--high-hz", type=float, default=15.0)
    g.add_argument("--order", type=int, default=4)
    g.add_argument("--target-fs", type=float, default=FS_MODEL)
    g.add_argument("--gate-threshold", type=float, default=0.05, help="magnitude STD gate in g")


def _model(p):
    g = p.add_argument_group("model and training")
    g.add_argument("--channels", type=int_list, default="16,16,32,32,64", help="encoder channels per stage")
    g.add_argument("--downsample", type=int_list, default="2,2,3,5,5", help="pooling factor per stage")
    g.add_argument("--kernel-size", type=int, default=5)
    g.add_argument("--precision", choices=["float32", "float64"], default="float32")
    g.add_argument("--epochs", type=int, default=25)
    g.add_argument("--patience", type=int, default=6)
    g.add_argument("--lr", type=float, default=1e-3)
    g.add_argument("--batch-size", type=int, default=64)
    g.add_argument("--windows", help="preprocessed window directory (default <data>/windows)")


def build_parser():
    parser = argparse.ArgumentParser(prog="jnetgait", description="Wrist-accelerometer gait detection pipeline.")
    parser.add_argument("--version", action="version", version=f"jnetgait {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")
    subs = {}

    p = sub.add_parser("synth", help="write a synthetic cohort with annotations")
    _common(p)
    p.add_argument("--n-hd", type=int, default=10)
    p.add_argument("--n-hc", type=int, default=10)
    p.add_argument("--duration-s", type=float, default=240.0)
    p.add_argument("--fs", type=float, default=100.0)
    p.add_argument("--gait-fraction", type=float, default=0.4)
    p.add_argument("--unranked-fraction", type=float, default=0.05)
    p.add_argument("--daily-hours", type=float, default=0.0,
                   help="also write unannotated free-living recordings of this length to daily/")
    p.add_argument("--daily-start-hour", type=float, default=8.0, help="local clock time the daily recordings start")
    p.add_argument("--utc-offset", type=float, default=0.0, help="seconds added to UTC to get local time")
    subs["synth"] = p

    p = sub.add_parser("preprocess", help="filter, resample and window every subject")
    _common(p)
    _preprocessing(p)
    p.add_argument("--strategy", type=strategy_list, default="triple,padded6,plain")
    subs["preprocess"] = p

    p = sub.add_parser("train", help="train one model on all (or selected) subjects")
    _common(p)
    _preprocessing(p)
    _model(p)
    p.add_argument("--head", choices=list(HEADS), default="jnet")
    p.add_argument("--strategy", type=single_strategy, default="triple")
    p.add_argument("--init", help="weight manifest whose encoder initializes the model")
    p.add_argument("--freeze-encoder", action="store_true")
    p.add_argument("--train-subjects", help="comma-separated subject ids (default all)")
    subs["train"] = p

    p = sub.add_parser("eval", help="participant-wise cross-validated model comparison")
    _common(p)
    _preprocessing(p)
    _model(p)
    p.add_argument("--strategy", type=strategy_list, default="triple,padded6,plain")
    p.add_argument("--k-folds", type=int, default=5)
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--no-baseline", dest="baseline", action="store_false")
    p.add_argument("--no-multitask", dest="multitask", action="store_false")
    p.add_argument("--hc-only-baseline", action="store_true",
                   help="add a baseline trained on control subjects only")
    subs["eval"] = p

    p = sub.add_parser("infer", help="gait probability timelines for raw recordings")
    _common(p)
    _preprocessing(p)
    p.add_argument("--model", help="weight manifest directory (default <data>/model)")
    p.add_argument("--recordings", help="recording directory (default <data>/daily, else <data>/recordings)")
    p.add_argument("--strategy", type=single_strategy, default="triple")
    p.add_argument("--utc-offset", type=float, default=0.0, help="seconds added to UTC to get local time")
    subs["infer"] = p

    p = sub.add_parser("daily-report", help="daily and hourly walking summaries with group statistics")
    _common(p)
    p.add_argument("--timelines", help="timeline directory (default <data>/timelines)")
    p.add_argument("--baseline-timelines",
                   help="classification-model timelines for the method scatter (default <data>/timelines_baseline)")
    p.add_argument("--subjects-csv", help="subject table (default <data>/subjects.csv)")
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--min-wear", type=float, default=0.5, help="minimum worn fraction of a day")
    p.add_argument("--pooled", action="store_true", help="pooled-variance t-test instead of Welch")
    subs["daily-report"] = p
    return parser, subs


def known_keys(subs):
    keys = set()
    for p in subs.values():
        keys |= {a.dest for a in p._actions if a.dest not in ("help", "config")}
    return keys


# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------

def _sha256(path):
    h = hashlib.sha256()
    with Path(path).open("rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _resolved(args):
    return {k: v for k, v in sorted(vars(args).items()) if k not in ("func", "command", "config")}


def write_manifest(args, out, artifacts, extra=None):
    """Record resolved settings and artifact hashes; returns the manifest path."""
    out = Path(out)
    resolved = _resolved(args)
    hashes = {}
    for p in sorted({Path(a) for a in artifacts}):
        try:
            key = p.relative_to(out).as_posix()
        except ValueError:
            key = str(p)
        hashes[key] = _sha256(p)
    manifest = {
        "command": args.command,
        "version": __version__,
        "seed": args.seed,
        "jobs": args.jobs,
        "config": resolved,
        "artifacts": hashes,
    }
    if extra:
        manifest.update(extra)
    path = out / MANIFEST
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True))
    write_config(resolved, out / RESOLVED)
    return path


def _require_dir(path, what):
    path = Path(path)
    if not path.is_dir():
        raise ConfigError(f"{what} not found: {path}")
    return path


def _require_file(path, what):
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"{what} not found: {path}")
    return path


def _pp(args):
    if args.target_fs != FS_MODEL:
        raise ConfigError(f"the models operate at {FS_MODEL:g} Hz; target_fs={args.target_fs} is not supported")
    return PreprocessParams(args.low_hz, args.high_hz, args.order, args.target_fs, args.gate_threshold)


def _load_raw_subject(data, meta):
    rec_path = Path(data) / "recordings" / f"{meta.subject_id}.csv"
    ann_path = Path(data) / "annotations" / f"{meta.subject_id}.csv"
    for p in (rec_path, ann_path):
        if not p.is_file():
            raise DataError(f"missing file for subject {meta.subject_id}", path=p)
    return Subject(meta, load_recording(rec_path), load_annotations(ann_path, meta.subject_id))


def _prepare_task(task):
    data, meta, strategies, pp, out = task
    sd = prepare_subject(_load_raw_subject(data, meta), strategies, pp)
    if out is None:
        return sd
    return [str(p) for p in save_subject_data(sd, out)]


def _map(fn, tasks, jobs):
    if jobs <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with cf.ProcessPoolExecutor(max_workers=jobs) as ex:
        return list(ex.map(fn, tasks))


def _prepared(args, strategies):
    """``{sid: SubjectData}`` from ``--windows`` or, failing that, from raw data in memory."""
    wdir = Path(args.windows) if args.windows else Path(args.data) / "windows"
    if args.windows:
        _require_dir(wdir, "window directory")
    ids = list_subject_data(wdir) if wdir.is_dir() else []
    if ids:
        data = {sid: load_subject_data(wdir, sid) for sid in ids}
        for sid, sd in data.items():
            have = {s.value for s in sd.segmentation}
            lacking = [s for s in strategies if s not in have]
            if lacking:
                raise ConfigError(f"{wdir} has no {','.join(lacking)} windows for {sid}; rerun preprocess")
        return data
    subjects_csv = _require_file(Path(args.data) / "subjects.csv", "subject table (or preprocessed windows)")
    log.info("no preprocessed windows under %s; preprocessing %s in memory", wdir, args.data)
    metas = load_subjects(subjects_csv)
    pp = _pp(args)
    strat = tuple(parse_strategy(s) for s in strategies)
    results = _map(_prepare_task, [(args.data, m, strat, pp, None) for m in metas], args.jobs)
    return {sd.subject_id: sd for sd in results}


def _model_config(args, head):
    return ModelConfig(stage_channels=_ints(args.channels), stage_downsample=_ints(args.downsample),
                       kernel_size=args.kernel_size, head=head, require_rep_dim=False).validate()


def _dtype(args):
    return torch.float32 if args.precision == "float32" else torch.float64


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_synth(args, out):
    subjects = synth_cohort(args.n_hd, args.n_hc, args.duration_s, args.fs, args.seed, args.gait_fraction,
                            args.unranked_fraction)
    written = [out / "subjects.csv"]
    save_subjects([s.meta for s in subjects], written[0])
    for s in subjects:
        rec_path = out / "recordings" / f"{s.subject_id}.csv"
        ann_path = out / "annotations" / f"{s.subject_id}.csv"
        save_recording(s.recording, rec_path)
        save_annotations(s.annotations, ann_path)
        written += [rec_path, ann_path]
    if args.daily_hours > 0:
        rng = np.random.default_rng([args.seed, 1])
        for s in subjects:
            level = max([iv.chorea for iv in s.annotations.intervals] + [0])
            start = DAILY_MIDNIGHT + args.daily_start_hour * 3600.0 - args.utc_offset
            rec = synth_daily(s.meta, args.daily_hours, start_epoch=start, seed=int(rng.integers(2**63 - 1)),
                              chorea_level=level, utc_offset_s=args.utc_offset)
            path = out / "daily" / f"{s.subject_id}.csv"
            save_recording(rec, path, precision=4)
            written.append(path)
    log.info("wrote %d subjects to %s", len(subjects), out)
    return written


def cmd_preprocess(args, out):
    metas = load_subjects(_require_file(Path(args.data) / "subjects.csv", "subject table"))
    pp = _pp(args)
    strat = tuple(parse_strategy(s) for s in args.strategy.split(","))
    results = _map(_prepare_task, [(args.data, m, strat, pp, str(out)) for m in metas], args.jobs)
    log.info("preprocessed %d subjects into %s", len(metas), out)
    return [p for paths in results for p in paths]


def cmd_train(args, out):
    data = _prepared(args, [args.strategy])
    ids = list(data)
    if args.train_subjects:
        ids = [s.strip() for s in args.train_subjects.split(",") if s.strip()]
        unknown = [s for s in ids if s not in data]
        if unknown:
            raise ConfigError(f"unknown subject ids: {unknown}")
    cfg = _model_config(args, args.head)
    if args.head == "classification":
        ws = WindowSet.concat([data[s].classification for s in ids])
    else:
        ws = WindowSet.concat([data[s].segmentation[parse_strategy(args.strategy)] for s in ids])
    model = None
    if args.init:
        model = import_weights(_require_dir(args.init, "weight manifest"), cfg, seed=args.seed, dtype=_dtype(args))
    elif args.freeze_encoder:
        log.warning("--freeze-encoder without --init freezes a random encoder")
    h = AdamHyper(lr=args.lr, batch_size=args.batch_size)
    model, history = train(cfg, ws, h, epochs=args.epochs, seed=args.seed, freeze_encoder=args.freeze_encoder,
                           patience=args.patience, dtype=_dtype(args), model=model,
                           progress=lambda e, loss: log.info("epoch %d loss %.5f", e, loss))
    export_weights(model, out)
    (out / "history.json").write_text(json.dumps(history, indent=1))
    curve = plotting.training_curves({args.head: history}, out / "training_curve.svg")
    log.info("trained %s on %d subjects (%d windows, %d epochs)", args.head, len(ids), len(ws), len(history))
    return [out / "index.json", out / "tensors.bin", out / "history.json", curve]


def _ablation_rows(report):
    rows = []
    for model, cohorts in report.results.items():
        for level, sl in cohorts["all"].items():
            rows.append((model, level, sl.n, sl.n_pos, sl.n_neg, sl.roc_auc, sl.ci_low, sl.ci_high))
    return rows


def _fmt(v):
    if isinstance(v, float):
        return "" if math.isnan(v) else repr(float(v))
    return str(v)


def cmd_eval(args, out):
    strategies = args.strategy.split(",")
    needed = strategies + (["triple"] if args.multitask and "triple" not in strategies else [])
    data = _prepared(args, needed)
    cfg = StudyConfig(k_folds=args.k_folds, seed=args.seed, stage_channels=_ints(args.channels),
                      stage_downsample=_ints(args.downsample), kernel_size=args.kernel_size, epochs=args.epochs,
                      patience=args.patience, lr=args.lr, batch_size=args.batch_size, strategies=tuple(strategies),
                      multitask=args.multitask, baseline=args.baseline, hc_only_baseline=args.hc_only_baseline,
                      threshold=args.threshold, single_precision=args.precision == "float32")
    res = run_cv(data, cfg, progress=log.info)
    res.report.meta.update(strategies=strategies, threshold=args.threshold)
    res.report.write_json(out / "report.json")
    res.report.write_csv(out / "report.csv")
    rows = _ablation_rows(res.report)
    with (out / "ablation.csv").open("w") as fh:
        fh.write("model,level,n,n_pos,n_neg,roc_auc,ci_low,ci_high\n")
        for r in rows:
            fh.write(",".join(_fmt(v) for v in r) + "\n")
    (out / "histories.json").write_text(json.dumps(res.histories, indent=1))
    bars = {m: {lv: (a, lo, hi) for m2, lv, _, _, _, a, lo, hi in rows if m2 == m} for m in res.report.results}
    svg = plotting.auc_bars(bars, out / "auc_bars.svg")
    for m in res.report.results:
        sl = res.report.get(m)
        log.info("%-18s ROC-AUC %.4f [%.4f, %.4f]", m, sl.roc_auc, sl.ci_low, sl.ci_high)
    return [out / "report.json", out / "report.csv", out / "ablation.csv", out / "histories.json", svg]


def cmd_infer(args, out):
    model_dir = _require_dir(args.model or Path(args.data) / "model", "weight manifest")
    if args.recordings:
        rec_dir = _require_dir(args.recordings, "recording directory")
    else:
        daily = Path(args.data) / "daily"
        rec_dir = _require_dir(daily if daily.is_dir() else Path(args.data) / "recordings", "recording directory")
    paths = sorted(rec_dir.glob("*.csv"))
    if not paths:
        raise DataError("no recordings (*.csv) found", path=rec_dir)
    model = load_model(model_dir)
    pp = _pp(args)
    written = []
    for p in paths:
        rec = load_recording(p)
        tl = infer_stream(model, rec, args.strategy, pp.gate_threshold, args.utc_offset,
                          preprocess={"low_hz": pp.low_hz, "high_hz": pp.high_hz, "order": pp.order})
        dest = out / f"{rec.session_id}.npz"
        save_timeline(tl, dest)
        written.append(dest)
        log.info("%s: %d samples, %.1f%% worn", rec.session_id, len(tl), 100.0 * tl.wear_valid.mean() if len(tl) else 0)
    return written


def _group_test(values_by_cohort, pooled):
    a = values_by_cohort.get("HD", [])
    b = values_by_cohort.get("HC", [])
    try:
        t, p = two_sample_t(a, b, pooled=pooled)
    except ConfigError as exc:
        return {"t": None, "p": None, "n_hd": len(a), "n_hc": len(b), "note": str(exc)}
    return {"t": t, "p": p, "n_hd": len(a), "n_hc": len(b)}


def _nan_none(v):
    return None if isinstance(v, float) and math.isnan(v) else v


def cmd_daily_report(args, out):
    tdir = _require_dir(args.timelines or Path(args.data) / "timelines", "timeline directory")
    metas = {m.subject_id: m for m in load_subjects(_require_file(args.subjects_csv or Path(args.data) / "subjects.csv",
                                                                  "subject table"))}
    timelines = [load_timeline(p) for p in sorted(tdir.glob("*.npz"))]
    if not timelines:
        raise DataError("no timelines (*.npz) found", path=tdir)
    missing = sorted({tl.subject_id for tl in timelines} - set(metas))
    if missing:
        raise DataError(f"timelines for subjects absent from the subject table: {missing}")
    daily = daily_walking_stats(timelines, args.threshold, args.min_wear)
    daily.write_csv(out / "daily.csv")
    written = [out / "daily.csv"]

    included = {(d.subject_id, d.date) for d in daily.days if d.included}
    rows, by_cohort = [], {}
    for tl in timelines:
        if len(tl) == 0:
            continue
        for date, prof in hourly_walking_minutes(tl, args.threshold).items():
            if (tl.subject_id, date) in included:
                rows.append((tl.subject_id, date, prof))
                by_cohort.setdefault(metas[tl.subject_id].cohort, []).append(prof)
    write_hourly_csv(rows, out / "hourly.csv")
    written.append(out / "hourly.csv")
    medians = {c: cohort_hourly_median(p) for c, p in sorted(by_cohort.items())}
    with (out / "hourly_median.csv").open("w") as fh:
        fh.write("cohort,hour,median_walking_minutes\n")
        for c, prof in medians.items():
            for h, m in enumerate(prof):
                fh.write(f"{c},{h},{m:.4f}\n")
    written.append(out / "hourly_median.csv")
    for c, prof in medians.items():
        written.append(plotting.hourly_profile({c: prof}, out / f"hourly_profile_{c}.svg",
                                               title=f"Walking time per hour ({c})"))
    if medians:
        written.append(plotting.hourly_profile(medians, out / "hourly_profile.svg"))

    minutes, pct = {}, {}
    for sid, v in daily.median_daily_walking_minutes.items():
        minutes.setdefault(metas[sid].cohort, []).append(v)
        pct.setdefault(metas[sid].cohort, []).append(daily.median_daily_walking_pct[sid])
    try:
        rho, p = severity_correlation(daily, list(metas.values()))
        corr = {"rho": _nan_none(rho), "p": _nan_none(p)}
    except ConfigError as exc:
        corr = {"rho": None, "p": None, "note": str(exc)}
    stats_out = {
        "test": "pooled t-test" if args.pooled else "Welch t-test",
        "threshold": args.threshold,
        "min_wear": args.min_wear,
        "days_included": len(included),
        "days_excluded": len(daily.excluded()),
        "walking_minutes_hd_vs_hc": _group_test(minutes, args.pooled),
        "walking_pct_hd_vs_hc": _group_test(pct, args.pooled),
        "spearman_walking_minutes_vs_uhdrs_tms": corr,
    }
    (out / "stats.json").write_text(json.dumps(stats_out, indent=2))
    written.append(out / "stats.json")

    bdir = Path(args.baseline_timelines) if args.baseline_timelines else Path(args.data) / "timelines_baseline"
    if args.baseline_timelines:
        _require_dir(bdir, "baseline timeline directory")
    if bdir.is_dir() and any(bdir.glob("*.npz")):
        base = daily_walking_stats([load_timeline(p) for p in sorted(bdir.glob("*.npz"))], args.threshold,
                                   args.min_wear)
        seg = {(d.subject_id, d.date): d for d in daily.days if d.included}
        pairs = [(d, seg[(d.subject_id, d.date)]) for d in base.days
                 if d.included and (d.subject_id, d.date) in seg]
        with (out / "scatter.csv").open("w") as fh:
            fh.write("subject_id,date,cohort,classification_pct,segmentation_pct\n")
            for b, s in pairs:
                fh.write(f"{b.subject_id},{b.date},{metas[b.subject_id].cohort},{b.walking_pct:.4f},"
                         f"{s.walking_pct:.4f}\n")
        written.append(out / "scatter.csv")
        written.append(plotting.method_scatter([b.walking_pct for b, _ in pairs], [s.walking_pct for _, s in pairs],
                                               [metas[b.subject_id].cohort for b, _ in pairs], out / "scatter.svg"))
    else:
        log.warning("no baseline timelines under %s; skipping the method scatter", bdir)
    return written


COMMANDS = {
    "synth": cmd_synth,
    "preprocess": cmd_preprocess,
    "train": cmd_train,
    "eval": cmd_eval,
    "infer": cmd_infer,
    "daily-report": cmd_daily_report,
}


# ---------------------------------------------------------------------------
# entry points
# ---------------------------------------------------------------------------

def parse_args(argv):
    """Parse ``argv`` with config-file defaults; argparse errors exit with status 2."""
    parser, subs = build_parser()
    first = parser.parse_args(argv)
    if first.config:
        values = read_config(first.config)
        apply_config(subs[first.command], {normalize_key(k): v for k, v in values.items()}, known_keys(subs))
        args = parser.parse_args(argv)
    else:
        args = first
    check_ranges(vars(args))
    return args


def _execute(args):
    logging.basicConfig(level=args.log_level, format="%(levelname)s %(name)s: %(message)s", force=True)
    torch.set_num_threads(args.jobs)
    if args.jobs == 1:
        torch.use_deterministic_algorithms(True)
    if args.command != "synth":
        _require_dir(args.data, "data root")
    for key in ("windows", "init", "model", "recordings", "timelines", "baseline_timelines"):
        if getattr(args, key, None):
            _require_dir(getattr(args, key), key.replace("_", " "))
    if getattr(args, "subjects_csv", None):
        _require_file(args.subjects_csv, "subject table")
    out = Path(args.out) if args.out else Path(args.data) / DEFAULT_OUT[args.command]
    args.out = str(out)
    out.mkdir(parents=True, exist_ok=True)
    artifacts = COMMANDS[args.command](args, out)
    return write_manifest(args, out, artifacts)


def run(argv=None):
    """Run one subcommand; returns the process exit code."""
    try:
        args = parse_args(argv)
        _execute(args)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_CONFIG
    except ConfigError as exc:
        print(f"jnetgait: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FormatError as exc:
        print(f"jnetgait: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericalError as exc:
        print(f"jnetgait: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"jnetgait: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


def main():
    sys.exit(run())
