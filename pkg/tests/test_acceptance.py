"""Acceptance criteria 1-12, each at its stated tolerance.

Every test records one ``CRITERION n: PASS|FAIL ...`` line, printed in the
pytest terminal summary. The synthetic study behind criteria 8-10 runs once
per session (about ten minutes on one CPU core).
"""

import json
import math
import statistics
import time

import numpy as np
import pytest
import torch
from conftest import ACCEPTANCE_LINES
from torch import nn

from jnetgait import cli
from jnetgait.dla import GaitTimeline, daily_walking_stats, hourly_walking_minutes, severity_correlation, two_sample_t
from jnetgait.dsp import preprocess_recording
from jnetgait.evaluation import ScoreSet, auc_ci, hanley_se, pr_auc, roc_auc
from jnetgait.ingest import AccelRecording, SubjectMeta, SynthConfig, synth_session
from jnetgait.net import ModelConfig, binary_cross_entropy, build_model, grad_check, masked_cross_entropy, train
from jnetgait.net import multitask_loss
from jnetgait.net.model import DecoderBlock, PreActBlock, conv1d
from jnetgait.study import StudyConfig, Subject, compare_strategies, prepare_subject, run_study, synth_cohort
from jnetgait.windowing import INVALID, EdgeStrategy, activity_gate, classify_label, magnitude_std, make_triple_batches

TINY = dict(stage_channels=[4, 4, 8, 8, 8], stage_downsample=[2, 2, 3, 5, 5], kernel_size=3, require_rep_dim=False)


def record(n, ok, detail):
    line = f"CRITERION {n}: {'PASS' if ok else 'FAIL'} {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


def randn(*shape, seed=0):
    g = torch.Generator().manual_seed(seed)
    return torch.randn(*shape, generator=g, dtype=torch.float64)


def jitter(module, scale=0.05, seed=11):
    g = torch.Generator().manual_seed(seed)
    with torch.no_grad():
        for p in module.parameters():
            p.add_(scale * torch.randn(p.shape, generator=g, dtype=p.dtype))
    return module


# ---------------------------------------------------------------------------
# 1-2 metrics
# ---------------------------------------------------------------------------

def pair_count_auc(scores, labels):
    """Brute-force tie-aware pair count; integer arithmetic, one correctly rounded division."""
    pos, neg = scores[labels == 1], scores[labels == 0]
    greater = int((pos[:, None] > neg[None, :]).sum())
    ties = int((pos[:, None] == neg[None, :]).sum())
    return (2 * greater + ties) / (2 * len(pos) * len(neg))


def threshold_ap(scores, labels):
    n_pos = int(labels.sum())
    total, prev_recall = 0.0, 0.0
    for t in sorted(set(scores.tolist()), reverse=True):
        sel = labels[scores >= t]
        tp = int(sel.sum())
        recall = tp / n_pos
        total += (recall - prev_recall) * (tp / len(sel))
        prev_recall = recall
    return total


def test_criterion_01_metric_oracles():
    t0 = time.time()
    rng = np.random.default_rng(2024)
    auc_mismatch, pr_worst = 0, 0.0
    for _ in range(1000):
        n = int(rng.integers(2, 201))
        labels = rng.integers(0, 2, size=n)
        labels[rng.choice(n, 2, replace=False)] = [0, 1]
        scores = rng.integers(0, int(rng.integers(2, 30)), size=n) / 7.0
        s = ScoreSet(scores, labels)
        auc_mismatch += roc_auc(s) != pair_count_auc(scores, labels)
        pr_worst = max(pr_worst, abs(pr_auc(s) - threshold_ap(scores, labels)))
    elapsed = time.time() - t0
    ok = auc_mismatch == 0 and pr_worst <= 1e-12 and elapsed < 30
    record(1, ok, f"auc mismatches={auc_mismatch}/1000, max |pr_auc - oracle|={pr_worst:.2e}, {elapsed:.1f}s")


def hanley_by_hand(a, n1, n2):
    q1 = a / (2 - a)
    q2 = 2 * a * a / (1 + a)
    return math.sqrt((a * (1 - a) + (n1 - 1) * (q1 - a * a) + (n2 - 1) * (q2 - a * a)) / (n1 * n2))


def test_criterion_02_hanley_ci():
    se_half = hanley_se(0.5, 1, 1)
    widths = [float(np.diff(auc_ci(1.0, n1, n2))[0]) for n1, n2 in [(1, 1), (3, 17), (250, 40), (1000, 1000)]]
    rng = np.random.default_rng(7)
    worst = 0.0
    for _ in range(20):
        a = float(rng.uniform(0.01, 0.99))
        n1, n2 = (int(v) for v in rng.integers(1, 2000, size=2))
        worst = max(worst, abs(hanley_se(a, n1, n2) - hanley_by_hand(a, n1, n2)))
    ok = se_half == 0.5 and all(w == 0 for w in widths) and worst <= 1e-12
    record(2, ok, f"SE(0.5,1,1)={se_half}, widths at A=1 {widths}, spot-check max err={worst:.1e}")


# ---------------------------------------------------------------------------
# 3-4 network
# ---------------------------------------------------------------------------

def test_criterion_03_gradient_checks():
    t0 = time.time()
    errors = {}
    layers = {
        "conv": (conv1d(3, 4, 5, stride=2), (2, 3, 30)),
        "conv1x1": (nn.Conv1d(4, 3, 1), (2, 4, 12)),
        "linear": (nn.Linear(6, 3), (5, 6)),
        "batchnorm": (nn.BatchNorm1d(4), (3, 4, 10)),
        "preact_block": (PreActBlock(3, 4, 3, stride=3), (2, 3, 30)),
        "decoder_block": (DecoderBlock(4, 3, 3, scale=5), (2, 4, 6)),
    }
    for name, (mod, shape) in layers.items():
        mod = jitter(mod.double().train())
        x = randn(*shape, seed=1)
        with torch.no_grad():
            proj = randn(*mod(x).shape, seed=2)
        errors[name] = grad_check(mod, lambda m: torch.sum(torch.tanh(m(x)) * proj), n_checks=300)

    enc_model = jitter(build_model(ModelConfig(head="classification", **TINY), dtype=torch.float64).train())
    x = randn(4, 3, 300, seed=7)
    y = torch.tensor([0.0, 1.0, 1.0, 0.0], dtype=torch.float64)
    errors["encoder+classifier"] = grad_check(enc_model, lambda m: binary_cross_entropy(m.classify_logit(x), y),
                                              n_checks=300)

    jnet = jitter(build_model(ModelConfig(head="jnet_multitask", **TINY), dtype=torch.float64).train())
    n_params = jnet.n_params()
    xt = randn(3, 3, 3, 300, seed=5)
    rng = np.random.default_rng(0)
    gait = torch.as_tensor(rng.integers(0, 2, size=(3, 300)))
    ch = torch.as_tensor(rng.integers(0, 5, size=(3, 300)))
    mask = torch.as_tensor(rng.random((3, 300)) > 0.2)

    def loss(m):
        out = m.segment(xt)
        return multitask_loss(masked_cross_entropy(out["gait"], gait, mask)[0],
                              masked_cross_entropy(out["chorea"], ch, mask)[0])

    errors["full_jnet"] = grad_check(jnet, loss, n_checks=400)
    elapsed = time.time() - t0
    worst = max(errors.values())
    ok = worst < 1e-4 and n_params <= 10_000 and elapsed < 120
    summary = ", ".join(f"{k}={v:.1e}" for k, v in errors.items())
    record(3, ok, f"max rel err={worst:.2e} ({summary}); tiny J-Net {n_params} params; {elapsed:.1f}s")


def test_criterion_04_masked_loss():
    rng = np.random.default_rng(4)
    worst, max_change = 0.0, 0.0
    for _ in range(100):
        b, c, t = int(rng.integers(1, 6)), int(rng.integers(2, 6)), int(rng.integers(10, 301))
        logits = torch.as_tensor(rng.normal(0, 3, size=(b, c, t)))
        labels = torch.as_tensor(rng.integers(0, c, size=(b, t)))
        mask = torch.as_tensor(rng.random((b, t)) < rng.uniform(0.1, 0.9))
        mask[0, 0] = True
        loss, _ = masked_cross_entropy(logits, labels, mask)
        # reference: plain CE on the gathered valid samples
        flat = logits.permute(0, 2, 1)[mask]
        ref = nn.functional.cross_entropy(flat, labels[mask])
        worst = max(worst, abs(float(loss) - float(ref)))
        noisy = logits.clone()
        noisy.permute(0, 2, 1)[~mask] = torch.as_tensor(rng.normal(0, 50, size=(int((~mask).sum()), c)))
        bad_labels = torch.where(mask, labels, torch.as_tensor(rng.integers(0, c, size=(b, t))))
        loss2, _ = masked_cross_entropy(noisy, bad_labels, mask)
        max_change = max(max_change, abs(float(loss2) - float(loss)))
    record(4, worst <= 1e-12 and max_change == 0.0,
           f"max |masked - subset CE|={worst:.1e}; max change from masked perturbation={max_change}")


# ---------------------------------------------------------------------------
# 5-7 preprocessing and windows
# ---------------------------------------------------------------------------

def two_pass_std(values):
    vals = [float(v) for v in values]
    mean = math.fsum(vals) / len(vals)
    return math.sqrt(math.fsum((v - mean) ** 2 for v in vals) / len(vals))


def window_with_std(a):
    # magnitude alternates between 1 - a and 1 + a
    z = np.where(np.arange(300) % 2 == 0, 1 - a, 1 + a)
    return np.vstack([np.zeros(300), np.zeros(300), z])


def test_criterion_05_preprocessing():
    rec = AccelRecording("s", 100.0, 0.0, np.random.default_rng(0).normal(size=(1000, 3)))
    n_out = len(preprocess_recording(rec))

    dc = AccelRecording("s", 100.0, 0.0, np.ones((3000, 3)) * [0.1, -0.3, 1.0])
    dc_resid = float(np.abs(preprocess_recording(dc)).max()) / 1.0

    t = np.arange(3000) / 100.0
    sine = AccelRecording("s", 100.0, 0.0, np.column_stack([np.sin(2 * np.pi * 5 * t + 0.3)] * 3))
    y = preprocess_recording(sine)[:, 0]
    tt = np.arange(len(y)) / 30.0
    basis = np.column_stack([np.sin(2 * np.pi * 5 * tt), np.cos(2 * np.pi * 5 * tt)])[60:-60]
    coef, *_ = np.linalg.lstsq(basis, y[60:-60], rcond=None)
    gain = float(np.hypot(*coef))

    gate = {}
    for a in (0.049, 0.051):
        w = window_with_std(a)
        oracle = two_pass_std(np.sqrt((w ** 2).sum(axis=0)))
        gate[a] = (bool(activity_gate(w)), oracle >= 0.05, abs(float(magnitude_std(w)) - oracle))
    gate_ok = gate[0.049][:2] == (False, False) and gate[0.051][:2] == (True, True) and \
        max(g[2] for g in gate.values()) < 1e-12
    ok = n_out == 300 and dc_resid < 0.01 and 0.9 <= gain <= 1.1 and gate_ok
    record(5, ok, f"10 s @100 Hz -> {n_out} samples; DC residual {dc_resid:.1e}; 5 Hz gain {gain:.4f}; "
                  f"gate 0.049->{gate[0.049][0]}, 0.051->{gate[0.051][0]}")


def test_criterion_06_label_rule_and_counts():
    labels = {}
    for count in (209, 210, 211):
        g = np.zeros(300)
        g[:count] = 1
        labels[count] = classify_label(g, np.ones(300))
    rule_ok = labels == {209: INVALID, 210: INVALID, 211: 1}

    rec, ann = synth_session(SynthConfig(duration_s=600, fs=100, gait_fraction=0.4, chorea_level=2, seed=3,
                                         session_id="s"))
    sd = prepare_subject(Subject(SubjectMeta("s", "HD", 40), rec, ann))
    n_cls = len(sd.classification)
    n_seg = {s.value: int(ws.active.sum()) for s, ws in sd.segmentation.items()}
    ok = rule_ok and all(v >= n_cls for v in n_seg.values())
    record(6, ok, f"labels {labels} (INVALID={INVALID}); classification windows {n_cls}, "
                  f"segmentation windows {n_seg}")


def test_criterion_07_triple_geometry():
    from jnetgait.dsp import LabelTimeline
    from jnetgait.windowing import make_windows

    n = 30 * 60 * 15
    x = np.random.default_rng(1).normal(0, 0.3, size=(n, 3))
    tl = LabelTimeline(30.0, np.zeros(n, np.uint8), np.zeros(n, np.int8), np.ones(n, np.uint8))
    ws = make_windows(x, tl, EdgeStrategy.TRIPLE, drop_gated=False)
    interior = [t for t in make_triple_batches(ws) if t.is_interior]
    bad = 0
    for t in interior:
        a, b, c = t.prev.start_index, t.mid.start_index, t.next.start_index
        overlaps = (a + 300 - b, b + 300 - c)
        ctx = t.context()
        contiguous = ctx.shape == (3, 600) and np.array_equal(ctx, x[a:a + 600].T) and c + 300 == a + 600
        bad += overlaps != (150, 150) or not contiguous
    record(7, bad == 0 and len(interior) > 100, f"{len(interior)} interior triples, {bad} violations")


# ---------------------------------------------------------------------------
# 8-10 synthetic study
# ---------------------------------------------------------------------------

@pytest.fixture(scope="module")
def study():
    subjects = synth_cohort(n_hd=10, n_hc=10, seed=0)
    return run_study(subjects, StudyConfig(seed=0))


@pytest.mark.slow
def test_criterion_08_study(study):
    jnet, base = "jnet_triple", "baseline"
    overall = study.auc(jnet)
    top = "4"
    gap = study.auc(jnet, top) - study.auc(base, top)
    drop_j = study.auc(jnet, "0") - study.auc(jnet, top)
    drop_b = study.auc(base, "0") - study.auc(base, top)
    ok_a, ok_b, ok_c = overall >= 0.95, gap >= 0.10, drop_j < drop_b
    ok_t = study.elapsed_s <= 30 * 60
    record(8, ok_a and ok_b and ok_c and ok_t,
           f"(a) J-Net AUC {overall:.4f} {'ok' if ok_a else 'LOW'}; "
           f"(b) level-4 J-Net {study.auc(jnet, top):.4f} vs baseline {study.auc(base, top):.4f}, "
           f"gap {100 * gap:.1f} pp {'ok' if ok_b else 'SHORT'}; "
           f"(c) degradation J-Net {100 * drop_j:.2f} pp vs baseline {100 * drop_b:.2f} pp "
           f"{'ok' if ok_c else 'WRONG'}; {study.elapsed_s / 60:.1f} min")


@pytest.mark.slow
def test_criterion_09_edge_strategy_ablation(study):
    rows = compare_strategies(study)
    ok = all(r[-1] for r in rows)
    detail = "; ".join(f"{a} {ua:.4f} >= {b} {ub:.4f} - {slack:.4f}" for a, b, ua, ub, slack, _ in rows)
    record(9, ok, detail)


@pytest.mark.slow
def test_criterion_10_multitask_parity(study):
    a, b = study.auc("jnet_multitask"), study.auc("jnet_triple")
    record(10, abs(a - b) <= 0.02, f"multitask {a:.4f} vs gait-only {b:.4f}, diff {100 * abs(a - b):.2f} pp")


# ---------------------------------------------------------------------------
# 11-12 daily analytics and determinism
# ---------------------------------------------------------------------------

def full_wear_timeline(sid, walk_fraction, days=2, fs=30.0, seed=0):
    n = int(days * 86400 * fs)
    rng = np.random.default_rng(seed)
    prob = (rng.random(n) < walk_fraction).astype(float) * rng.uniform(0.5, 1.0, n)
    return GaitTimeline(sid, fs, 1_700_006_400.0, prob, np.ones(n, bool))


def test_criterion_11_daily_analytics():
    tl = full_wear_timeline("a", 0.1, seed=1)
    daily = daily_walking_stats([tl])
    hourly = hourly_walking_minutes(tl)
    sums_exact = all(math.fsum(hourly[d.date]) == d.walking_minutes for d in daily.days)
    counts_ok = all(d.wear_pct == 100.0 and d.included for d in daily.days)

    tms = [20, 35, 50, 65, 80]
    metas = [SubjectMeta(f"hd{i}", "HD", t) for i, t in enumerate(tms)]
    tls = [full_wear_timeline(m.subject_id, 0.2 - 0.03 * i, days=1, seed=i) for i, m in enumerate(metas)]
    rho, p = severity_correlation(daily_walking_stats(tls), metas)

    g = [3.1, 4.7, 2.2, 5.9, 4.4]
    t, pt = two_sample_t(g, list(g))
    ok = sums_exact and counts_ok and rho == -1.0 and t == 0.0 and pt == 1.0
    record(11, ok, f"hourly sums exact={sums_exact} over {len(daily.days)} full-wear days; "
                   f"severity rho={rho}; Welch identical groups t={t}, p={pt}")


def test_criterion_12_determinism(tmp_path):
    data = tmp_path / "d"
    assert cli.run(["synth", "--data", str(data), "--n-hd", "2", "--n-hc", "2", "--duration-s", "120",
                    "--seed", "9", "--log-level", "WARNING"]) == 0
    common = ["--data", str(data), "--jobs", "1", "--seed", "4", "--epochs", "3", "--channels", "8,8,16,16,32",
              "--log-level", "WARNING"]
    assert cli.run(["train", "--out", str(tmp_path / "r1")] + common) == 0
    assert cli.run(["train", "--out", str(tmp_path / "r2")] + common) == 0
    h1 = (tmp_path / "r1" / "history.json").read_bytes()
    h2 = (tmp_path / "r2" / "history.json").read_bytes()
    w_same = (tmp_path / "r1" / "tensors.bin").read_bytes() == (tmp_path / "r2" / "tensors.bin").read_bytes()

    # the library path too, in double precision
    rng = np.random.default_rng(0)
    from jnetgait.net.train import SegmentationData

    x = rng.normal(size=(12, 1, 3, 300))
    sd = SegmentationData(x=x, gait=rng.integers(0, 2, (12, 300)), mask=np.ones((12, 300), bool),
                          chorea=np.zeros((12, 300), np.int64), chorea_mask=np.ones((12, 300), bool),
                          session_ids=np.array(["s"] * 12), start_index=np.arange(12) * 300)
    cfg = ModelConfig(head="jnet", **TINY)
    hist = [train(cfg, sd, epochs=3, seed=5)[1] for _ in range(2)]
    losses = [h["loss"] for h in json.loads(h1)]
    ok = h1 == h2 and w_same and hist[0] == hist[1]
    record(12, ok, f"CLI history bitwise equal={h1 == h2} ({len(losses)} epochs, final loss "
                   f"{statistics.fmean(losses[-1:]):.6f}); weights equal={w_same}; library history equal="
                   f"{hist[0] == hist[1]}")
