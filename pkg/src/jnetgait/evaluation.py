"""Detection metrics and the participant-wise evaluation protocol.

Undefined metrics (zero denominators, single-class subsets) are reported as
``nan``, and serialized as ``null`` in JSON and an empty field in CSV.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy import stats

from .errors import ConfigError

UNDEFINED = math.nan


@dataclass
class ScoreSet:
    scores: np.ndarray
    labels: np.ndarray
    chorea: np.ndarray | None = None
    subject_ids: np.ndarray | None = None

    def __post_init__(self):
        self.scores = np.asarray(self.scores, dtype=np.float64).reshape(-1)
        self.labels = np.asarray(self.labels).astype(np.int64).reshape(-1)
        n = len(self.scores)
        if n == 0:
            raise ConfigError("score set is empty")
        if len(self.labels) != n:
            raise ConfigError("scores and labels differ in length")
        if not np.isin(self.labels, (0, 1)).all():
            raise ConfigError("labels must be 0 or 1")
        if self.chorea is not None:
            self.chorea = np.asarray(self.chorea).astype(np.int64).reshape(-1)
            if len(self.chorea) != n:
                raise ConfigError("chorea and scores differ in length")
        if self.subject_ids is not None:
            self.subject_ids = np.asarray(self.subject_ids).astype(str).reshape(-1)
            if len(self.subject_ids) != n:
                raise ConfigError("subject_ids and scores differ in length")

    def __len__(self):
        return len(self.scores)

    @property
    def n_pos(self):
        return int(self.labels.sum())

    @property
    def n_neg(self):
        return int(len(self.labels) - self.labels.sum())

    def subset(self, mask):
        mask = np.asarray(mask, dtype=bool)
        return ScoreSet(self.scores[mask], self.labels[mask],
                        None if self.chorea is None else self.chorea[mask],
                        None if self.subject_ids is None else self.subject_ids[mask])

    @staticmethod
    def concat(sets):
        sets = list(sets)
        has_ch = all(s.chorea is not None for s in sets)
        has_sid = all(s.subject_ids is not None for s in sets)
        return ScoreSet(np.concatenate([s.scores for s in sets]), np.concatenate([s.labels for s in sets]),
                        np.concatenate([s.chorea for s in sets]) if has_ch else None,
                        np.concatenate([s.subject_ids for s in sets]) if has_sid else None)


@dataclass
class ConfusionMatrix:
    tp: int = 0
    fp: int = 0
    tn: int = 0
    fn: int = 0

    @property
    def total(self):
        return self.tp + self.fp + self.tn + self.fn

    def __add__(self, other):
        return ConfusionMatrix(self.tp + other.tp, self.fp + other.fp, self.tn + other.tn, self.fn + other.fn)


def confusion(scores, labels, threshold=0.5):
    """Counts with ``score >= threshold`` read as predicted gait."""
    if not 0.0 < threshold < 1.0:
        raise ConfigError(f"threshold must lie in (0, 1), got {threshold}")
    scores = np.asarray(scores, dtype=np.float64).reshape(-1)
    labels = np.asarray(labels).astype(bool).reshape(-1)
    if scores.size == 0:
        raise ConfigError("cannot build a confusion matrix from no items")
    pred = scores >= threshold
    return ConfusionMatrix(tp=int(np.sum(pred & labels)), fp=int(np.sum(pred & ~labels)),
                           tn=int(np.sum(~pred & ~labels)), fn=int(np.sum(~pred & labels)))


def precision_recall(cm):
    precision = cm.tp / (cm.tp + cm.fp) if cm.tp + cm.fp else UNDEFINED
    recall = cm.tp / (cm.tp + cm.fn) if cm.tp + cm.fn else UNDEFINED
    return precision, recall


def roc_auc(s):
    """P[Y > X] + 1/2 P[Y = X] for gait scores Y and non-gait scores X.

    Computed from mid-ranks (Mann-Whitney U), which equals the tie-aware
    pair count exactly for finite scores.
    """
    n_pos, n_neg = s.n_pos, s.n_neg
    if n_pos == 0 or n_neg == 0:
        raise ConfigError("ROC-AUC needs both gait and non-gait items")
    ranks = stats.rankdata(s.scores)  # average ranks for ties
    # U is a half-integer; doubling keeps the rank sum exact in float64
    u2 = 2.0 * ranks[s.labels == 1].sum() - n_pos * (n_pos + 1)
    return u2 / (2.0 * n_pos * n_neg)


def hanley_se(auc, n_pos, n_neg):
    if n_pos < 1 or n_neg < 1:
        raise ConfigError("need at least one positive and one negative")
    if not 0.0 <= auc <= 1.0:
        raise ConfigError(f"AUC must lie in [0, 1], got {auc}")
    q1 = auc / (2.0 - auc)
    q2 = 2.0 * auc * auc / (1.0 + auc)
    var = (auc * (1 - auc) + (n_pos - 1) * (q1 - auc * auc) + (n_neg - 1) * (q2 - auc * auc)) / (n_pos * n_neg)
    return math.sqrt(max(var, 0.0))


def auc_ci(auc, n_pos, n_neg, level=0.95):
    """Wald interval ``auc +/- z * SE`` with the Hanley-McNeil SE, clipped to [0, 1]."""
    if not 0.0 < level < 1.0:
        raise ConfigError("confidence level must lie in (0, 1)")
    z = stats.norm.ppf(0.5 + level / 2.0)
    se = hanley_se(auc, n_pos, n_neg)
    return max(0.0, auc - z * se), min(1.0, auc + z * se)


def pr_auc(s):
    """Average precision: sum over distinct descending thresholds of (dRecall * precision)."""
    n_pos = s.n_pos
    if n_pos == 0:
        raise ConfigError("PR-AUC needs at least one gait item")
    order = np.argsort(-s.scores, kind="mergesort")
    sc, lab = s.scores[order], s.labels[order]
    tp = np.cumsum(lab)
    fp = np.cumsum(1 - lab)
    # only the last index of each run of tied scores is a threshold
    last = np.r_[np.flatnonzero(np.diff(sc) != 0), len(sc) - 1]
    tp, fp = tp[last], fp[last]
    precision = tp / (tp + fp)
    recall = tp / n_pos
    d_recall = np.diff(np.r_[0.0, recall])
    return float(np.sum(d_recall * precision))


@dataclass
class MetricSlice:
    n: int
    n_pos: int
    n_neg: int
    confusion: ConfusionMatrix
    precision: float
    recall: float
    roc_auc: float
    ci_low: float
    ci_high: float
    pr_auc: float

    @property
    def ci_half_width(self):
        if math.isnan(self.roc_auc):
            return UNDEFINED
        return max(self.roc_auc - self.ci_low, self.ci_high - self.roc_auc)


def summarize(s, threshold=0.5, level=0.95):
    cm = confusion(s.scores, s.labels, threshold)
    precision, recall = precision_recall(cm)
    if s.n_pos and s.n_neg:
        auc = roc_auc(s)
        lo, hi = auc_ci(auc, s.n_pos, s.n_neg, level)
    else:
        auc = lo = hi = UNDEFINED
    ap = pr_auc(s) if s.n_pos else UNDEFINED
    return MetricSlice(len(s), s.n_pos, s.n_neg, cm, precision, recall, auc, lo, hi, ap)


def stratify_by_chorea(s, threshold=0.5, level=0.95):
    """Metrics per chorea level; every item lands in exactly one level."""
    if s.chorea is None:
        raise ConfigError("score set carries no chorea levels")
    return {int(lv): summarize(s.subset(s.chorea == lv), threshold, level) for lv in np.unique(s.chorea)}


def participant_cv_split(subjects, k=5, seed=0):
    """Partition subject ids into ``k`` folds whose sizes differ by at most one."""
    subjects = sorted(set(str(x) for x in subjects))
    if len(subjects) < k:
        raise ConfigError(f"need at least {k} subjects for {k}-fold CV, got {len(subjects)}")
    if k < 2:
        raise ConfigError("k must be >= 2")
    order = np.random.default_rng(seed).permutation(len(subjects))
    return [sorted(subjects[i] for i in order[f::k]) for f in range(k)]


# ---------------------------------------------------------------------------
# reports
# ---------------------------------------------------------------------------

@dataclass
class EvalReport:
    """Nested ``{model: {cohort: {level: MetricSlice}}}``; level "all" pools levels."""

    results: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    def add(self, model, cohort, level, sl):
        self.results.setdefault(model, {}).setdefault(cohort, {})[str(level)] = sl

    def get(self, model, cohort="all", level="all"):
        return self.results[model][cohort][str(level)]

    def to_dict(self):
        def clean(v):
            if isinstance(v, float) and math.isnan(v):
                return None
            if isinstance(v, dict):
                return {k: clean(x) for k, x in v.items()}
            return v

        out = {}
        for model, cohorts in self.results.items():
            for cohort, levels in cohorts.items():
                for level, sl in levels.items():
                    d = asdict(sl)
                    d["ci_half_width"] = sl.ci_half_width
                    out.setdefault(model, {}).setdefault(cohort, {})[level] = clean(d)
        return {"meta": self.meta, "results": out}

    def write_json(self, path):
        Path(path).write_text(json.dumps(self.to_dict(), indent=2))

    def rows(self):
        metrics = ("n", "n_pos", "n_neg", "precision", "recall", "roc_auc", "ci_low", "ci_high",
                   "ci_half_width", "pr_auc")
        for model, cohorts in self.results.items():
            for cohort, levels in cohorts.items():
                for level, sl in levels.items():
                    vals = {m: getattr(sl, m) for m in metrics}
                    vals.update(tp=sl.confusion.tp, fp=sl.confusion.fp, tn=sl.confusion.tn, fn=sl.confusion.fn)
                    for m, v in vals.items():
                        yield model, cohort, level, m, v

    def write_csv(self, path):
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["model", "cohort", "level", "metric", "value"])
            for model, cohort, level, m, v in self.rows():
                w.writerow([model, cohort, level, m, "" if isinstance(v, float) and math.isnan(v) else v])


def evaluate_scores(s, cohorts=None, threshold=0.5, level=0.95):
    """Pooled, per-cohort and per-chorea-level slices for one model's scores.

    ``cohorts`` maps subject id to cohort name.
    """
    out = {"all": {"all": summarize(s, threshold, level)}}
    if s.chorea is not None:
        for lv, sl in stratify_by_chorea(s, threshold, level).items():
            out["all"][str(lv)] = sl
    if cohorts and s.subject_ids is not None:
        cohort_of = np.array([cohorts.get(sid, "?") for sid in s.subject_ids])
        for c in sorted(set(cohort_of)):
            sub = s.subset(cohort_of == c)
            out[c] = {"all": summarize(sub, threshold, level)}
            if sub.chorea is not None:
                for lv, sl in stratify_by_chorea(sub, threshold, level).items():
                    out[c][str(lv)] = sl
    return out
