"""Static SVG figures for reports.

Every figure is also backed by a CSV written by the caller; these helpers
only render. Output is byte-stable for identical inputs (fixed hash salt,
no timestamp) so run manifests can hash it.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

RC = {
    "font.size": 9,
    "axes.labelsize": 9,
    "axes.titlesize": 10,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "svg.hashsalt": "jnetgait",
    "svg.fonttype": "none",
}

COHORT_COLORS = {"HD": "#c0392b", "HC": "#2471a3", "PD": "#7d3c98"}


def _color(cohort):
    return COHORT_COLORS.get(cohort, "0.3")


def new(width=5.0, height=3.2, **kw):
    with plt.rc_context(RC):
        return plt.subplots(figsize=(width, height), **kw)


def save(fig, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with plt.rc_context(RC):
        fig.savefig(path, format="svg", metadata={"Date": None}, bbox_inches="tight")
    plt.close(fig)
    return path


def hourly_profile(profiles, path, title="Walking time per hour"):
    """Median walking minutes per local hour, one line per cohort.

    ``profiles`` maps cohort -> 24-vector (NaN hours are left as gaps).
    """
    with plt.rc_context(RC):
        fig, ax = new()
        hours = np.arange(24)
        for cohort, prof in sorted(profiles.items()):
            ax.plot(hours, prof, marker="o", ms=3, lw=1.4, label=cohort, color=_color(cohort))
        ax.set_xticks(range(0, 24, 3))
        ax.set_xlim(-0.5, 23.5)
        ax.set_ylim(bottom=0)
        ax.set_xlabel("hour of day")
        ax.set_ylabel("walking time (min)")
        ax.set_title(title)
        ax.legend(frameon=False)
    return save(fig, path)


def method_scatter(x, y, cohorts, path, xlabel="classification (%)", ylabel="segmentation (%)",
                   title="Daily walking percentage"):
    """Per-day values from two detectors with the identity line."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    cohorts = np.asarray(cohorts)
    with plt.rc_context(RC):
        fig, ax = new(3.6, 3.6)
        hi = float(np.nanmax(np.r_[x, y, 1.0])) * 1.05
        ax.plot([0, hi], [0, hi], color="0.6", lw=0.8, ls="--")
        for c in sorted(set(cohorts.tolist())):
            m = cohorts == c
            ax.scatter(x[m], y[m], s=14, label=c, color=_color(c))
        ax.set_xlim(0, hi)
        ax.set_ylim(0, hi)
        ax.set_aspect("equal")
        ax.set_xlabel(xlabel)
        ax.set_ylabel(ylabel)
        ax.set_title(title)
        ax.legend(frameon=False)
    return save(fig, path)


def auc_bars(rows, path, title="ROC-AUC by chorea level"):
    """Grouped bars with CI whiskers; ``rows`` maps model -> {level: (auc, lo, hi)}."""
    models = list(rows)
    levels = sorted({lv for r in rows.values() for lv in r}, key=lambda s: (s != "all", s))
    width = 0.8 / max(1, len(models))
    with plt.rc_context(RC):
        fig, ax = new(6.0, 3.2)
        xs = np.arange(len(levels))
        for k, model in enumerate(models):
            vals = [rows[model].get(lv, (np.nan, np.nan, np.nan)) for lv in levels]
            auc = np.array([v[0] for v in vals], dtype=float)
            err = np.array([[a - lo, hi - a] for a, lo, hi in vals], dtype=float).T
            ax.bar(xs + (k - (len(models) - 1) / 2) * width, auc, width, yerr=err, capsize=2, label=model)
        ax.set_xticks(xs)
        ax.set_xticklabels(levels)
        ax.set_ylim(0, 1.02)
        ax.set_xlabel("chorea level")
        ax.set_ylabel("ROC-AUC")
        ax.set_title(title)
        ax.legend(frameon=False, ncol=2)
    return save(fig, path)


def training_curves(histories, path, title="Training loss"):
    """Epoch-mean loss; ``histories`` maps a label to a list of history dicts."""
    with plt.rc_context(RC):
        fig, ax = new()
        for label, hist in histories.items():
            ax.plot([h["epoch"] for h in hist], [h["loss"] for h in hist], lw=1.2, label=label)
        ax.set_yscale("log")
        ax.set_xlabel("epoch")
        ax.set_ylabel("loss")
        ax.set_title(title)
        ax.legend(frameon=False)
    return save(fig, path)
