"""Mini-batch training loop and batched inference."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import torch

from ..errors import ConfigError, NumericalError
from ..windowing import EdgeStrategy, WindowSet, stack_context
from .losses import binary_cross_entropy, masked_cross_entropy, multitask_loss
from .model import build_model
from .optim import AdamHyper, AdamState, adam_step

log = logging.getLogger(__name__)


@dataclass
class ClassificationData:
    x: np.ndarray        # (M, 3, 300)
    y: np.ndarray        # (M,) 0/1
    session_ids: np.ndarray

    def __len__(self):
        return len(self.x)


@dataclass
class SegmentationData:
    x: np.ndarray            # (M, K, 3, 300)
    gait: np.ndarray         # (M, 300)
    mask: np.ndarray         # (M, 300) bool
    chorea: np.ndarray       # (M, 300)
    chorea_mask: np.ndarray  # (M, 300) bool
    session_ids: np.ndarray
    start_index: np.ndarray

    def __len__(self):
        return len(self.x)


def prepare_classification(ws):
    keep = ws.window_label >= 0
    return ClassificationData(ws.data[keep], ws.window_label[keep].astype(np.int64), ws.session_ids[keep])


def prepare_segmentation(ws, only_active=True):
    """Inputs, per-sample targets and loss masks for the window set's strategy.

    For the triple strategy the set should include gated-out windows
    (``active=False``) so they can serve as context; only active middle
    windows are scored.
    """
    if ws.strategy == EdgeStrategy.TRIPLE:
        x, tri = stack_context(ws, only_active)
        rows = tri[:, 1]
    else:
        rows = np.flatnonzero(ws.active) if only_active else np.arange(len(ws))
        x = ws.data[rows][:, None]
    mask = ws.scored_mask()[rows]
    chorea = ws.chorea[rows].astype(np.int64)
    return SegmentationData(
        x=x,
        gait=ws.gait[rows].astype(np.int64),
        mask=mask,
        chorea=np.clip(chorea, 0, None),
        chorea_mask=mask & (chorea >= 0),
        session_ids=ws.session_ids[rows],
        start_index=ws.start_index[rows],
    )


def _batches(n, batch_size, rng):
    order = rng.permutation(n)
    cuts = list(range(0, n, batch_size))
    chunks = [order[c:c + batch_size] for c in cuts]
    # batch-norm needs >1 value per channel in training mode
    if len(chunks) > 1 and len(chunks[-1]) == 1:
        chunks[-2] = np.concatenate([chunks[-2], chunks[-1]])
        chunks.pop()
    return chunks


def _batch_loss(model, data, idx, dtype):
    if isinstance(data, ClassificationData):
        x = torch.as_tensor(data.x[idx], dtype=dtype)
        y = torch.as_tensor(data.y[idx], dtype=dtype)
        return binary_cross_entropy(model.classify_logit(x), y)
    x = torch.as_tensor(data.x[idx], dtype=dtype)
    out = model.segment(x)
    gait_loss, _ = masked_cross_entropy(out["gait"], data.gait[idx], data.mask[idx])
    chorea_loss = None
    if "chorea" in out:
        chorea_loss, _ = masked_cross_entropy(out["chorea"], data.chorea[idx], data.chorea_mask[idx])
    return multitask_loss(gait_loss, chorea_loss)


def train(cfg, data, h=None, epochs=50, seed=0, freeze_encoder=False, patience=10, min_delta=1e-4,
          dtype=torch.float64, model=None, progress=None):
    """Fit a model; returns ``(model, history)``.

    ``data`` is a WindowSet or prepared Classification/SegmentationData.
    History holds one ``{"epoch", "loss", "steps"}`` record per epoch. Training
    stops early once the epoch-mean loss has not improved by ``min_delta``
    for ``patience`` epochs (``patience=None`` disables this).
    """
    h = (h or AdamHyper()).validate()
    if isinstance(data, WindowSet):
        data = prepare_classification(data) if cfg.head == "classification" else prepare_segmentation(data)
    if cfg.head == "classification" and not isinstance(data, ClassificationData):
        raise ConfigError("classification head needs window-labelled data")
    if cfg.head != "classification" and not isinstance(data, SegmentationData):
        raise ConfigError("segmentation heads need per-sample labelled data")
    if len(data) == 0:
        raise ConfigError("training set is empty after gating")
    if len(data) < 2 and isinstance(data, ClassificationData):
        raise ConfigError("need at least two windows to train with batch normalization")

    torch.manual_seed(seed)
    if model is None:
        model = build_model(cfg, seed=seed, dtype=dtype)
    model.train()
    if freeze_encoder:
        model.encoder.eval()
    params = {n: p for n, p in model.named_parameters() if not (freeze_encoder and n.startswith("encoder."))}
    for n, p in model.named_parameters():
        p.requires_grad_(n in params)

    rng = np.random.default_rng(seed)
    state = AdamState()
    history = []
    best, stale, step = np.inf, 0, 0
    for epoch in range(1, epochs + 1):
        total, count, steps = 0.0, 0, 0
        for idx in _batches(len(data), h.batch_size, rng):
            for p in params.values():
                p.grad = None
            loss = _batch_loss(model, data, idx, dtype)
            if not torch.isfinite(loss):
                raise NumericalError(f"non-finite loss at epoch {epoch}")
            loss.backward()
            step += 1
            adam_step(params, {n: p.grad for n, p in params.items()}, state, h, step)
            total += float(loss.detach()) * len(idx)
            count += len(idx)
            steps += 1
        mean_loss = total / count
        history.append({"epoch": epoch, "loss": mean_loss, "steps": steps})
        if progress is not None:
            progress(epoch, mean_loss)
        if mean_loss < best - min_delta:
            best, stale = mean_loss, 0
        else:
            stale += 1
            if patience is not None and stale >= patience:
                log.info("early stop at epoch %d (no improvement for %d epochs)", epoch, patience)
                break
    model.eval()
    for p in model.parameters():
        p.requires_grad_(True)
    return model, history


@torch.no_grad()
def predict_windows(model, x, batch_size=256):
    """Gait probability per (3, 300) window."""
    model.eval()
    dtype = next(model.parameters()).dtype
    out = [torch.sigmoid(model.classify_logit(torch.as_tensor(x[i:i + batch_size], dtype=dtype))).numpy()
           for i in range(0, len(x), batch_size)]
    return np.concatenate(out) if out else np.zeros(0)


@torch.no_grad()
def predict_segments(model, x, batch_size=128, chorea=False):
    """Per-sample gait probability (M, 300) for (M, K, 3, 300) inputs.

    With ``chorea=True`` also returns (M, 5, 300) chorea-level probabilities.
    """
    model.eval()
    dtype = next(model.parameters()).dtype
    gait, ch = [], []
    for i in range(0, len(x), batch_size):
        out = model.segment(torch.as_tensor(x[i:i + batch_size], dtype=dtype))
        gait.append(torch.softmax(out["gait"], dim=1)[:, 1].numpy())
        if chorea and "chorea" in out:
            ch.append(torch.softmax(out["chorea"], dim=1).numpy())
    g = np.concatenate(gait) if gait else np.zeros((0, x.shape[-1]))
    if chorea:
        return g, (np.concatenate(ch) if ch else None)
    return g
