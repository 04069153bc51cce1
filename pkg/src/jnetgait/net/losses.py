"""Cross-entropy losses.

All losses return plain scalar tensors so they compose with autograd.
"""

import torch
from torch.nn import functional as F


def masked_cross_entropy(logits, labels, mask):
    """Mean per-sample cross-entropy over samples where ``mask`` is set.

    ``logits`` is (B, C, T), ``labels`` and ``mask`` are (B, T). Masked-out
    samples contribute exactly zero, whatever their logits or labels. Returns
    ``(loss, skipped)``; ``skipped`` is True when no sample is valid, in which
    case the loss is a zero that still carries a graph.
    """
    mask = torch.as_tensor(mask).bool()
    labels = torch.as_tensor(labels).long()
    safe_labels = torch.where(mask, labels, torch.zeros_like(labels))
    logp = F.log_softmax(logits, dim=1)
    nll = -logp.gather(1, safe_labels.unsqueeze(1)).squeeze(1)
    nll = torch.where(mask, nll, torch.zeros_like(nll))
    n_valid = int(mask.sum())
    return nll.sum() / max(1, n_valid), n_valid == 0


def binary_cross_entropy(logit, target):
    """Unmasked cross-entropy of window labels against sigmoid logits."""
    target = torch.as_tensor(target, dtype=logit.dtype)
    return torch.mean(F.softplus(logit) - target * logit)


def multitask_loss(gait_loss, chorea_loss=None):
    """Unweighted sum; the chorea term is dropped when the head is disabled."""
    if chorea_loss is None:
        return gait_loss
    return gait_loss + chorea_loss
