"""Central finite-difference check of autograd gradients."""

from __future__ import annotations

import numpy as np
import torch

MAGNITUDE_FLOOR = 1e-10


def _central(view, j, loss_fn, module, eps):
    orig = view[j].item()
    view[j] = orig + eps
    f_plus = float(loss_fn(module))
    view[j] = orig - eps
    f_minus = float(loss_fn(module))
    view[j] = orig
    # second value bounds the rounding error of the quotient, a few ulps of the loss over the step
    noise = 8 * np.finfo(np.float64).eps * max(abs(f_plus), abs(f_minus)) / eps
    return (f_plus - f_minus) / (2 * eps), noise


def _numeric(view, j, loss_fn, module, eps, agree, max_halvings):
    """Central difference, shrinking the step while a ReLU kink sits inside the stencil.

    On a smooth stretch the estimates at ``eps`` and ``eps/2`` agree to
    within truncation error; a kink makes them jump apart. Returns the
    estimate, its rounding bound and the number of halvings used.
    """
    prev, prev_noise = _central(view, j, loss_fn, module, eps)
    for k in range(1, max_halvings + 1):
        cur, noise = _central(view, j, loss_fn, module, eps / 2 ** k)
        if abs(cur - prev) <= agree * max(abs(cur), abs(prev)) + noise:
            return cur, noise, k - 1
        prev, prev_noise = cur, noise
    return prev, prev_noise, max_halvings


def grad_check(module, loss_fn, epsilon=1e-5, n_checks=200, seed=0, floor=MAGNITUDE_FLOOR, return_details=False,
               kink_agree=1e-6, max_halvings=3):
    """Max relative error between analytic and central-difference gradients.

    ``loss_fn(module)`` must return a scalar tensor and be a deterministic
    function of the parameters. ``n_checks`` entries are drawn uniformly from
    all trainable parameters. Entries where both gradient estimates fall
    below ``floor`` in magnitude are skipped (saturated or dead units).
    When the estimates at ``epsilon`` and ``epsilon/2`` disagree by more
    than ``kink_agree`` (relative) the step is halved, up to
    ``max_halvings`` times; ``max_halvings=0`` gives a plain fixed-step check.
    The relative error of an entry discounts the rounding bound of its
    difference quotient (a few ulps of the loss over the step), which
    matters only for entries far smaller than the typical gradient.
    Check at a generic parameter point: with zero biases a ReLU can sit
    exactly on its kink, where the one-sided slopes differ.
    """
    params = [(n, p) for n, p in module.named_parameters() if p.requires_grad]
    for _, p in params:
        if p.dtype != torch.float64:
            raise TypeError("gradient checks run in double precision; cast the module with .double()")
    module.zero_grad(set_to_none=True)
    loss = loss_fn(module)
    loss.backward()
    analytic = {n: (p.grad.detach().clone() if p.grad is not None else torch.zeros_like(p)) for n, p in params}

    sizes = np.array([p.numel() for _, p in params])
    total = int(sizes.sum())
    rng = np.random.default_rng(seed)
    picks = rng.choice(total, size=min(n_checks, total), replace=False)
    offsets = np.concatenate([[0], np.cumsum(sizes)])

    worst, checked, skipped, kinks = 0.0, 0, 0, 0
    details = []
    with torch.no_grad():
        for flat in np.sort(picks):
            k = int(np.searchsorted(offsets, flat, side="right") - 1)
            name, p = params[k]
            j = int(flat - offsets[k])
            view = p.view(-1)
            if max_halvings:
                numeric, noise, shrunk = _numeric(view, j, loss_fn, module, epsilon, kink_agree, max_halvings)
                kinks += shrunk > 0
            else:
                numeric, noise = _central(view, j, loss_fn, module, epsilon)
            a = float(analytic[name].view(-1)[j])
            scale = max(abs(a), abs(numeric))
            if scale < floor:
                skipped += 1
                continue
            raw = abs(a - numeric) / scale
            # disagreement within the quotient's own rounding bound is not gradient error
            rel = max(0.0, abs(a - numeric) - noise) / scale
            checked += 1
            worst = max(worst, rel)
            if return_details:
                details.append((name, j, a, numeric, rel, raw))
    module.zero_grad(set_to_none=True)
    if return_details:
        return worst, {"checked": checked, "skipped": skipped, "kinks": kinks, "entries": details}
    return worst
