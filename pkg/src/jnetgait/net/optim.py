from __future__ import annotations

from dataclasses import dataclass

import torch

from ..errors import ConfigError, NumericalError


@dataclass(frozen=True)
class AdamHyper:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    batch_size: int = 64

    def validate(self):
        if not self.lr > 0:
            raise ConfigError("learning rate must be positive")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ConfigError("Adam betas must lie in [0, 1)")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        return self


class AdamState:
    """First/second moment estimates keyed by parameter name."""

    def __init__(self):
        self.m = {}
        self.v = {}
        self.t = 0


@torch.no_grad()
def adam_step(params, grads, state, h, t):
    """One bias-corrected Adam update, in place on ``params``.

    ``params`` and ``grads`` map names to tensors of matching shape; a missing
    or ``None`` gradient leaves that tensor (and its moments) untouched.
    """
    if t < 1:
        raise ConfigError(f"Adam step index must be >= 1, got {t}")
    for name, g in grads.items():
        if g is not None and not torch.isfinite(g).all():
            bad = int((~torch.isfinite(g)).sum())
            raise NumericalError(f"non-finite gradient in {name!r} ({bad} entries) at step {t}")
    c1 = 1.0 - h.beta1 ** t
    c2 = 1.0 - h.beta2 ** t
    for name, p in params.items():
        g = grads.get(name)
        if g is None:
            continue
        if g.shape != p.shape:
            raise ConfigError(f"gradient shape {tuple(g.shape)} != parameter shape {tuple(p.shape)} for {name!r}")
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = torch.zeros_like(p)
            state.v[name] = torch.zeros_like(p)
        v = state.v[name]
        m.mul_(h.beta1).add_(g, alpha=1.0 - h.beta1)
        v.mul_(h.beta2).addcmul_(g, g, value=1.0 - h.beta2)
        p.sub_(h.lr * (m / c1) / ((v / c2).sqrt() + h.eps))
    state.t = t
    return params
