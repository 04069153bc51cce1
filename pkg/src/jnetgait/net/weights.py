"""Tensor-manifest weight files.

A manifest is a directory holding ``index.json`` and ``tensors.bin``. The
index maps each tensor name to ``{"shape", "dtype", "offset", "nbytes"}``
where offset/nbytes locate its raw little-endian bytes in the blob. The
index also records the model configuration.
"""

from __future__ import annotations

import json
import logging
from pathlib import Path

import numpy as np
import torch

from ..errors import ConfigError, FormatError
from .model import ModelConfig, build_model

log = logging.getLogger(__name__)

INDEX = "index.json"
BLOB = "tensors.bin"
_DTYPES = {torch.float64: "<f8", torch.float32: "<f4", torch.int64: "<i8"}


class WeightImportError(FormatError):
    """Manifest tensors do not fit the requested configuration."""


def export_weights(model, path):
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    index = {"config": model.cfg.to_dict(), "tensors": {}}
    offset = 0
    with (path / BLOB).open("wb") as fh:
        for name, t in model.state_dict().items():
            code = _DTYPES.get(t.dtype)
            if code is None:
                raise ConfigError(f"unsupported dtype {t.dtype} for {name}")
            raw = t.detach().cpu().contiguous().numpy().astype(code, copy=False).tobytes()
            index["tensors"][name] = {"shape": list(t.shape), "dtype": code, "offset": offset, "nbytes": len(raw)}
            fh.write(raw)
            offset += len(raw)
    (path / INDEX).write_text(json.dumps(index, indent=1))
    return path


def read_manifest(path):
    path = Path(path)
    try:
        index = json.loads((path / INDEX).read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(f"bad manifest index: {exc}", path=path / INDEX) from None
    blob = (path / BLOB).read_bytes()
    tensors = {}
    for name, meta in index["tensors"].items():
        arr = np.frombuffer(blob, dtype=meta["dtype"], count=int(np.prod(meta["shape"], dtype=np.int64)),
                            offset=meta["offset"]).reshape(meta["shape"])
        tensors[name] = torch.from_numpy(arr.copy())
    return index, tensors


def load_model(path, dtype=None):
    """Full model (encoder and heads) from a manifest, bit-exact."""
    index, tensors = read_manifest(path)
    cfg = ModelConfig.from_dict(index["config"])
    model = build_model(cfg)
    ref = next(iter(tensors.values()))
    model = model.to(dtype or (ref.dtype if ref.is_floating_point() else torch.float64))
    _load_into(model, tensors, prefix="")
    model.eval()
    return model


def _load_into(model, tensors, prefix):
    state = model.state_dict()
    wanted = {n: t for n, t in state.items() if n.startswith(prefix)}
    bad = []
    for name, t in wanted.items():
        src = tensors.get(name)
        if src is None:
            bad.append(f"{name} (missing)")
        elif tuple(src.shape) != tuple(t.shape):
            bad.append(f"{name} (expected {tuple(t.shape)}, got {tuple(src.shape)})")
    if bad:
        raise WeightImportError("manifest does not match the model configuration: " + "; ".join(bad))
    with torch.no_grad():
        for name, t in wanted.items():
            t.copy_(tensors[name].to(t.dtype))


def import_weights(path, cfg, seed=0, dtype=torch.float64):
    """Model for ``cfg`` with encoder tensors taken from a manifest.

    Heads are freshly initialised from ``seed``. A missing manifest falls
    back to a seeded random encoder with a logged notice.
    """
    model = build_model(cfg, seed=seed, dtype=dtype)
    path = Path(path) if path else None
    if path is None or not (path / INDEX).exists():
        log.warning("weight manifest %s not found; using seeded random initialization (seed=%d)", path, seed)
        return model
    _, tensors = read_manifest(path)
    _load_into(model, tensors, prefix="encoder.")
    return model
