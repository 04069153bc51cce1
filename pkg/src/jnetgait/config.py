"""Flat ``key = value`` run configuration files.

One setting per line; ``#`` starts a comment; keys use the long flag name
with ``-`` or ``_`` interchangeably. Values given on the command line win
over the file, and the file wins over built-in defaults.

    # demo.cfg
    seed = 7
    n-hd = 4
    strategy = triple,plain
"""

from __future__ import annotations

import argparse
import math
from pathlib import Path

from .errors import ConfigError

TRUE = {"1", "true", "yes", "on"}
FALSE = {"0", "false", "no", "off"}

# numeric bounds checked after all sources are merged: (low, high, low_inclusive)
RANGES = {
    "seed": (0, 2**63 - 1, True),
    "jobs": (1, 1024, True),
    "n_hd": (0, 10_000, True),
    "n_hc": (0, 10_000, True),
    "duration_s": (0, math.inf, False),
    "fs": (0, math.inf, False),
    "gait_fraction": (0, 1, True),
    "unranked_fraction": (0, 0.999, True),
    "daily_hours": (0, 24 * 366, True),
    "daily_start_hour": (0, 24, True),
    "low_hz": (0, math.inf, False),
    "high_hz": (0, math.inf, False),
    "order": (1, 12, True),
    "gate_threshold": (0, math.inf, True),
    "kernel_size": (1, 99, True),
    "epochs": (1, 100_000, True),
    "patience": (1, 100_000, True),
    "lr": (0, 1, False),
    "batch_size": (1, 1_000_000, True),
    "k_folds": (2, 1000, True),
    "threshold": (0, 1, False),
    "min_wear": (0, 1, True),
}


def parse_bool(text, key="value"):
    t = str(text).strip().lower()
    if t in TRUE:
        return True
    if t in FALSE:
        return False
    raise ConfigError(f"{key}: expected a boolean, got {text!r}")


def normalize_key(key):
    return key.strip().lstrip("-").replace("-", "_")


def read_config(path):
    """Parse a config file into ``{key: raw string}``; keys normalized to underscores."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    out = {}
    for lineno, raw in enumerate(path.read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key = value")
        key, value = line.split("=", 1)
        key = normalize_key(key)
        if not key:
            raise ConfigError(f"{path}:{lineno}: empty key")
        if key in out:
            raise ConfigError(f"{path}:{lineno}: duplicate key {key!r}")
        out[key] = value.strip()
    return out


def write_config(values, path):
    """Inverse of ``read_config`` for a resolved namespace; ``None`` values are omitted."""
    lines = []
    for key in sorted(values):
        v = values[key]
        if v is None:
            continue
        if isinstance(v, bool):
            v = "true" if v else "false"
        lines.append(f"{key} = {v}")
    Path(path).write_text("\n".join(lines) + "\n")


def _actions(parser):
    return {a.dest: a for a in parser._actions if a.dest not in ("help", argparse.SUPPRESS)}


def apply_config(parser, values, known_keys):
    """Install config values as parser defaults so explicit flags still override them.

    ``known_keys`` is every key accepted by any subcommand: a single file may
    drive a whole pipeline, so keys meant for other subcommands are ignored
    here, while keys no subcommand knows are an error.
    """
    unknown = sorted(set(values) - set(known_keys))
    if unknown:
        raise ConfigError(f"unknown config key(s): {', '.join(unknown)}")
    actions = _actions(parser)
    defaults = {}
    for key, raw in values.items():
        action = actions.get(key)
        if action is None:
            continue
        if isinstance(action, (argparse._StoreTrueAction, argparse._StoreFalseAction)):
            # the key names the destination, so ``baseline = false`` reads naturally
            defaults[key] = parse_bool(raw, key)
        elif action.type is not None:
            try:
                defaults[key] = action.type(raw)
            except (TypeError, ValueError, argparse.ArgumentTypeError) as exc:
                raise ConfigError(f"{key}: {exc}") from None
        else:
            defaults[key] = raw
        if action.choices is not None and defaults[key] not in action.choices:
            raise ConfigError(f"{key}: {defaults[key]!r} not one of {sorted(action.choices)}")
    parser.set_defaults(**defaults)
    return defaults


def check_ranges(values):
    for key, (lo, hi, lo_inclusive) in RANGES.items():
        v = values.get(key)
        if v is None:
            continue
        ok = (v >= lo if lo_inclusive else v > lo) and v <= hi
        if not ok:
            bracket = "[" if lo_inclusive else "("
            raise ConfigError(f"{key}={v} outside {bracket}{lo}, {hi}]")
    if values.get("low_hz") is not None and values.get("high_hz") is not None:
        if not values["low_hz"] < values["high_hz"]:
            raise ConfigError("low_hz must be below high_hz")
