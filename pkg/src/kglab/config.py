"""Experiment configuration: YAML file, ``--set key.path=value`` overrides, output root.

Precedence, lowest first: built-in defaults, the config file, ``--set``
overrides, dedicated command-line flags.  Relative output paths resolve
against ``$KGLAB_OUTPUT_ROOT`` (default: the working directory).
"""

from __future__ import annotations

import copy
import hashlib
import json
import os
from pathlib import Path

import numpy as np
import yaml

from .errors import ConfigurationError

ENV_ROOT = "KGLAB_OUTPUT_ROOT"

DEFAULTS = {
    "model": {"kind": "critical_power", "d": 3},
    # "supplied": take model.c as given; "computed": Trudinger-Moser constant (exp2d)
    "mass_shift": "supplied",
    "m": None,
    "groundstate": {"N": 8192, "r_max": 20.0, "bracket": [0.1, 10.0], "minimax_samples": 20},
    "tm": {"N": 1500, "r_max": 30.0, "n_starts": 5, "max_iter": 3000},
    "state": {"kind": "truncated_ground_state", "lam": 0.5, "mu": 45.0, "rho": 100.0 / 45.0,
              "N": 20001, "r_max": 40.0},
    "evolve": {"dt": 0.001, "T_final": 30.0, "record_every": 1},
    "sweep": {"axis": "state.lam", "values": [0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0, 1.1, 1.2, 1.3]},
    "output": "runs",
    "seed": 0,
    "workers": 4,
}

# keys that do not change results
_VOLATILE = ("output", "workers")


def _merge(base, upd):
    out = copy.deepcopy(base)
    for k, v in (upd or {}).items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def set_path(cfg, dotted, value):
    keys = dotted.split(".")
    d = cfg
    for k in keys[:-1]:
        if not isinstance(d.get(k), dict):
            d[k] = {}
        d = d[k]
    d[keys[-1]] = value
    return cfg


def get_path(cfg, dotted):
    d = cfg
    for k in dotted.split("."):
        if not isinstance(d, dict) or k not in d:
            raise ConfigurationError(f"config has no key {dotted!r}")
        d = d[k]
    return d


def parse_override(text):
    if "=" not in text:
        raise ConfigurationError(f"override must look like key.path=value, got {text!r}")
    key, raw = text.split("=", 1)
    try:
        return key.strip(), yaml.safe_load(raw)
    except yaml.YAMLError as exc:
        raise ConfigurationError(f"cannot parse override value {raw!r}: {exc}") from None


def load_config(path=None, overrides=()):
    cfg = copy.deepcopy(DEFAULTS)
    if path is not None:
        try:
            with open(path) as fh:
                user = yaml.safe_load(fh) or {}
        except OSError as exc:
            raise ConfigurationError(f"cannot read config {path}: {exc}") from None
        except yaml.YAMLError as exc:
            raise ConfigurationError(f"invalid YAML in {path}: {exc}") from None
        if not isinstance(user, dict):
            raise ConfigurationError("config file must hold a mapping")
        # a model given in the file replaces the default model wholesale
        if "model" in user:
            cfg["model"] = {}
        cfg = _merge(cfg, user)
    for item in overrides:
        key, val = parse_override(item) if isinstance(item, str) else item
        set_path(cfg, key, val)
    return cfg


def _plain(x):
    if isinstance(x, dict):
        return {str(k): _plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    if isinstance(x, np.generic):
        return x.item()
    return x


def config_hash(cfg):
    body = {k: v for k, v in cfg.items() if k not in _VOLATILE}
    text = json.dumps(_plain(body), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode()).hexdigest()[:16]


def output_dir(cfg):
    root = Path(os.environ.get(ENV_ROOT, "."))
    out = Path(cfg.get("output") or "runs")
    path = out if out.is_absolute() else root / out
    path.mkdir(parents=True, exist_ok=True)
    return path


def dump(cfg, path):
    with open(path, "w") as fh:
        yaml.safe_dump(_plain(cfg), fh, sort_keys=True)
    return path


def sweep_values(cfg):
    sw = cfg.get("sweep") or {}
    if "values" in sw and sw["values"] is not None:
        vals = [float(v) for v in sw["values"]]
    elif {"start", "stop", "num"} <= set(sw):
        vals = [float(v) for v in np.linspace(sw["start"], sw["stop"], int(sw["num"]))]
    else:
        raise ConfigurationError("sweep needs 'values' or 'start'/'stop'/'num'")
    if not vals:
        raise ConfigurationError("sweep axis is empty")
    return sw.get("axis", "state.lam"), sorted(vals)
