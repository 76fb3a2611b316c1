"""Run configuration: JSON document with published defaults, dotted overrides."""
from __future__ import annotations

import copy
import json

DEFAULTS = {
    "seed": 0,
    "out_dir": "out",
    "data": {
        "subjects": None,
        "curves": None,
    },
    "grid": {"width": 5.0, "max_time": 100.0},
    "train": {
        "head": "csm",
        "n_causes": 2,
        "cause": 1,
        "hidden": [32, 64, 32],
        "lr": 0.001,
        "batch_size": 64,
        "max_epochs": 500,
        "patience": 20,
        "val_fraction": 0.1,
        "n_basis": 3,
        "basis_grid_search": False,
        "basis_grid": [2, 3, 4, 5, 6, 7, 8],
        "time_encoding": "scalar",
        "use_functional": True,
        "normalize_curves": True,
    },
    "mvi": {
        "enabled": True,
        "eta": 0.003,
        "decay": 0.1,
        "milestones": [50, 100],
        "noise": True,
        "pred_weight": 1.0,
        "i_repeats": 1,
        "corr_threshold": 0.2,
        "k_max": 5,
        "ridge": 1e-3,
        "max_epochs": 150,
    },
    "simulate": {
        "n": 1000,
        "n_train": 800,
        "n_test": 200,
        "functional": True,
        "missing_rate": 0.0,
    },
    "evaluate": {
        "t0": 0.0,
        "horizons": [100.0],
    },
}


def load_config(path=None, overrides=()):
    """Merge defaults, an optional JSON file, and dotted-path overrides."""
    cfg = copy.deepcopy(DEFAULTS)
    if path:
        with open(path) as fh:
            _deep_update(cfg, json.load(fh))
    for item in overrides:
        if "=" not in item:
            raise ValueError("override %r is not of the form key.path=value" % item)
        key, _, raw = item.partition("=")
        _set_dotted(cfg, key.strip(), _parse_value(raw.strip()))
    return cfg


def _deep_update(base, update):
    for k, v in update.items():
        if isinstance(v, dict) and isinstance(base.get(k), dict):
            _deep_update(base[k], v)
        else:
            base[k] = v


def _set_dotted(cfg, dotted, value):
    parts = dotted.split(".")
    node = cfg
    for p in parts[:-1]:
        node = node.setdefault(p, {})
    node[parts[-1]] = value


def _parse_value(raw):
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        return raw


def dump_config(path, cfg):
    with open(path, "w") as fh:
        json.dump(cfg, fh, sort_keys=True, indent=2)
        fh.write("\n")
