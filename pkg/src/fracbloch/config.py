"""Run configuration: TOML files with sections mirroring the module layout.

A run is specified by a preset name, a config file, or both (the file
overlays the preset).  Validation produces explicit field-level messages;
the fully resolved configuration is written next to the outputs so any run
can be reproduced from its own directory.
"""

from __future__ import annotations

import importlib.resources
import os

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

import numpy as np

from .errors import ConfigError
from .potential import FourierPotential, Modulation, potential_from_name

__all__ = ["load_run_config", "resolve_config", "write_resolved_config",
           "build_potential", "build_modulation", "preset_names"]

EXPERIMENTS = ("bands", "dirac", "evolve", "validate", "shallow-check",
               "product-rule")

DEFAULTS = {
    "experiment": {"kind": "", "seed": 1234, "threads": 1},
    "operator": {"sigma": 2.0},
    "potential": {"name": "numpoten", "scale": 1.0, "coeffs": []},
    "perturbation": {"name": "nummodu", "strength": 0.0, "coeffs": []},
    "modulation": {"kind": "gaussian", "amplitude": 1.0, "center": 0.0,
                   "width": 1.0},
    "bands": {"mode": "path", "N": 12, "count": 2, "npoints": 81,
              "lambda_range": [-0.1, 0.1], "radius": 0.4, "grid_points": 17,
              "sigmas": []},
    "dirac": {"N": 16, "cone": True, "cone_directions": 8,
              "gap_eps": [0.01, 0.02, 0.03, 0.04, 0.05]},
    "dynamics": {"epsilon": 0.1, "mu": 1, "cells": 64, "points_per_cell": 8,
                 "envelope_points_per_cell": 4, "dt": 1e-4,
                 "dt_envelope": 2.5e-4, "T": 0.5, "s": 1, "order": "leading",
                 "amp1": [1.0, 0.0], "amp2": [0.0, 0.0], "width": 0.4,
                 "N": 16, "frames": []},
    "validate": {"eps_list": [0.2, 0.1, 0.05], "compare_corrected": True,
                 "corrected_eps": 0.1, "min_rate": 0.8},
    "shallow": {"eps_pot": 0.01},
    "product_rule": {"eps_list": [0.1, 0.05], "s": 1, "width": 0.4,
                     "cells": 64, "points_per_cell": 8},
}


def preset_names() -> list:
    root = importlib.resources.files("fracbloch") / "presets"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".toml"))


def _load_preset(name: str) -> dict:
    res = importlib.resources.files("fracbloch") / "presets" / f"{name}.toml"
    if not res.is_file():
        raise ConfigError(
            f"unknown preset {name!r}; available: {', '.join(preset_names())}")
    return tomllib.loads(res.read_text())


def _deep_merge(base: dict, overlay: dict) -> dict:
    out = dict(base)
    for key, val in overlay.items():
        if isinstance(val, dict) and isinstance(out.get(key), dict):
            out[key] = _deep_merge(out[key], val)
        else:
            out[key] = val
    return out


def load_run_config(preset: str | None = None,
                    config_path: str | None = None) -> dict:
    """Assemble the raw configuration from a preset and/or a file."""
    if preset is None and config_path is None:
        raise ConfigError("provide --preset and/or --config")
    raw: dict = {}
    if preset is not None:
        raw = _load_preset(preset)
    if config_path is not None:
        if not os.path.exists(config_path):
            raise ConfigError(f"config file not found: {config_path}")
        with open(config_path, "rb") as fh:
            try:
                overlay = tomllib.load(fh)
            except tomllib.TOMLDecodeError as exc:
                raise ConfigError(f"config parse error in {config_path}: {exc}")
        raw = _deep_merge(raw, overlay)
    return raw


def _check_type(section, key, value, expect):
    if expect is float:
        if not isinstance(value, (int, float)) or isinstance(value, bool):
            raise ConfigError(f"[{section}] {key}: expected a number, got {value!r}")
        return float(value)
    if expect is int:
        if not isinstance(value, int) or isinstance(value, bool):
            raise ConfigError(f"[{section}] {key}: expected an integer, got {value!r}")
        return value
    if expect is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"[{section}] {key}: expected true/false, got {value!r}")
        return value
    if expect is str:
        if not isinstance(value, str):
            raise ConfigError(f"[{section}] {key}: expected a string, got {value!r}")
        return value
    if expect is list:
        if not isinstance(value, list):
            raise ConfigError(f"[{section}] {key}: expected a list, got {value!r}")
        return value
    raise AssertionError(expect)


def resolve_config(raw: dict, kind: str) -> dict:
    """Fill defaults and validate every field; returns the resolved config."""
    if kind not in EXPERIMENTS:
        raise ConfigError(
            f"unknown experiment kind {kind!r}; choose from {EXPERIMENTS}")
    unknown = set(raw) - set(DEFAULTS)
    if unknown:
        raise ConfigError(f"unknown config sections: {sorted(unknown)}")
    cfg = {}
    for section, defaults in DEFAULTS.items():
        given = raw.get(section, {})
        if not isinstance(given, dict):
            raise ConfigError(f"[{section}] must be a table")
        bad = set(given) - set(defaults)
        if bad:
            raise ConfigError(f"[{section}] unknown keys: {sorted(bad)}")
        merged = {}
        for key, dval in defaults.items():
            val = given.get(key, dval)
            merged[key] = _check_type(section, key, val, type(dval)) \
                if not isinstance(dval, list) else _check_type(section, key, val, list)
        cfg[section] = merged
    cfg["experiment"]["kind"] = kind

    sigma = cfg["operator"]["sigma"]
    if not (1.0 < sigma <= 2.0):
        raise ConfigError(f"[operator] sigma={sigma} outside (1, 2]")
    if cfg["bands"]["mode"] not in ("path", "grid"):
        raise ConfigError("[bands] mode must be 'path' or 'grid'")
    if cfg["bands"]["npoints"] < 2:
        raise ConfigError("[bands] npoints must be >= 2")
    if cfg["dynamics"]["mu"] not in (-1, 0, 1):
        raise ConfigError("[dynamics] mu must be -1, 0, or +1")
    if cfg["dynamics"]["order"] not in ("leading", "corrected"):
        raise ConfigError("[dynamics] order must be 'leading' or 'corrected'")
    if cfg["dynamics"]["dt"] <= 0 or cfg["dynamics"]["T"] < 0:
        raise ConfigError("[dynamics] dt must be > 0 and T >= 0")
    if cfg["dynamics"]["s"] not in (0, 1, 2, 3):
        raise ConfigError("[dynamics] s must be one of 0, 1, 2, 3")
    if cfg["shallow"]["eps_pot"] > 0.05:
        raise ConfigError("[shallow] eps_pot must be <= 0.05")
    if cfg["validate"]["eps_list"] and sorted(
            cfg["validate"]["eps_list"], reverse=True) != cfg["validate"]["eps_list"]:
        raise ConfigError("[validate] eps_list must be decreasing")
    return cfg


def build_potential(section: dict, which: str) -> FourierPotential:
    """Potential from a builtin name or an explicit coefficient list."""
    coeffs = section.get("coeffs") or []
    if coeffs:
        table = {}
        for row in coeffs:
            if len(row) != 4:
                raise ConfigError(
                    f"[{which}] coeffs rows must be [m1, m2, re, im]")
            m1, m2, re, im = row
            table[(int(m1), int(m2))] = complex(float(re), float(im))
        pot = FourierPotential(table, name=f"{which}-custom")
    else:
        pot = potential_from_name(section["name"])
    scale = section.get("scale", 1.0)
    if scale != 1.0:
        pot = pot.scaled(float(scale))
    return pot


def build_modulation(section: dict) -> Modulation:
    return Modulation(kind=section["kind"], amplitude=section["amplitude"],
                      center=section["center"], width=section["width"])


def _toml_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (int,)):
        return str(v)
    if isinstance(v, float):
        return format(v, ".17g")
    if isinstance(v, str):
        return '"' + v.replace("\\", "\\\\").replace('"', '\\"') + '"'
    if isinstance(v, (list, tuple, np.ndarray)):
        return "[" + ", ".join(_toml_value(x) for x in v) + "]"
    raise ConfigError(f"cannot emit {type(v).__name__} to TOML")


def write_resolved_config(path: str, cfg: dict) -> None:
    """Emit the resolved config as TOML; re-running it reproduces the run."""
    lines = []
    for section, table in cfg.items():
        lines.append(f"[{section.replace('_', '-') if False else section}]")
        for key, val in table.items():
            lines.append(f"{key} = {_toml_value(val)}")
        lines.append("")
    with open(path, "w") as fh:
        fh.write("\n".join(lines))
