"""Experiment configuration: an INI document with sections run/data/
model/train/sample/eval, strict key checking, typed defaults, and
``section.key=value`` overrides.

The fully resolved document (defaults filled in) is rendered back to
text and echoed into the output directory so any run can be repeated
from its artifacts alone.
"""

from __future__ import annotations

import configparser
import copy
import os

import numpy as np

from .errors import ConfigError
from .synthetic import (
    GAUSS2D,
    GAUSS2D_3PARAM,
    ForwardSpec,
    PriorSpec,
    default_3param_grid,
    default_gamma_grid,
)

OUTPUT_ROOT_ENV = "EIPKIT_OUTPUT_ROOT"

# (type, default); types: int, float, str, bool, floats, ints,
# choice:<a|b|c>, points (semicolon-separated mu1:mu2:gamma1 triples)
SCHEMA = {
    "run": {
        "seed": ("int", 0),
        "output_dir": ("str", "out"),
        "experiment": ("str", "gauss2d"),
    },
    "data": {
        "family": (f"choice:{GAUSS2D}|{GAUSS2D_3PARAM}", GAUSS2D),
        "n_per": ("int", 4000),
        "grid_per_interval": ("int", 10),
        "corr_per_interval": ("int", 2),
        "mean_per_interval": ("int", 2),
        "a11": ("float", 1.0),
        "a12": ("float", 0.5),
        "a21": ("float", 0.5),
        "a22": ("float", 2.0),
        "noise_mean_scale": ("float", 0.2),
        "noise_var_scale": ("float", 0.25),
    },
    "model": {
        "kind": ("choice:fm|ddpm", "fm"),
        "conditioning": ("choice:none|oracle|learned|moments", "learned"),
        "encoder": ("choice:deepset|settransformer", "deepset"),
        "k": ("int", 3),
        "hidden": ("int", 64),
        "width": ("int", 128),
        "heads": ("int", 4),
        "inducing": ("int", 16),
        "moments_p": ("int", 3),
        "t_steps": ("int", 100),
        "beta_start": ("float", 1e-4),
        "beta_end": ("float", 0.02),
        "sigma_mode": ("choice:beta_tilde|beta", "beta_tilde"),
        "dt": ("float", 0.01),
    },
    "train": {
        "steps": ("int", 50000),
        "n_subset": ("int", 4000),
        "batch": ("int", 256),
        "lr": ("float", 1e-3),
        "optimizer": ("choice:adam|sgd", "adam"),
        "replace": ("bool", False),
        "loss_log_every": ("int", 100),
    },
    "sample": {
        "strategy": ("choice:auto|exact|duplicate|repeated_subsets", "auto"),
    },
    "eval": {
        "n_samples": ("int", 10000),
        "gammas": ("floats", (-0.9, 0.0, 0.9)),
        "points": ("points", ()),
        "n_projections": ("int", 128),
        "tarp_pairs": ("int", 500),
        "tarp_samples": ("int", 200),
        "tarp_gamma": ("float", 0.9),
        "nprime_list": ("ints", (10, 100, 1000, 4000)),
        "nprime_reps": ("int", 5),
        "ntrain_list": ("ints", (5, 50, 4000)),
        "nprime_gamma": ("float", 0.9),
    },
}


def _parse_bool(raw: str) -> bool:
    lowered = raw.strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {raw!r}")


def _parse_value(type_spec: str, raw, where: str):
    if not isinstance(raw, str):
        return raw
    try:
        if type_spec == "int":
            return int(raw)
        if type_spec == "float":
            return float(raw)
        if type_spec == "str":
            return raw.strip()
        if type_spec == "bool":
            return _parse_bool(raw)
        if type_spec == "floats":
            return tuple(float(v) for v in raw.split(",") if v.strip())
        if type_spec == "ints":
            return tuple(int(v) for v in raw.split(",") if v.strip())
        if type_spec == "points":
            points = []
            for chunk in raw.split(";"):
                chunk = chunk.strip()
                if not chunk:
                    continue
                parts = [float(v) for v in chunk.split(":")]
                if len(parts) != 3:
                    raise ConfigError(
                        f"{where}: points are mu1:mu2:gamma1 triples"
                    )
                points.append(tuple(parts))
            return tuple(points)
        if type_spec.startswith("choice:"):
            allowed = type_spec[len("choice:"):].split("|")
            value = raw.strip()
            if value not in allowed:
                raise ConfigError(
                    f"{where}: {value!r} not one of {', '.join(allowed)}"
                )
            return value
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"{where}: cannot parse {raw!r}") from exc
    raise ConfigError(f"unknown schema type {type_spec!r}")


def default_config() -> dict:
    return {section: {key: copy.copy(spec[1]) for key, spec in keys.items()}
            for section, keys in SCHEMA.items()}


def load_config(path=None, overrides=()) -> dict:
    """Resolved configuration: defaults, then file, then overrides."""
    cfg = default_config()
    if path is not None:
        parser = configparser.ConfigParser(interpolation=None)
        try:
            with open(path, "r", encoding="utf-8") as f:
                parser.read_file(f)
        except configparser.Error as exc:
            raise ConfigError(f"malformed config {path}: {exc}") from exc
        for section in parser.sections():
            if section not in SCHEMA:
                raise ConfigError(f"unknown config section [{section}]")
            for key, raw in parser.items(section):
                if key not in SCHEMA[section]:
                    raise ConfigError(f"unknown config key {section}.{key}")
                cfg[section][key] = _parse_value(
                    SCHEMA[section][key][0], raw, f"{section}.{key}")
    for item in overrides:
        if "=" not in item or "." not in item.split("=", 1)[0]:
            raise ConfigError(f"override must be section.key=value: {item!r}")
        target, raw = item.split("=", 1)
        section, key = target.split(".", 1)
        if section not in SCHEMA or key not in SCHEMA[section]:
            raise ConfigError(f"unknown config key {section}.{key}")
        cfg[section][key] = _parse_value(
            SCHEMA[section][key][0], raw, f"{section}.{key}")
    return cfg


def render_config(cfg: dict) -> str:
    """Stable INI text of a resolved configuration."""
    lines = []
    for section, keys in SCHEMA.items():
        lines.append(f"[{section}]")
        for key in keys:
            value = cfg[section][key]
            if isinstance(value, bool):
                text = "true" if value else "false"
            elif isinstance(value, float):
                text = repr(value)
            elif isinstance(value, tuple):
                if key == "points":
                    text = ";".join(":".join(repr(float(v)) for v in p)
                                    for p in value)
                else:
                    text = ",".join(repr(v) if isinstance(v, float) else str(v)
                                    for v in value)
            else:
                text = str(value)
            lines.append(f"{key} = {text}")
        lines.append("")
    return "\n".join(lines)


def resolve_output_dir(cfg: dict) -> str:
    path = cfg["run"]["output_dir"]
    root = os.environ.get(OUTPUT_ROOT_ENV)
    if root and not os.path.isabs(path):
        path = os.path.join(root, path)
    os.makedirs(path, exist_ok=True)
    return path


def forward_spec(cfg: dict) -> ForwardSpec:
    data = cfg["data"]
    return ForwardSpec(
        matrix=((data["a11"], data["a12"]), (data["a21"], data["a22"])),
        noise_mean_scale=data["noise_mean_scale"],
        noise_var_scale=data["noise_var_scale"],
    )


def training_priors(cfg: dict) -> list:
    data = cfg["data"]
    if data["family"] == GAUSS2D:
        return [PriorSpec(gamma=g)
                for g in default_gamma_grid(data["grid_per_interval"])]
    return default_3param_grid(data["corr_per_interval"],
                               data["mean_per_interval"])


def eval_priors(cfg: dict, full: bool = False) -> list:
    data = cfg["data"]
    if data["family"] == GAUSS2D:
        if full:
            grid = np.linspace(-1.0, 1.0, 201)
        else:
            grid = cfg["eval"]["gammas"]
        return [PriorSpec(gamma=float(g)) for g in grid]
    points = cfg["eval"]["points"]
    if not points:
        raise ConfigError("eval.points is required for the three-parameter "
                          "family")
    return [PriorSpec(family=GAUSS2D_3PARAM, mu1=p[0], mu2=p[1], gamma1=p[2])
            for p in points]
