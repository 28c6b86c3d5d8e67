"""Experiment configuration: JSON files, dotted overrides, schema validation, defaults."""
from __future__ import annotations

import copy
import hashlib
import json
import math
from importlib import resources
from pathlib import Path
from typing import Any, Sequence

import jsonschema
import numpy as np

from .errors import ParseError, SchemaError

GOLDEN = (1 + math.sqrt(5)) / 2

DEFAULTS: dict[str, Any] = {
    "command": "analyze",
    "roof": "perron",
    "function": {"normalize_mean_zero": True},
    "step_function": None,
    "constants": {
        "c1": 0.5,
        "C_prime": 1.0,
        "C2": 0.0,
        "k": 100,
        "Upsilon": 10.0,
        "beta_tilde": None,
        "n_min_factor": 4.0,
        "ell_max": 8,
        "complexity_depth": 64,
        "B": 2.0,
        "ek_dps": 60,
        "max_residual": 0.1,
        "zero_mass_C": 1.0,
    },
    "grids": {
        "omega": [1.0, math.sqrt(2), GOLDEN],
        "R": {"min": 1.0, "max": 3e5, "per_decade": 8, "scale": "log"},
        "R_fejer": {"min": 6, "max": 16, "num": 21, "scale": "theta"},
        "R_product": {"min": 100.0, "max": 1e4, "num": 21, "scale": "log"},
        "t": {"t_max": 1e4, "dt": 0.05, "T": 1e5},
        "N": {"trace": 30, "membership": 100, "discrepancy_min": 1000,
              "discrepancy_max": 1000000},
        "k": [10, 100, 1000, 10000, 100000],
        "Upsilon": [100.0, 1000.0],
    },
    "partner": {"kind": "circle_rotation", "alphas": [GOLDEN - 1]},
    "seeds": 0,
    "samples": {"fejer": 64, "sup": 256, "correlation": 4},
    "output": "subflow_out",
}

# profiles used when the config gives none, cycled over the alphabet
DEFAULT_PROFILES = (
    [[0, 1.0], [1, 0.0]],
    [[0, 0.5], [0.5, -1.0], [1, 0.2]],
)


def schema() -> dict:
    text = resources.files("subflow").joinpath("config.schema.json").read_text()
    return json.loads(text)


GRID_KEYS = ("omega", "R", "R_fejer", "R_product")


def _merge(base: dict, over: dict) -> dict:
    # grid specs are replaced as a whole so that list and range forms never mix
    out = copy.deepcopy(base)
    for key, val in over.items():
        if isinstance(val, dict) and isinstance(out.get(key), dict) and key not in GRID_KEYS:
            out[key] = _merge(out[key], val)
        else:
            out[key] = copy.deepcopy(val)
    return out


def parse_override(token: str, value: str | None = None) -> tuple[list[str], Any]:
    """``--a.b.c=value`` (or a separate value) into a key path and a JSON-ish value."""
    body = token[2:] if token.startswith("--") else token
    if "=" in body:
        body, value = body.split("=", 1)
    if value is None:
        raise ParseError(f"override {token!r} has no value")
    path = [p for p in body.split(".") if p]
    if not path:
        raise ParseError(f"bad override {token!r}")
    try:
        parsed = json.loads(value)
    except json.JSONDecodeError:
        parsed = value
    return path, parsed


def apply_overrides(raw: dict, overrides: Sequence[tuple[list[str], Any]]) -> dict:
    out = copy.deepcopy(raw)
    for path, value in overrides:
        node = out
        for key in path[:-1]:
            if not isinstance(node.get(key), dict):
                node[key] = {}
            node = node[key]
        node[path[-1]] = value
    return out


def _validate(cfg: dict) -> None:
    validator = jsonschema.Draft202012Validator(schema())
    errors = sorted(validator.iter_errors(cfg), key=lambda e: list(e.absolute_path))
    if errors:
        e = errors[0]
        where = ".".join(str(p) for p in e.absolute_path) or "<root>"
        raise SchemaError(f"{where}: {e.message}")
    roof = cfg.get("roof")
    if isinstance(roof, list):
        if abs(sum(roof) - 1.0) > 1e-9:
            raise SchemaError(f"roof: entries must sum to 1 (simplex), got {sum(roof)}")
    const = cfg.get("constants", {})
    k = const.get("k")
    if k is not None and k < 1:
        raise SchemaError("constants.k: must be >= 1")


def resolve(raw: dict, overrides: Sequence[tuple[list[str], Any]] = ()) -> dict:
    """Fill defaults, apply dotted overrides, validate the result."""
    if not isinstance(raw, dict):
        raise SchemaError("<root>: config must be a JSON object")
    cfg = apply_overrides(_merge(DEFAULTS, raw), overrides)
    _validate(cfg)
    return cfg


def load_config(path: str | Path, overrides: Sequence[tuple[list[str], Any]] = ()) -> dict:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ParseError(f"{path}: {exc.strerror}") from exc
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    return resolve(raw, overrides)


def canonical_json(cfg: dict) -> str:
    return json.dumps(cfg, sort_keys=True, indent=2, allow_nan=False) + "\n"


def config_hash(cfg: dict) -> str:
    """SHA-256 of the canonical config; the output location is not part of the experiment."""
    cfg = {k: v for k, v in cfg.items() if k != "output"}
    body = json.dumps(cfg, sort_keys=True, separators=(",", ":"), allow_nan=False)
    return hashlib.sha256(body.encode()).hexdigest()


def expand_grid(spec, theta: float | None = None) -> np.ndarray:
    """A grid given as an explicit list or as {min, max, num | per_decade, scale}."""
    if isinstance(spec, list):
        return np.asarray(spec, dtype=float)
    lo, hi = float(spec["min"]), float(spec["max"])
    scale = spec.get("scale", "linear")
    if hi < lo:
        raise SchemaError(f"grid: max {hi} below min {lo}")
    if scale == "theta":
        if theta is None:
            raise SchemaError("grid: theta scale needs a Perron root")
        num = int(spec.get("num", 2 * (hi - lo) + 1))
        return theta ** np.linspace(lo, hi, num)
    if scale == "log":
        if lo <= 0:
            raise SchemaError("grid: log scale needs min > 0")
        if "per_decade" in spec:
            num = int(round(spec["per_decade"] * math.log10(hi / lo))) + 1
        else:
            num = int(spec.get("num", 21))
        return np.logspace(math.log10(lo), math.log10(hi), num)
    return np.linspace(lo, hi, int(spec.get("num", 21)))
