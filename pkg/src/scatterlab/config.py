"""Run configuration: YAML schema, defaults and semantic validation.

Momenta in the file are given in units of pi (``k_i_over_pi: 0.36``). All
checks run before any computation, and failures name the offending field.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import jsonschema
import numpy as np
import yaml

from .dynamics import EvolutionSchedule
from .ising import IsingCouplings
from .mps import TruncationPolicy
from .spectroscopy import ED_LIMIT
from .stateprep import WavepacketSpec


class ConfigError(ValueError):
    """Invalid configuration; ``path`` is the dotted field name."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}" if path else message)
        self.path = path


_POS = {"type": "number", "exclusiveMinimum": 0}
_POLICY = {
    "type": "object",
    "additionalProperties": False,
    "properties": {"max_bond": {"type": "integer", "minimum": 1}, "cutoff": {"type": "number", "minimum": 0}},
}
_PACKET = {
    "type": "object",
    "additionalProperties": False,
    "required": ["k_i_over_pi", "n0"],
    "properties": {
        "k_i_over_pi": {"type": "number", "minimum": -1, "maximum": 1},
        "sigma_k_over_pi": _POS,
        "n0": {"type": "integer", "minimum": 0},
        "d": {"type": "integer", "minimum": 1},
    },
}
_CUT = {"anyOf": [{"type": "integer", "minimum": 0}, {"const": "auto"}]}

SCHEMA: dict[str, Any] = {
    "type": "object",
    "additionalProperties": False,
    "required": ["couplings", "lattice"],
    "properties": {
        "couplings": {
            "type": "object",
            "additionalProperties": False,
            "required": ["g_x", "g_z"],
            "properties": {"g_x": {"type": "number"}, "g_z": {"type": "number"}},
        },
        "lattice": {
            "type": "object",
            "additionalProperties": False,
            "required": ["L"],
            "properties": {"L": {"type": "integer", "minimum": 4}},
        },
        "wavepackets": {
            "type": "object",
            "additionalProperties": False,
            "required": ["left"],
            "properties": {"left": _PACKET, "right": {"anyOf": [_PACKET, {"const": "mirror"}]}},
        },
        "vacuum": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                **_POLICY["properties"],
                "variance_tol": _POS,
                "max_sweeps": {"type": "integer", "minimum": 1},
            },
        },
        "layers": {
            "type": "object",
            "additionalProperties": False,
            "properties": {**_POLICY["properties"], "substeps": {"type": "integer", "minimum": 1}},
        },
        "evolution": {
            "type": "object",
            "additionalProperties": False,
            "required": ["t_end"],
            "properties": {
                "dt": _POS,
                "t_end": {"type": "number", "minimum": 0},
                "order": {"enum": [1, 2]},
                "snapshot_every": _POS,
                "snapshot_times": {"type": "array", "items": {"type": "number", "minimum": 0}},
                "norm_floor": {"type": "number", "minimum": 0, "maximum": 1},
                "stages": {
                    "type": "array",
                    "minItems": 1,
                    "items": {
                        "type": "object",
                        "additionalProperties": False,
                        "required": ["t_from", "max_bond"],
                        "properties": {"t_from": {"type": "number", "minimum": 0}, **_POLICY["properties"]},
                    },
                },
            },
        },
        "isolation": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "n_l": _CUT,
                "n_r": _CUT,
                "significance": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
                "occupancy": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
            },
        },
        "ed": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "L_list": {"type": "array", "minItems": 1, "items": {"type": "integer", "minimum": 4}},
                "bands": {"enum": [1, 2]},
            },
        },
        "classification": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"max_relative_error": _POS, "t0": {"anyOf": [{"type": "number"}, {"const": "auto"}]}},
        },
        "sweep": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "k_i_over_pi": {"type": "array", "minItems": 1, "items": {"type": "number"}},
                "jobs": {"type": "integer", "minimum": 1},
            },
        },
        "output_dir": {"type": "string"},
        "seed": {"type": "integer", "minimum": 0},
    },
}

DEFAULTS: dict[str, Any] = {
    "vacuum": {"max_bond": 64, "cutoff": 1e-13, "variance_tol": 1e-8, "max_sweeps": 40},
    "layers": {"max_bond": 128, "cutoff": 1e-12, "substeps": 8},
    "evolution": {"dt": 1.0 / 16, "order": 2, "snapshot_every": 1.0, "norm_floor": 0.5},
    "isolation": {"n_l": "auto", "n_r": "auto", "significance": 1e-2, "occupancy": 0.2},
    "ed": {"L_list": list(range(10, 19)), "bands": 2},
    "classification": {"max_relative_error": 0.15, "t0": "auto"},
    "sweep": {"jobs": 1},
    "output_dir": "scatterlab-out",
    "seed": 0,
}


def _merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


@dataclass
class RunConfig:
    couplings: IsingCouplings
    left: WavepacketSpec | None
    right: WavepacketSpec | None
    vacuum_policy: TruncationPolicy
    vacuum_variance_tol: float
    vacuum_max_sweeps: int
    layer_policy: TruncationPolicy
    layer_substeps: int
    schedule: EvolutionSchedule | None
    trotter_order: int
    n_l: int | str
    n_r: int | str
    significance: float
    occupancy: float
    ed_L_list: list[int]
    ed_bands: int
    max_relative_error: float
    t0: float | str
    sweep_k: list[float]
    sweep_jobs: int
    output_dir: Path
    seed: int
    raw: dict = field(repr=False, default_factory=dict)

    @property
    def L(self) -> int:
        return self.couplings.L


def _packet(raw: dict) -> WavepacketSpec:
    kwargs = {"k_i": raw["k_i_over_pi"] * np.pi, "n0": raw["n0"]}
    if "sigma_k_over_pi" in raw:
        kwargs["sigma_k"] = raw["sigma_k_over_pi"] * np.pi
    if "d" in raw:
        kwargs["d"] = raw["d"]
    return WavepacketSpec(**kwargs)


def _check(path: str, fn):
    try:
        return fn()
    except ConfigError:
        raise
    except (ValueError, TypeError) as exc:
        raise ConfigError(path, str(exc)) from exc


def build_config(data: dict | None, output_dir: str | None = None) -> RunConfig:
    """Validate a parsed document and assemble the typed configuration."""
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError("", "the configuration must be a mapping")
    validator = jsonschema.Draft7Validator(SCHEMA)
    errors = sorted(validator.iter_errors(data), key=lambda e: list(e.absolute_path))
    if errors:
        err = errors[0]
        path = ".".join(str(p) for p in err.absolute_path)
        if err.validator == "required":
            missing = err.message.split("'")[1]
            path = f"{path}.{missing}" if path else missing
        raise ConfigError(path, err.message)
    cfg = _merge(DEFAULTS, data)
    if output_dir is not None:
        cfg["output_dir"] = output_dir

    L = cfg["lattice"]["L"]
    couplings = _check("lattice.L", lambda: IsingCouplings(cfg["couplings"]["g_x"], cfg["couplings"]["g_z"], L))

    left = right = None
    if "wavepackets" in cfg:
        wp = cfg["wavepackets"]
        left = _check("wavepackets.left", lambda: _packet(wp["left"]))
        right_raw = wp.get("right", "mirror")
        right = left.mirrored(L) if right_raw == "mirror" else _check("wavepackets.right", lambda: _packet(right_raw))
        for name, spec in (("left", left), ("right", right)):
            if spec.window.start < 0 or spec.window.stop > L:
                raise ConfigError(f"wavepackets.{name}.n0", f"window {spec.window} does not fit in L={L}")
        a, b = sorted((left.window, right.window), key=lambda w: w.start)
        if b.start - a.stop < max(left.d, right.d):
            raise ConfigError("wavepackets", "packet windows overlap or are closer than d sites")

    schedule = None
    ev = cfg["evolution"]
    if "evolution" in data:
        stages_raw = ev.get("stages") or [{"t_from": 0.0, "max_bond": 64, "cutoff": 1e-9}]
        stages = [
            (
                s["t_from"],
                _check(f"evolution.stages.{i}", lambda s=s: TruncationPolicy(s["max_bond"], s.get("cutoff", 1e-9))),
            )
            for i, s in enumerate(stages_raw)
        ]
        snaps = ev.get("snapshot_times")
        if snaps is None:
            every = ev["snapshot_every"]
            snaps = list(np.arange(0.0, ev["t_end"] + 1e-9, every))
            if abs(snaps[-1] - ev["t_end"]) > 1e-9:
                snaps.append(ev["t_end"])
        schedule = _check(
            "evolution",
            lambda: EvolutionSchedule(
                t_end=ev["t_end"], dt=ev["dt"], snapshot_times=snaps, stages=stages, norm_floor=ev["norm_floor"]
            ),
        )

    iso = cfg["isolation"]
    for side in ("n_l", "n_r"):
        if iso[side] != "auto" and not 0 <= iso[side] < L - 1:
            raise ConfigError(f"isolation.{side}", f"cut {iso[side]} outside [0, {L - 2}]")
    if iso["n_l"] != "auto" and iso["n_r"] != "auto" and iso["n_l"] >= iso["n_r"]:
        raise ConfigError("isolation", "need n_l < n_r")

    bad = [x for x in cfg["ed"]["L_list"] if x > ED_LIMIT]
    if bad:
        raise ConfigError("ed.L_list", f"sizes {bad} exceed the ED limit {ED_LIMIT}")

    vac, lay = cfg["vacuum"], cfg["layers"]
    return RunConfig(
        couplings=couplings,
        left=left,
        right=right,
        vacuum_policy=_check("vacuum", lambda: TruncationPolicy(vac["max_bond"], vac["cutoff"])),
        vacuum_variance_tol=vac["variance_tol"],
        vacuum_max_sweeps=vac["max_sweeps"],
        layer_policy=_check("layers", lambda: TruncationPolicy(lay["max_bond"], lay["cutoff"])),
        layer_substeps=lay["substeps"],
        schedule=schedule,
        trotter_order=ev["order"],
        n_l=iso["n_l"],
        n_r=iso["n_r"],
        significance=iso["significance"],
        occupancy=iso["occupancy"],
        ed_L_list=sorted(cfg["ed"]["L_list"]),
        ed_bands=cfg["ed"]["bands"],
        max_relative_error=cfg["classification"]["max_relative_error"],
        t0=cfg["classification"]["t0"],
        sweep_k=list(cfg["sweep"].get("k_i_over_pi", [])),
        sweep_jobs=cfg["sweep"]["jobs"],
        output_dir=Path(cfg["output_dir"]),
        seed=cfg["seed"],
        raw=cfg,
    )


def load_config(path: str | Path, output_dir: str | None = None) -> RunConfig:
    """Read and validate a YAML configuration file."""
    try:
        data = yaml.safe_load(Path(path).read_text())
    except FileNotFoundError as exc:
        raise ConfigError("", f"config file {path} not found") from exc
    except yaml.YAMLError as exc:
        raise ConfigError("", f"cannot parse {path}: {exc}") from exc
    return build_config(data, output_dir)
