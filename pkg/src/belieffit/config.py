"""JSON configuration: one document holding environment, controller, sensor
ground truth, and (optionally) the filters' learned parameters.

`default_config()` reproduces the documented desk-scale defaults; files only
need the keys they want to override.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .beliefs import EnvConfig
from .errors import ConfigurationError
from .filters import FilterModels, MatchObservationModel, PositionNoiseModel
from .sensors import MatchSensorSpec, PositionSensorSpec, SensorModel
from .sim import SpiralParams


def default_config() -> dict:
    return {
        "env": {
            "n_holes": 5,
            "n_types": 3,
            "clearance": 0.001,
            "detector_error_bound": 0.02,
            "alpha": 0.34,
            "sigma_init": 1e-4,
            "workspace_min": [-0.25, -0.25],
            "workspace_max": [0.25, 0.25],
            "horizon_high": 10,
            "horizon_low": 100,
            "rng_seed": 0,
            "capture_radius": 0.0025,
            "alignment_rate": 0.36,
        },
        "spiral": {
            "r_max": 0.015,
            "n_rot": 2,
            "delta_z": 0.004,
            "sigma_wiggle": 0.00125,
        },
        "sensors": {
            "position": {
                "cov": [[6.4e-5, 0.0], [0.0, 6.4e-5]],
                "bias": [0.0, 0.0],
                "uninformative_scale": 3.0,
                "informative_radius": 0.01125,
            },
            "match": {"tpr": 0.85, "fpr": 0.15},
        },
        "learned": {
            "position_cov": [[6.4e-5, 0.0], [0.0, 6.4e-5]],
            "tpr": 0.85,
            "fpr": 0.15,
        },
    }


def _merge(base: dict, override: dict) -> dict:
    out = dict(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], value)
        else:
            out[key] = value
    return out


def load_config(path: str | Path | None) -> dict:
    """Defaults overlaid with the JSON document at `path` (if given)."""
    doc = default_config()
    if path is not None:
        path = Path(path)
        if not path.exists():
            raise ConfigurationError(f"config file not found: {path}")
        try:
            user = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigurationError(f"invalid JSON in {path}: {exc}") from exc
        if not isinstance(user, dict):
            raise ConfigurationError("config document must be a JSON object")
        doc = _merge(doc, user)
    return doc


def save_config(doc: dict, path: str | Path) -> None:
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def env_from(doc: dict) -> EnvConfig:
    env = doc["env"]
    return EnvConfig(
        n_holes=int(env["n_holes"]),
        n_types=int(env["n_types"]),
        clearance=float(env["clearance"]),
        detector_error_bound=float(env["detector_error_bound"]),
        alpha=float(env["alpha"]),
        sigma_init=float(env["sigma_init"]),
        workspace_min=tuple(float(x) for x in env["workspace_min"]),
        workspace_max=tuple(float(x) for x in env["workspace_max"]),
        horizon_high=int(env["horizon_high"]),
        horizon_low=int(env["horizon_low"]),
        rng_seed=int(env["rng_seed"]),
        capture_radius=float(env["capture_radius"]),
        alignment_rate=float(env["alignment_rate"]),
    )


def spiral_from(doc: dict) -> SpiralParams:
    sp = doc["spiral"]
    return SpiralParams(
        r_max=float(sp["r_max"]),
        n_rot=int(sp["n_rot"]),
        delta_z=float(sp["delta_z"]),
        sigma_wiggle=float(sp["sigma_wiggle"]),
    )


def sensors_from(doc: dict) -> SensorModel:
    sens = doc["sensors"]
    pos = sens["position"]
    return SensorModel(
        position=PositionSensorSpec(
            cov=np.array(pos["cov"], dtype=float),
            bias=np.array(pos["bias"], dtype=float),
            uninformative_scale=float(pos["uninformative_scale"]),
            informative_radius=float(pos["informative_radius"]),
        ),
        match=MatchSensorSpec(
            tpr=float(sens["match"]["tpr"]), fpr=float(sens["match"]["fpr"])
        ),
    )


def learned_from(doc: dict) -> FilterModels:
    if "learned" not in doc or doc["learned"] is None:
        raise ConfigurationError("no learned parameters in config")
    lp = doc["learned"]
    return FilterModels(
        position=PositionNoiseModel(np.array(lp["position_cov"], dtype=float)),
        match=MatchObservationModel(tpr=float(lp["tpr"]), fpr=float(lp["fpr"])),
    )


def learned_to_doc(models: FilterModels) -> dict:
    return {
        "position_cov": [[float(x) for x in row] for row in models.position.cov],
        "tpr": float(models.match.tpr),
        "fpr": float(models.match.fpr),
    }
