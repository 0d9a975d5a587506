"""Experiment configuration files, figure presets and scenario construction.

Configs are YAML documents. A ``preset`` key pulls in a complete parameter
set which the remaining keys override; with ``preset: custom`` every field
must be given explicitly. Unknown keys are rejected.
"""

from __future__ import annotations

import copy
import json
import secrets
from pathlib import Path
from typing import Literal, Optional

import numpy as np
import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from .engine import AlgorithmParams, AlgorithmSpec, Scenario, steady_state_window
from .node import dnc_sizes
from .signals import (
    SEED_PROFILES,
    SEED_TOPOLOGY,
    SEED_TRUTH,
    BernoulliGaussian,
    GroundTruth,
    NodeSignalProfile,
    SymmetricAlphaStable,
    derive_rng,
    nominal_powers,
)
from .topology import build_random_connected_topology, parse_edge_list

__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "PRESETS",
    "load_config",
    "parse_config",
    "emit_config",
    "build_scenario",
]

Range = tuple[float, float]


class ConfigError(ValueError):
    pass


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class NetworkConfig(_Strict):
    nodes: int = Field(ge=2)
    link_probability: float = Field(gt=0.0, le=1.0)
    edges: Optional[str] = None


class SignalConfig(_Strict):
    filter_length: int = Field(ge=1)
    ar_coefficients: tuple[float, float]
    innovation_variance_range: Range
    background_variance_range: Range

    @model_validator(mode="after")
    def _ranges(self):
        for name in ("innovation_variance_range", "background_variance_range"):
            lo, hi = getattr(self, name)
            if not 0.0 < lo <= hi:
                raise ValueError(f"{name} must satisfy 0 < low <= high")
        return self


class NoiseConfig(_Strict):
    model: Literal["none", "bernoulli_gaussian", "alpha_stable"]
    probability_range: Optional[Range] = None
    impulse_power_ratio: Optional[float] = Field(default=None, gt=0.0)
    alpha: Optional[float] = Field(default=None, gt=0.0, le=2.0)
    dispersion: Optional[float] = Field(default=None, gt=0.0)

    @model_validator(mode="after")
    def _model_fields(self):
        if self.model == "bernoulli_gaussian":
            if self.probability_range is None or self.impulse_power_ratio is None:
                raise ValueError("bernoulli_gaussian needs probability_range and impulse_power_ratio")
            lo, hi = self.probability_range
            if not 0.0 <= lo <= hi <= 1.0:
                raise ValueError("probability_range must satisfy 0 <= low <= high <= 1")
        if self.model == "alpha_stable" and (self.alpha is None or self.dispersion is None):
            raise ValueError("alpha_stable needs alpha and dispersion")
        return self


class ParameterConfig(_Strict):
    forgetting: float = Field(gt=0.0, le=1.0)
    regularization: float = Field(gt=0.0)
    bound_forgetting: float = Field(gt=0.0, le=1.0)
    bound_scale: float = Field(gt=0.0)
    dnc_window_factor: float = Field(gt=0.0)
    dnc_threshold: float = Field(gt=0.0)
    step_size: float = Field(gt=0.0)


class AlgorithmConfig(_Strict):
    name: str
    kind: Literal["drls", "rdrls", "rdrls_dnc", "selms"]
    cooperative: bool = True


class ExperimentConfig(_Strict):
    preset: Literal["fig2-bg", "fig3-alpha-stable", "fig4-nodewise", "custom"] = "custom"
    seed: Optional[int] = Field(default=None, ge=0)
    trials: int = Field(ge=1)
    iterations: int = Field(ge=1)
    change_at: Optional[int] = Field(default=None, ge=1)
    steady_state_window: Optional[int] = Field(default=None, ge=1)
    output_dir: str = "runs"
    network: NetworkConfig
    signal: SignalConfig
    noise: NoiseConfig
    parameters: ParameterConfig
    algorithms: list[AlgorithmConfig] = Field(min_length=1)

    @model_validator(mode="after")
    def _consistency(self):
        names = [a.name for a in self.algorithms]
        if len(set(names)) != len(names):
            raise ValueError("algorithm names must be unique")
        if self.change_at is not None and self.change_at > self.iterations:
            raise ValueError("change_at lies beyond the last iteration")
        if any(a.kind == "rdrls_dnc" for a in self.algorithms):
            dnc_sizes(self.parameters.dnc_window_factor, self.signal.filter_length)
        if self.steady_state_window is not None and self.steady_state_window > self.segment_length:
            raise ValueError("steady_state_window exceeds the pre-change segment")
        return self

    @property
    def segment_length(self) -> int:
        """Iterations before the change (or all of them)."""
        return self.iterations if self.change_at is None else self.change_at - 1

    @property
    def window(self) -> int:
        if self.steady_state_window is not None:
            return self.steady_state_window
        return steady_state_window(self.segment_length)


_FIG2 = {
    "preset": "fig2-bg",
    "trials": 20,
    "iterations": 6000,
    "change_at": 3001,
    "output_dir": "runs/fig2-bg",
    "network": {"nodes": 20, "link_probability": 0.2},
    "signal": {
        "filter_length": 16,
        "ar_coefficients": [1.6, -0.81],
        "innovation_variance_range": [0.2, 1.0],
        "background_variance_range": [0.01, 0.1],
    },
    "noise": {
        "model": "bernoulli_gaussian",
        "probability_range": [0.001, 0.05],
        "impulse_power_ratio": 1000.0,
    },
    "parameters": {
        "forgetting": 0.995,
        "regularization": 0.01,
        "bound_forgetting": 0.98,
        "bound_scale": 1.0,
        "dnc_window_factor": 3.0,
        "dnc_threshold": 25.0,
        "step_size": 0.015,
    },
    "algorithms": [
        {"name": "drls", "kind": "drls"},
        {"name": "dse_lms", "kind": "selms"},
        {"name": "rdrls_nocoop", "kind": "rdrls", "cooperative": False},
        {"name": "rdrls", "kind": "rdrls"},
        {"name": "rdrls_dnc", "kind": "rdrls_dnc"},
    ],
}
_FIG3 = copy.deepcopy(_FIG2)
_FIG3.update(preset="fig3-alpha-stable", output_dir="runs/fig3-alpha-stable",
             noise={"model": "alpha_stable", "alpha": 1.15, "dispersion": 1.0 / 15.0})
_FIG4 = copy.deepcopy(_FIG3)
_FIG4.update(preset="fig4-nodewise", output_dir="runs/fig4-nodewise")

PRESETS = {"fig2-bg": _FIG2, "fig3-alpha-stable": _FIG3, "fig4-nodewise": _FIG4}


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for key, value in over.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], value)
        else:
            out[key] = value
    return out


def _line_of(node, loc) -> Optional[int]:
    """1-based source line of the YAML node at pydantic error location ``loc``."""
    line = None
    for key in loc:
        if isinstance(node, yaml.MappingNode):
            for k, v in node.value:
                if k.value == key:
                    line, node = k.start_mark.line + 1, v
                    break
            else:
                return line
        elif isinstance(node, yaml.SequenceNode) and isinstance(key, int) and key < len(node.value):
            node = node.value[key]
            line = node.start_mark.line + 1
        else:
            return line
    return line


def _format_errors(err: ValidationError, root=None) -> str:
    lines = []
    for e in err.errors():
        where = ".".join(str(p) for p in e["loc"]) or "<root>"
        line = _line_of(root, e["loc"]) if root is not None else None
        prefix = f"line {line}: " if line else ""
        lines.append(f"{prefix}{where}: {e['msg']}")
    return "invalid config:\n  " + "\n  ".join(lines)


def parse_config(text: str, overrides: Optional[dict] = None) -> ExperimentConfig:
    """Validate a YAML (or JSON) config document.

    A run manifest is accepted as well; its resolved config is used.
    """
    try:
        data = yaml.safe_load(text)
        root = yaml.compose(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse config: {exc}") from None
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError("config must be a mapping at the top level")
    if "manifest_version" in data:
        data, root = data.get("config", {}), None
    return resolve_config(data, overrides, root)


def resolve_config(data: dict, overrides: Optional[dict] = None, root=None) -> ExperimentConfig:
    preset = data.get("preset", "custom")
    base = PRESETS.get(preset, {})
    merged = _merge(base, data)
    if overrides:
        overrides = {k: v for k, v in overrides.items() if v is not None}
        if "iterations" in overrides and merged.get("change_at") is not None \
                and "change_at" not in overrides:
            # keep the change in the middle of a resized run
            overrides["change_at"] = overrides["iterations"] // 2 + 1
            merged.pop("steady_state_window", None)
        merged = _merge(merged, overrides)
    if merged.get("seed") is None:
        merged["seed"] = secrets.randbits(63)
    try:
        return ExperimentConfig.model_validate(merged)
    except ValidationError as exc:
        raise ConfigError(_format_errors(exc, root)) from None


def load_config(path, overrides: Optional[dict] = None) -> ExperimentConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    return parse_config(path.read_text(), overrides)


def emit_config(config: ExperimentConfig) -> str:
    return yaml.safe_dump(config_dict(config), sort_keys=False)


def config_dict(config: ExperimentConfig) -> dict:
    # round-trips through JSON so tuples become lists
    return json.loads(config.model_dump_json())


def build_scenario(config: ExperimentConfig) -> Scenario:
    """Materialize topology, node profiles and ground truth from ``config``.

    Everything random is drawn from generators derived from ``config.seed``.
    """
    seed = config.seed
    net, sig, noise = config.network, config.signal, config.noise
    if net.edges:
        topology = parse_edge_list(net.edges, net.nodes)
    else:
        topology = build_random_connected_topology(
            net.nodes, net.link_probability,
            np.random.SeedSequence(seed, spawn_key=(SEED_TOPOLOGY,)))
    truth = GroundTruth.random(sig.filter_length, derive_rng(seed, SEED_TRUTH), config.change_at)

    rng = derive_rng(seed, SEED_PROFILES)
    profiles = []
    for _ in range(net.nodes):
        innovation = rng.uniform(*sig.innovation_variance_range)
        background = rng.uniform(*sig.background_variance_range)
        base = NodeSignalProfile(innovation, background, None, tuple(sig.ar_coefficients))
        impulse = None
        if noise.model == "bernoulli_gaussian":
            probability = rng.uniform(*noise.probability_range)
            _, _, power_y = nominal_powers(base, truth.vector)
            impulse = BernoulliGaussian(probability, noise.impulse_power_ratio * power_y)
        elif noise.model == "alpha_stable":
            impulse = SymmetricAlphaStable(noise.alpha, noise.dispersion)
        profiles.append(NodeSignalProfile(innovation, background, impulse, base.ar_coefficients))

    p = config.parameters
    params = AlgorithmParams(p.forgetting, p.regularization, p.bound_forgetting, p.bound_scale,
                             p.dnc_window_factor, p.dnc_threshold, p.step_size)
    algorithms = [AlgorithmSpec(a.name, a.kind, a.cooperative) for a in config.algorithms]
    return Scenario(topology, profiles, truth, algorithms, params,
                    config.iterations, config.trials, seed)
