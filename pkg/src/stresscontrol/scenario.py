"""Scenario configuration: strict TOML parsing, validation, and hashing.

A scenario file is a single TOML document with sections [grid], [model],
[io], [sim], [disturbance], [verify] and a top-level ``controller`` key.
Unknown keys anywhere are rejected.  The scenario hash is a SHA-256 digest of
the canonicalized (sorted-key JSON) configuration, so key order in the file
never changes the hash.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

try:
    import tomllib
except ImportError:                       # Python 3.10
    import tomli as tomllib

from .dynamics import SCHEMES, DisturbanceSpec, ModelParams
from .errors import ConfigError
from .spatial import (Channel, Discretization, GridSpec, IoLayout, IoOperators,
                      build_grid, build_io_operators)

_GRID_KEYS = {"dimension", "extent", "nodes_per_axis"}
_MODEL_KEYS = {"d_s", "c2", "s_sat", "gamma", "gamma_margin"}
_IO_KEYS = {"mode", "disturbances", "actuators", "sensors"}
_CHANNEL_KEYS = {"center", "width", "amplitude", "weight"}
_SIM_KEYS = {"t_final", "dt", "scheme", "sample_stride", "seed",
             "s0_kind", "s0_amplitude", "dump_state"}
_DIST_KEYS = {"kind", "amplitude", "frequency", "bandwidth", "seed", "duration"}
_VERIFY_KEYS = {"run_gain", "run_decrement", "run_certificate", "run_basin",
                "run_saddle", "amplitudes", "ensemble_sinusoids",
                "ensemble_noise", "gain_horizon", "basin_horizon",
                "saddle_amplitudes", "gamma_design", "basin_shape"}
_TOP_KEYS = {"controller", "grid", "model", "io", "sim", "disturbance",
             "verify"}


def _reject_unknown(section: dict, allowed: set, where: str) -> None:
    unknown = set(section) - allowed
    if unknown:
        raise ConfigError(f"unknown key(s) {sorted(unknown)} in {where}")


def _require(section: dict, key: str, where: str):
    if key not in section:
        raise ConfigError(f"missing required key {key!r} in {where}")
    return section[key]


def _positive(value, key: str, where: str) -> float:
    try:
        out = float(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{where}.{key} must be a number, got {value!r}")
    if not out > 0:
        raise ConfigError(f"{where}.{key} must be positive, got {out}")
    return out


@dataclass(frozen=True)
class VerifyOptions:
    run_gain: bool = True
    run_decrement: bool = True
    run_certificate: bool = True
    run_basin: bool = True
    run_saddle: bool = True
    amplitudes: tuple[float, ...] | None = None
    ensemble_sinusoids: int = 30
    ensemble_noise: int = 10
    gain_horizon: float | None = None
    basin_horizon: float | None = None
    saddle_amplitudes: tuple[float, ...] | None = None
    gamma_design: float | None = None
    basin_shape: str = "uniform"

    @property
    def any_enabled(self) -> bool:
        return (self.run_gain or self.run_decrement or self.run_certificate
                or self.run_basin or self.run_saddle)


@dataclass(frozen=True)
class SimOptions:
    t_final: float = 10.0
    dt: float | None = None          # None = auto
    scheme: str = "imex_euler"
    sample_stride: int = 1
    seed: int = 0
    s0_kind: str = "uniform"
    s0_amplitude: float = 0.1
    dump_state: bool = False


@dataclass(frozen=True)
class ScenarioConfig:
    """Validated scenario: everything needed to run any command."""

    grid: GridSpec
    d_s: float
    c2: float
    s_sat: float
    gamma: float | str               # number or "auto"
    gamma_margin: float
    io_layout: IoLayout
    sim: SimOptions
    disturbance: DisturbanceSpec
    controller: str
    verify: VerifyOptions
    raw: dict = field(repr=False, default_factory=dict)

    @property
    def scenario_hash(self) -> str:
        return config_hash(self.raw)

    def model_params(self, gamma_value: float) -> ModelParams:
        return ModelParams(D_s=self.d_s, c2=self.c2, S=self.s_sat,
                           gamma=gamma_value)


def config_hash(raw: dict) -> str:
    """Content digest of the canonicalized configuration."""
    canonical = json.dumps(raw, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def _parse_channels(entries, dim: int, where: str, weight_key: bool):
    channels = []
    for k, entry in enumerate(entries):
        if not isinstance(entry, dict):
            raise ConfigError(f"{where}[{k}] must be a table")
        _reject_unknown(entry, _CHANNEL_KEYS, f"{where}[{k}]")
        center = _require(entry, "center", f"{where}[{k}]")
        if not isinstance(center, list) or len(center) != dim:
            raise ConfigError(
                f"{where}[{k}].center must be a list of {dim} coordinate(s)")
        width = _positive(_require(entry, "width", f"{where}[{k}]"),
                          "width", f"{where}[{k}]")
        amp_key = "weight" if weight_key and "weight" in entry else "amplitude"
        amplitude = float(entry.get(amp_key, 1.0))
        channels.append(Channel(center=tuple(float(c) for c in center),
                                width=width, amplitude=amplitude))
    return tuple(channels)


def parse_config(raw: dict) -> ScenarioConfig:
    """Validate a parsed TOML document into a ScenarioConfig."""
    if not isinstance(raw, dict):
        raise ConfigError("configuration root must be a table")
    _reject_unknown(raw, _TOP_KEYS, "top level")

    grid_sec = _require(raw, "grid", "top level")
    _reject_unknown(grid_sec, _GRID_KEYS, "[grid]")
    dim = int(_require(grid_sec, "dimension", "[grid]"))
    if dim not in (1, 2):
        raise ConfigError(f"grid.dimension must be 1 or 2, got {dim}")
    extent = _positive(_require(grid_sec, "extent", "[grid]"),
                       "extent", "grid")
    nodes = int(_require(grid_sec, "nodes_per_axis", "[grid]"))
    if nodes < 2:
        raise ConfigError(f"grid.nodes_per_axis must be >= 2, got {nodes}")
    grid = GridSpec(dimension=dim, extent=extent, nodes_per_axis=nodes)

    model_sec = _require(raw, "model", "top level")
    _reject_unknown(model_sec, _MODEL_KEYS, "[model]")
    d_s = _positive(_require(model_sec, "d_s", "[model]"), "d_s", "model")
    c2 = _positive(_require(model_sec, "c2", "[model]"), "c2", "model")
    s_sat = _positive(_require(model_sec, "s_sat", "[model]"), "s_sat", "model")
    gamma = _require(model_sec, "gamma", "[model]")
    if isinstance(gamma, str):
        if gamma != "auto":
            raise ConfigError(f'model.gamma must be a number or "auto", '
                              f'got {gamma!r}')
    else:
        gamma = _positive(gamma, "gamma", "model")
    gamma_margin = float(model_sec.get("gamma_margin", 1.2))
    if gamma_margin < 1.0:
        raise ConfigError(f"model.gamma_margin must be >= 1, got {gamma_margin}")

    io_sec = _require(raw, "io", "top level")
    _reject_unknown(io_sec, _IO_KEYS, "[io]")
    mode = io_sec.get("mode", "bumps")
    if mode not in ("bumps", "identity"):
        raise ConfigError(f'io.mode must be "bumps" or "identity", got {mode!r}')
    layout = IoLayout(
        mode=mode,
        disturbance_channels=_parse_channels(io_sec.get("disturbances", []),
                                             dim, "io.disturbances", False),
        actuator_channels=_parse_channels(io_sec.get("actuators", []),
                                          dim, "io.actuators", False),
        sensor_channels=_parse_channels(io_sec.get("sensors", []),
                                        dim, "io.sensors", True))
    if mode == "bumps" and not layout.sensor_channels:
        raise ConfigError("bumps mode needs at least one sensor")
    if mode == "bumps" and not layout.actuator_channels:
        raise ConfigError("bumps mode needs at least one actuator")

    sim_sec = raw.get("sim", {})
    _reject_unknown(sim_sec, _SIM_KEYS, "[sim]")
    dt_raw = sim_sec.get("dt", "auto")
    if isinstance(dt_raw, str):
        if dt_raw != "auto":
            raise ConfigError(f'sim.dt must be a number or "auto", got {dt_raw!r}')
        dt_val = None
    else:
        dt_val = _positive(dt_raw, "dt", "sim")
    scheme = sim_sec.get("scheme", "imex_euler")
    if scheme not in SCHEMES:
        raise ConfigError(f"sim.scheme must be one of {SCHEMES}, got {scheme!r}")
    s0_kind = sim_sec.get("s0_kind", "uniform")
    if s0_kind not in ("uniform", "bump", "zero"):
        raise ConfigError(f"sim.s0_kind must be uniform|bump|zero, got {s0_kind!r}")
    sim = SimOptions(
        t_final=_positive(sim_sec.get("t_final", 10.0), "t_final", "sim"),
        dt=dt_val, scheme=scheme,
        sample_stride=int(sim_sec.get("sample_stride", 1)),
        seed=int(sim_sec.get("seed", 0)),
        s0_kind=s0_kind,
        s0_amplitude=float(sim_sec.get("s0_amplitude", 0.1)),
        dump_state=bool(sim_sec.get("dump_state", False)))
    if sim.sample_stride < 1:
        raise ConfigError("sim.sample_stride must be >= 1")

    dist_sec = raw.get("disturbance", {})
    _reject_unknown(dist_sec, _DIST_KEYS, "[disturbance]")
    kind = dist_sec.get("kind", "none")
    if kind not in ("none", "sinusoid", "filtered_noise", "worst_case_linear"):
        raise ConfigError(f"disturbance.kind {kind!r} unknown")
    disturbance = DisturbanceSpec(
        kind=kind,
        amplitude=float(dist_sec.get("amplitude", 1.0)),
        frequency=float(dist_sec.get("frequency", 1.0)),
        bandwidth=float(dist_sec.get("bandwidth", 1.0)),
        seed=int(dist_sec.get("seed", sim.seed)),
        duration=float(dist_sec.get("duration", 1e9)))

    controller = raw.get("controller", "none")
    if controller not in ("none", "linear", "hj"):
        raise ConfigError(f"controller must be none|linear|hj, got {controller!r}")

    verify_sec = raw.get("verify", {})
    _reject_unknown(verify_sec, _VERIFY_KEYS, "[verify]")
    amplitudes = verify_sec.get("amplitudes")
    if amplitudes is not None:
        amplitudes = tuple(float(a) for a in amplitudes)
    saddle_amplitudes = verify_sec.get("saddle_amplitudes")
    if saddle_amplitudes is not None:
        saddle_amplitudes = tuple(float(a) for a in saddle_amplitudes)
    gamma_design = verify_sec.get("gamma_design")
    if gamma_design is not None:
        gamma_design = _positive(gamma_design, "gamma_design", "verify")
    basin_shape = verify_sec.get("basin_shape", "uniform")
    if basin_shape not in ("uniform", "bump"):
        raise ConfigError(f"verify.basin_shape must be uniform|bump, "
                          f"got {basin_shape!r}")
    verify = VerifyOptions(
        run_gain=bool(verify_sec.get("run_gain", True)),
        run_decrement=bool(verify_sec.get("run_decrement", True)),
        run_certificate=bool(verify_sec.get("run_certificate", True)),
        run_basin=bool(verify_sec.get("run_basin", True)),
        run_saddle=bool(verify_sec.get("run_saddle", True)),
        amplitudes=amplitudes,
        ensemble_sinusoids=int(verify_sec.get("ensemble_sinusoids", 30)),
        ensemble_noise=int(verify_sec.get("ensemble_noise", 10)),
        gain_horizon=(float(verify_sec["gain_horizon"])
                      if "gain_horizon" in verify_sec else None),
        basin_horizon=(float(verify_sec["basin_horizon"])
                       if "basin_horizon" in verify_sec else None),
        saddle_amplitudes=saddle_amplitudes,
        gamma_design=gamma_design,
        basin_shape=basin_shape)

    return ScenarioConfig(grid=grid, d_s=d_s, c2=c2, s_sat=s_sat, gamma=gamma,
                          gamma_margin=gamma_margin, io_layout=layout, sim=sim,
                          disturbance=disturbance, controller=controller,
                          verify=verify, raw=raw)


def load_config(path, seed_override: int | None = None) -> ScenarioConfig:
    """Parse and validate a scenario file; optionally override sim.seed."""
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}")
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"config {path} is not valid TOML: {exc}")
    if seed_override is not None:
        raw.setdefault("sim", {})["seed"] = int(seed_override)
    return parse_config(raw)


def initial_field(cfg: ScenarioConfig, disc: Discretization) -> np.ndarray:
    """Pointwise initial condition: amplitude * unit-peak shape."""
    kind = cfg.sim.s0_kind
    if kind == "zero":
        return np.zeros(disc.n)
    if kind == "uniform":
        return cfg.sim.s0_amplitude * np.ones(disc.n)
    L = disc.spec.extent
    center = np.full(disc.spec.dimension, L / 2.0)
    d2 = np.sum((disc.node_coords - center[None, :]) ** 2, axis=1)
    return cfg.sim.s0_amplitude * np.exp(-d2 / (2.0 * (L / 8.0) ** 2))


@dataclass(frozen=True)
class Scenario:
    """Assembled spatial objects for one configuration."""

    config: ScenarioConfig
    disc: Discretization
    io: IoOperators

    @property
    def scenario_hash(self) -> str:
        return self.config.scenario_hash


def build_scenario(cfg: ScenarioConfig) -> Scenario:
    disc = build_grid(cfg.grid)
    io = build_io_operators(disc, cfg.io_layout)
    return Scenario(config=cfg, disc=disc, io=io)
