"""Scenario configuration: a nested key-value (YAML) file with strict
validation. Unknown keys are errors; every violation names the key path.

Supported keys and defaults (the strong-drive / analyzer-bank parameter
set of the reference atom)::

    scenario: compare_all        # stationary_wk | physical_scan | analyzer_bank | compare_all
    source:
      energies: [0.0, 4.0, 8.0]
      decays:   [0.1, 0.1]
      rabi:     [2.0, 2.0]
    initial_level: 2             # basis projector |level><level|, levels 1..3
    stationary:
      t_max: 200.0               # correlation horizon
      dtau: 0.02
      broadening: 0.05           # Lorentzian resolution width, 0 disables
    grid:
      T: 16.0
      n: 256                     # intervals per axis
    filter:
      gamma_f: 0.1
    omega:                       # scan grid for wk / physical traces
      min: 0.0
      max: 12.0
      count: 1201
    cascade:
      p: 0.005
      gamma_b: 0.001
      omega_count: 128           # analyzer bank frequencies over [omega.min, omega.max]
      n_traj: 300
      T: 200.0
      dt: 0.01
      record_dt: 0.5
      method: master             # master | mcwf
    readout_times: [1.0, 2.0, 4.0, 8.0, 16.0]
    peaks:
      prominence: 0.05
    output_dir: out
    base_seed: 20240801
    workers: 1

An empty file yields all defaults.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
import yaml

from .lindblad import ThreeLevelParams

__all__ = ["ScenarioConfig", "ConfigError", "parse_config", "config_from_mapping"]

SCENARIOS = ("stationary_wk", "physical_scan", "analyzer_bank", "compare_all")
BANK_METHODS = ("master", "mcwf")


class ConfigError(ValueError):
    """Configuration rejected; the message names the offending key path."""


@dataclass(frozen=True)
class StationarySettings:
    t_max: float = 200.0
    dtau: float = 0.02
    broadening: float = 0.05


@dataclass(frozen=True)
class GridSettings:
    T: float = 16.0
    n: int = 256


@dataclass(frozen=True)
class OmegaGridSettings:
    minimum: float = 0.0
    maximum: float = 12.0
    count: int = 1201

    def values(self) -> np.ndarray:
        return np.linspace(self.minimum, self.maximum, self.count)

    @property
    def spacing(self) -> float:
        if self.count < 2:
            return 0.0
        return (self.maximum - self.minimum) / (self.count - 1)


@dataclass(frozen=True)
class CascadeSettings:
    p: float = 0.005
    gamma_b: float = 0.001
    omega_count: int = 128
    n_traj: int = 300
    T: float = 200.0
    dt: float = 0.01
    record_dt: float = 0.5
    method: str = "master"


@dataclass(frozen=True)
class ScenarioConfig:
    scenario: str = "compare_all"
    source: ThreeLevelParams = field(default_factory=ThreeLevelParams)
    initial_level: int = 2
    stationary: StationarySettings = field(default_factory=StationarySettings)
    grid: GridSettings = field(default_factory=GridSettings)
    gamma_f: float = 0.1
    omega: OmegaGridSettings = field(default_factory=OmegaGridSettings)
    cascade: CascadeSettings = field(default_factory=CascadeSettings)
    readout_times: tuple[float, ...] = (1.0, 2.0, 4.0, 8.0, 16.0)
    peak_prominence: float = 0.05
    output_dir: str = "out"
    base_seed: int = 20240801
    workers: int = 1

    def analyzer_omegas(self) -> np.ndarray:
        return np.linspace(self.omega.minimum, self.omega.maximum, self.cascade.omega_count)


def _expect_mapping(node, path: str) -> dict:
    if node is None:
        return {}
    if not isinstance(node, dict):
        raise ConfigError(f"{path}: expected a mapping, got {type(node).__name__}")
    return node


def _reject_unknown(node: dict, known, path: str) -> None:
    for key in node:
        if key not in known:
            where = f"{path}.{key}" if path else str(key)
            raise ConfigError(f"{where}: unknown key")


def _number(node: dict, key: str, default, path: str, low=None, high=None, integer=False):
    if key not in node or node[key] is None:
        return default
    v = node[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"{path}.{key}: expected a number, got {v!r}")
    if integer:
        if int(v) != v:
            raise ConfigError(f"{path}.{key}: expected an integer, got {v!r}")
        v = int(v)
    else:
        v = float(v)
    if low is not None and v < low:
        raise ConfigError(f"{path}.{key}: must be >= {low}, got {v}")
    if high is not None and v > high:
        raise ConfigError(f"{path}.{key}: must be within [{low}, {high}], got {v}")
    return v


def _triple(node: dict, key: str, default, path: str):
    if key not in node or node[key] is None:
        return default
    v = node[key]
    if not isinstance(v, (list, tuple)) or len(v) != len(default):
        raise ConfigError(f"{path}.{key}: expected {len(default)} numbers")
    out = []
    for i, x in enumerate(v):
        if isinstance(x, bool) or not isinstance(x, (int, float)):
            raise ConfigError(f"{path}.{key}[{i}]: expected a number, got {x!r}")
        out.append(float(x))
    return tuple(out)


def config_from_mapping(data: dict | None) -> ScenarioConfig:
    """Build a validated config from a parsed mapping (None = defaults)."""
    root = _expect_mapping(data, "top level")
    _reject_unknown(
        root,
        {
            "scenario", "source", "initial_level", "stationary", "grid", "filter",
            "omega", "cascade", "readout_times", "peaks", "output_dir",
            "base_seed", "workers",
        },
        "",
    )
    cfg = ScenarioConfig()

    scenario = root.get("scenario", cfg.scenario)
    if scenario not in SCENARIOS:
        raise ConfigError(f"scenario: must be one of {SCENARIOS}, got {scenario!r}")

    src_node = _expect_mapping(root.get("source"), "source")
    _reject_unknown(src_node, {"energies", "decays", "rabi"}, "source")
    try:
        source = ThreeLevelParams(
            energies=_triple(src_node, "energies", cfg.source.energies, "source"),
            decays=_triple(src_node, "decays", cfg.source.decays, "source"),
            rabi=_triple(src_node, "rabi", cfg.source.rabi, "source"),
        )
    except ValueError as err:
        raise ConfigError(f"source: {err}") from err

    initial_level = _number(root, "initial_level", cfg.initial_level, "", low=1, high=3, integer=True)

    st_node = _expect_mapping(root.get("stationary"), "stationary")
    _reject_unknown(st_node, {"t_max", "dtau", "broadening"}, "stationary")
    stationary = StationarySettings(
        t_max=_number(st_node, "t_max", cfg.stationary.t_max, "stationary", low=1e-9),
        dtau=_number(st_node, "dtau", cfg.stationary.dtau, "stationary", low=1e-12),
        broadening=_number(st_node, "broadening", cfg.stationary.broadening, "stationary", low=0.0),
    )

    g_node = _expect_mapping(root.get("grid"), "grid")
    _reject_unknown(g_node, {"T", "n"}, "grid")
    grid = GridSettings(
        T=_number(g_node, "T", cfg.grid.T, "grid", low=1e-9),
        n=_number(g_node, "n", cfg.grid.n, "grid", low=2, integer=True),
    )

    f_node = _expect_mapping(root.get("filter"), "filter")
    _reject_unknown(f_node, {"gamma_f"}, "filter")
    gamma_f = _number(f_node, "gamma_f", cfg.gamma_f, "filter", low=1e-12)

    o_node = _expect_mapping(root.get("omega"), "omega")
    _reject_unknown(o_node, {"min", "max", "count"}, "omega")
    omega = OmegaGridSettings(
        minimum=_number(o_node, "min", cfg.omega.minimum, "omega"),
        maximum=_number(o_node, "max", cfg.omega.maximum, "omega"),
        count=_number(o_node, "count", cfg.omega.count, "omega", low=2, integer=True),
    )
    if omega.maximum <= omega.minimum:
        raise ConfigError("omega.max: must exceed omega.min")

    c_node = _expect_mapping(root.get("cascade"), "cascade")
    _reject_unknown(
        c_node, {"p", "gamma_b", "omega_count", "n_traj", "T", "dt", "record_dt", "method"}, "cascade"
    )
    method = c_node.get("method", cfg.cascade.method)
    if method not in BANK_METHODS:
        raise ConfigError(f"cascade.method: must be one of {BANK_METHODS}, got {method!r}")
    cascade = CascadeSettings(
        p=_number(c_node, "p", cfg.cascade.p, "cascade", low=0.0, high=1.0),
        gamma_b=_number(c_node, "gamma_b", cfg.cascade.gamma_b, "cascade", low=1e-12),
        omega_count=_number(c_node, "omega_count", cfg.cascade.omega_count, "cascade", low=2, integer=True),
        n_traj=_number(c_node, "n_traj", cfg.cascade.n_traj, "cascade", low=1, integer=True),
        T=_number(c_node, "T", cfg.cascade.T, "cascade", low=1e-9),
        dt=_number(c_node, "dt", cfg.cascade.dt, "cascade", low=1e-12),
        record_dt=_number(c_node, "record_dt", cfg.cascade.record_dt, "cascade", low=1e-12),
        method=method,
    )

    rt = root.get("readout_times", list(cfg.readout_times))
    if not isinstance(rt, (list, tuple)) or not rt:
        raise ConfigError("readout_times: expected a nonempty list of times")
    times = []
    for i, x in enumerate(rt):
        if isinstance(x, bool) or not isinstance(x, (int, float)) or x < 0:
            raise ConfigError(f"readout_times[{i}]: expected a nonnegative number, got {x!r}")
        times.append(float(x))
    if times != sorted(times):
        raise ConfigError("readout_times: must be sorted ascending")

    p_node = _expect_mapping(root.get("peaks"), "peaks")
    _reject_unknown(p_node, {"prominence"}, "peaks")
    prominence = _number(p_node, "prominence", cfg.peak_prominence, "peaks", low=0.0, high=1.0)

    output_dir = root.get("output_dir", cfg.output_dir)
    if not isinstance(output_dir, str) or not output_dir:
        raise ConfigError("output_dir: expected a nonempty string")
    base_seed = _number(root, "base_seed", cfg.base_seed, "", low=0, integer=True)
    workers = _number(root, "workers", cfg.workers, "", low=1, integer=True)

    return ScenarioConfig(
        scenario=scenario,
        source=source,
        initial_level=initial_level,
        stationary=stationary,
        grid=grid,
        gamma_f=gamma_f,
        omega=omega,
        cascade=cascade,
        readout_times=tuple(times),
        peak_prominence=prominence,
        output_dir=output_dir,
        base_seed=base_seed,
        workers=workers,
    )


def parse_config(path: str) -> ScenarioConfig:
    """Load and validate a scenario configuration file."""
    with open(path, "r", encoding="utf-8") as fh:
        try:
            data = yaml.safe_load(fh)
        except yaml.YAMLError as err:
            raise ConfigError(f"{path}: not parseable: {err}") from err
    return config_from_mapping(data)


def override(cfg: ScenarioConfig, **changes) -> ScenarioConfig:
    """Functional update helper used by the command line."""
    return replace(cfg, **changes)
