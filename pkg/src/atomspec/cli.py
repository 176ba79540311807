"""Command line front end: one subcommand per scenario, thin flag
overrides on top of the config file."""

from __future__ import annotations

import dataclasses
import sys

import click

from .config import (
    ConfigError,
    OmegaGridSettings,
    ScenarioConfig,
    parse_config,
)
from .harness import StageError, run_scenario


def _load(config_path: str | None) -> ScenarioConfig:
    if config_path is None:
        return ScenarioConfig()
    return parse_config(config_path)


def _apply_overrides(cfg, scenario, out, seed, workers, omega_min, omega_max, omega_count, times):
    changes = {"scenario": scenario}
    if out is not None:
        changes["output_dir"] = out
    if seed is not None:
        changes["base_seed"] = seed
    if workers is not None:
        changes["workers"] = workers
    om = cfg.omega
    if omega_min is not None or omega_max is not None or omega_count is not None:
        om = OmegaGridSettings(
            minimum=om.minimum if omega_min is None else omega_min,
            maximum=om.maximum if omega_max is None else omega_max,
            count=om.count if omega_count is None else omega_count,
        )
        changes["omega"] = om
    if times:
        changes["readout_times"] = tuple(sorted(times))
    return dataclasses.replace(cfg, **changes)


def _common_options(fn):
    fn = click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False),
                      default=None, help="Scenario configuration file.")(fn)
    fn = click.option("--out", type=click.Path(file_okay=False), default=None,
                      help="Output directory (overrides config).")(fn)
    fn = click.option("--seed", type=click.IntRange(min=0), default=None,
                      help="Base seed for trajectory ensembles.")(fn)
    fn = click.option("--workers", type=click.IntRange(min=1), default=None,
                      help="Worker processes for the trajectory bank.")(fn)
    fn = click.option("--omega-min", type=float, default=None, help="Scan grid lower edge.")(fn)
    fn = click.option("--omega-max", type=float, default=None, help="Scan grid upper edge.")(fn)
    fn = click.option("--omega-count", type=click.IntRange(min=2), default=None,
                      help="Scan grid point count.")(fn)
    fn = click.option("--time", "times", type=float, multiple=True,
                      help="Readout time (repeatable).")(fn)
    return fn


def _execute(scenario, config_path, out, seed, workers, omega_min, omega_max, omega_count, times):
    try:
        cfg = _load(config_path)
        cfg = _apply_overrides(cfg, scenario, out, seed, workers,
                               omega_min, omega_max, omega_count, times)
        report = run_scenario(cfg)
    except (ConfigError, StageError, ValueError) as err:
        click.echo(f"error: {err}", err=True)
        sys.exit(1)
    for line in report.summary_lines():
        click.echo(line)


@click.group()
def main():
    """Spectra of a driven dissipative three-level atom by three routes:
    stationary Fourier transform, filtered time-dependent spectrum, and a
    cascaded analyzer-atom bank."""


@main.command()
@_common_options
def stationary(**kw):
    """Stationary spectrum from steady-state correlations."""
    _execute("stationary_wk", **kw)


@main.command()
@_common_options
def physical(**kw):
    """Time-dependent filtered spectrum from the correlation grid."""
    _execute("physical_scan", **kw)


@main.command()
@_common_options
def analyzer(**kw):
    """Analyzer-atom bank (master-equation or trajectory method)."""
    _execute("analyzer_bank", **kw)


@main.command()
@_common_options
def compare(**kw):
    """All three routes on one parameter set plus an alignment table."""
    _execute("compare_all", **kw)


if __name__ == "__main__":
    main()
