"""Scenario orchestration: run a configured pipeline, write flat-file
outputs, extract peaks and assemble a comparison report.

Stages are named; any failure aborts with the failing stage in the error
and the manifest flags the run as incomplete. Output tables depend only on
the configuration and seed, never on wall time or worker count.
"""

from __future__ import annotations

import os
import subprocess
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .cascade import (
    AnalyzerBankConfig,
    CascadedParams,
    ExcitationRecord,
    analyzer_spectrum,
    bank_excitation_master,
    build_cascaded,
    ensemble_excitation,
    ground_analyzer_state,
)
from .config import ScenarioConfig
from .hilbert import DensityMatrix, HilbertSpace, ketbra
from .lindblad import LAB, ROTATING, evolve, three_level_model
from .peaks import PeakList, find_peaks, local_maxima, top_peaks
from .physical import physical_spectrum_scan
from .qrt import DetectionOperator, SpectrumTrace, correlation_grid, wk_spectrum
from .tableio import (
    ensure_dir,
    write_excitation,
    write_grid,
    write_manifest,
    write_spectrum,
)

__all__ = ["RunReport", "StageError", "run_scenario"]

GRID_EXPORT_MAX_N = 512


class StageError(RuntimeError):
    """A pipeline stage failed; carries the stage name."""

    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"stage '{stage}' failed: {cause}")
        self.stage = stage
        self.cause = cause


@dataclass
class RunReport:
    scenario: str
    peaks: dict[str, dict[float, PeakList]] = field(default_factory=dict)
    invariant_checks: dict[str, float] = field(default_factory=dict)
    alignment: list[dict] | None = None
    alignment_tolerance: float | None = None
    files: list[str] = field(default_factory=list)
    notes: list[str] = field(default_factory=list)
    wall_time_s: float = 0.0

    def summary_lines(self) -> list[str]:
        lines = [f"scenario: {self.scenario}"]
        for route, per_time in self.peaks.items():
            for t, plist in per_time.items():
                pos = ", ".join(f"{p.omega:.3g}" for p in plist)
                lines.append(f"peaks[{route}, t={t:g}]: {len(plist)} @ {pos}")
        if self.alignment is not None:
            lines.append(
                f"cross-route alignment (tolerance {self.alignment_tolerance:.3g}):"
            )
            for row in self.alignment:
                lines.append(
                    "  wk {wk:7.3f} | physical {physical:>7} | analyzer {analyzer:>7}"
                    " | ok={ok}".format(**{
                        "wk": row["wk"],
                        "physical": "-" if row["physical"] is None else f"{row['physical']:.3f}",
                        "analyzer": "-" if row["analyzer"] is None else f"{row['analyzer']:.3f}",
                        "ok": row["ok"],
                    })
                )
        for key, val in self.invariant_checks.items():
            lines.append(f"invariant[{key}] = {val:.3e}")
        for note in self.notes:
            lines.append(f"note: {note}")
        lines.append(f"wall time: {self.wall_time_s:.1f} s")
        return lines


def _git_describe() -> str:
    try:
        out = subprocess.run(
            ["git", "describe", "--always", "--dirty"],
            cwd=os.path.dirname(__file__),
            capture_output=True,
            text=True,
            timeout=5,
        )
        if out.returncode == 0:
            return out.stdout.strip()
    except (OSError, subprocess.SubprocessError):
        pass
    return "unknown"


def _initial_state(cfg: ScenarioConfig) -> DensityMatrix:
    space = HilbertSpace((3,))
    proj = ketbra(space, cfg.initial_level - 1, cfg.initial_level - 1)
    return DensityMatrix(proj)


def _flatten_config(cfg: ScenarioConfig) -> dict:
    return {
        "scenario": cfg.scenario,
        "source.energies": list(cfg.source.energies),
        "source.decays": list(cfg.source.decays),
        "source.rabi": list(cfg.source.rabi),
        "initial_level": cfg.initial_level,
        "stationary.t_max": cfg.stationary.t_max,
        "stationary.dtau": cfg.stationary.dtau,
        "stationary.broadening": cfg.stationary.broadening,
        "grid.T": cfg.grid.T,
        "grid.n": cfg.grid.n,
        "filter.gamma_f": cfg.gamma_f,
        "omega.min": cfg.omega.minimum,
        "omega.max": cfg.omega.maximum,
        "omega.count": cfg.omega.count,
        "cascade.p": cfg.cascade.p,
        "cascade.gamma_b": cfg.cascade.gamma_b,
        "cascade.omega_count": cfg.cascade.omega_count,
        "cascade.n_traj": cfg.cascade.n_traj,
        "cascade.T": cfg.cascade.T,
        "cascade.dt": cfg.cascade.dt,
        "cascade.record_dt": cfg.cascade.record_dt,
        "cascade.method": cfg.cascade.method,
        "readout_times": list(cfg.readout_times),
        "peaks.prominence": cfg.peak_prominence,
        "base_seed": cfg.base_seed,
        "workers": cfg.workers,
    }


# -- stage implementations ---------------------------------------------------------------


def _run_wk(cfg: ScenarioConfig, report: RunReport, out: str) -> SpectrumTrace:
    model = three_level_model(cfg.source, ROTATING)
    detector = DetectionOperator.default(cfg.source)
    trace = wk_spectrum(
        model,
        detector,
        cfg.omega.values(),
        t_max=cfg.stationary.t_max,
        dtau=cfg.stationary.dtau,
        broadening=cfg.stationary.broadening,
    )
    path = os.path.join(out, f"spectrum_wk_t{cfg.stationary.t_max:g}.tsv")
    write_spectrum(
        path,
        trace,
        {"route": "wk", "note": f"stationary spectrum, tau horizon {cfg.stationary.t_max:g}"},
    )
    report.files.append(path)
    report.peaks.setdefault("wk", {})[cfg.stationary.t_max] = find_peaks(
        trace, cfg.peak_prominence
    )
    return trace


def _run_physical(
    cfg: ScenarioConfig,
    report: RunReport,
    out: str,
    horizon: float | None = None,
    times: tuple[float, ...] | None = None,
) -> list[SpectrumTrace]:
    times = cfg.readout_times if times is None else times
    t_grid = cfg.grid.T if horizon is None else horizon
    dt_grid = cfg.grid.T / cfg.grid.n
    n = int(round(t_grid / dt_grid))
    model = three_level_model(cfg.source, LAB)
    detector = DetectionOperator.default(cfg.source)
    bad = [t for t in times if t > t_grid * (1 + 1e-12)]
    if bad:
        raise ValueError(f"readout times {bad} beyond grid horizon {t_grid}")
    grid = correlation_grid(model, _initial_state(cfg), detector, t_grid, n)
    report.invariant_checks["grid_symmetry_defect"] = float(
        np.max(np.abs(grid.values - grid.values.conj().T))
    )
    if n <= GRID_EXPORT_MAX_N:
        gpath = os.path.join(out, "grid.tsv")
        write_grid(gpath, grid, {"detector": "default", "initial_level": str(cfg.initial_level)})
        report.files.append(gpath)
    else:
        report.notes.append(f"grid.tsv omitted (N = {n} > {GRID_EXPORT_MAX_N})")
    traces = physical_spectrum_scan(grid, times, cfg.omega.values(), cfg.gamma_f)
    for t, trace in zip(times, traces):
        path = os.path.join(out, f"spectrum_physical_t{t:g}.tsv")
        write_spectrum(path, trace, {"route": "physical", "gamma_f": f"{cfg.gamma_f:g}"})
        report.files.append(path)
        report.peaks.setdefault("physical", {})[t] = find_peaks(trace, cfg.peak_prominence)
    return traces


def _mcwf_bank_entry(args):
    """Worker body for one analyzer frequency (picklable)."""
    cp_dict, bank_dict, freq_index, initial_level = args
    cp = CascadedParams(
        source=cp_dict["source"],
        omega_b=cp_dict["omega_list"][freq_index],
        p=cp_dict["p"],
        gamma_b=cp_dict["gamma_b"],
    )
    cascaded = build_cascaded(cp)
    cfg = AnalyzerBankConfig(**bank_dict)
    psi0 = ground_analyzer_state(cascaded, initial_level)
    return freq_index, ensemble_excitation(cascaded, psi0, cfg, freq_index)


def _run_analyzer(
    cfg: ScenarioConfig,
    report: RunReport,
    out: str,
    times: tuple[float, ...] | None = None,
) -> list[SpectrumTrace]:
    times = cfg.readout_times if times is None else times
    bad = [t for t in times if t > cfg.cascade.T * (1 + 1e-12)]
    if bad:
        raise ValueError(f"readout times {bad} beyond analyzer horizon {cfg.cascade.T}")
    omegas = cfg.analyzer_omegas()
    cp_base = CascadedParams(
        source=cfg.source,
        omega_b=float(omegas[0]),
        p=cfg.cascade.p,
        gamma_b=cfg.cascade.gamma_b,
    )
    if cfg.cascade.method == "master":
        records = bank_excitation_master(
            cp_base,
            omegas,
            T=cfg.cascade.T,
            dt=cfg.cascade.dt,
            record_dt=cfg.cascade.record_dt,
            source_level=cfg.initial_level,
        )
    else:
        bank_dict = {
            "omega_list": omegas,
            "n_traj": cfg.cascade.n_traj,
            "T": cfg.cascade.T,
            "dt": cfg.cascade.dt,
            "base_seed": cfg.base_seed,
            "record_dt": cfg.cascade.record_dt,
        }
        cp_dict = {
            "source": cfg.source,
            "omega_list": omegas,
            "p": cfg.cascade.p,
            "gamma_b": cfg.cascade.gamma_b,
        }
        jobs = [(cp_dict, bank_dict, i, cfg.initial_level) for i in range(len(omegas))]
        results: dict[int, ExcitationRecord] = {}
        if cfg.workers > 1:
            with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
                for idx, rec in pool.map(_mcwf_bank_entry, jobs):
                    results[idx] = rec
        else:
            for job in jobs:
                idx, rec = _mcwf_bank_entry(job)
                results[idx] = rec
        records = [results[i] for i in range(len(omegas))]

    for idx, rec in enumerate(records):
        path = os.path.join(out, f"excitation_w{idx:03d}.tsv")
        write_excitation(
            path,
            rec,
            {"freq_index": str(idx), "base_seed": str(cfg.base_seed)},
        )
        report.files.append(path)
    traces = analyzer_spectrum(records, times, normalization="unit_max")
    for t, trace in zip(times, traces):
        path = os.path.join(out, f"spectrum_analyzer_t{t:g}.tsv")
        write_spectrum(
            path,
            trace,
            {"route": "analyzer", "method": cfg.cascade.method},
        )
        report.files.append(path)
        report.peaks.setdefault("analyzer", {})[t] = find_peaks(trace, cfg.peak_prominence)
    return traces


def _conservation_probe(cfg: ScenarioConfig, report: RunReport) -> None:
    """Short evolution recording worst-case state-invariant defects."""
    model = three_level_model(cfg.source, ROTATING)
    res = evolve(model, _initial_state(cfg), 0.0, 50.0, record_every=50)
    tr_defect = max(abs(s.matrix.trace().real - 1.0) for s in res.states)
    herm = max(float(np.max(np.abs(s.matrix - s.matrix.conj().T))) for s in res.states)
    eig_min = min(float(np.linalg.eigvalsh(s.matrix).min()) for s in res.states)
    report.invariant_checks["evolve_trace_defect"] = tr_defect
    report.invariant_checks["evolve_hermiticity_defect"] = herm
    report.invariant_checks["evolve_min_eigenvalue"] = eig_min


def _align_routes(
    wk_trace: SpectrumTrace,
    physical_trace: SpectrumTrace,
    analyzer_trace: SpectrumTrace,
    cfg: ScenarioConfig,
) -> tuple[list[dict], float]:
    """Match the stationary peak set across the three routes.

    Reference positions are the wk peaks; for the other routes the nearest
    local maximum is reported. Tolerance is 2 max(gamma_f, gamma_b,
    analyzer grid spacing).
    """
    d_omega_bank = (cfg.omega.maximum - cfg.omega.minimum) / max(1, cfg.cascade.omega_count - 1)
    tol = 2.0 * max(cfg.gamma_f, cfg.cascade.gamma_b, d_omega_bank, cfg.omega.spacing)
    wk_peaks = find_peaks(wk_trace, cfg.peak_prominence)
    rows = []
    phys_max = local_maxima(physical_trace)
    ana_max = local_maxima(analyzer_trace)
    for p in wk_peaks:
        row = {"wk": p.omega, "physical": None, "analyzer": None, "ok": False}
        if phys_max.size:
            q = float(phys_max[np.argmin(np.abs(phys_max - p.omega))])
            row["physical"] = q
        if ana_max.size:
            q = float(ana_max[np.argmin(np.abs(ana_max - p.omega))])
            row["analyzer"] = q
        row["ok"] = (
            row["physical"] is not None
            and row["analyzer"] is not None
            and abs(row["physical"] - p.omega) <= tol
            and abs(row["analyzer"] - p.omega) <= tol
        )
        rows.append(row)
    return rows, tol


def run_scenario(cfg: ScenarioConfig) -> RunReport:
    """Execute the configured scenario and write its outputs."""
    t_start = time.monotonic()
    report = RunReport(scenario=cfg.scenario)
    out = cfg.output_dir
    ensure_dir(out)
    manifest_path = os.path.join(out, "manifest.txt")
    entries = {"status": "incomplete", "package_version": __version__, "git": _git_describe()}
    entries.update(_flatten_config(cfg))
    write_manifest(manifest_path, entries)

    stage = "setup"
    try:
        stage = "conservation-probe"
        _conservation_probe(cfg, report)
        if cfg.scenario == "stationary_wk":
            stage = "wk-spectrum"
            _run_wk(cfg, report, out)
        elif cfg.scenario == "physical_scan":
            stage = "physical-spectrum"
            _run_physical(cfg, report, out)
        elif cfg.scenario == "analyzer_bank":
            stage = "analyzer-bank"
            _run_analyzer(cfg, report, out)
        elif cfg.scenario == "compare_all":
            t_final = max(cfg.readout_times)
            stage = "wk-spectrum"
            wk_trace = _run_wk(cfg, report, out)
            stage = "physical-spectrum"
            phys_traces = _run_physical(cfg, report, out, horizon=t_final, times=(t_final,))
            stage = "analyzer-bank"
            ana_traces = _run_analyzer(cfg, report, out, times=(t_final,))
            stage = "route-alignment"
            report.alignment, report.alignment_tolerance = _align_routes(
                wk_trace, phys_traces[-1], ana_traces[-1], cfg
            )
        else:
            raise ValueError(f"unknown scenario {cfg.scenario!r}")
    except Exception as err:
        entries["status"] = f"incomplete (stage '{stage}' failed)"
        write_manifest(manifest_path, entries)
        raise StageError(stage, err) from err

    report.wall_time_s = time.monotonic() - t_start
    entries["status"] = "complete"
    entries["files"] = ", ".join(os.path.basename(f) for f in report.files)
    write_manifest(manifest_path, entries)
    report.files.append(manifest_path)
    return report
