"""Filtered time-dependent spectrum: causal Fabry-Perot response plus the
double time integral over the two-time correlation grid.

The detected intensity at readout time t is a quadratic form of the grid
against the filter kernel, so only correlations from the past of t enter;
the system does not exist before t = 0 and earlier contributions are zero.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .qrt import CorrelationGrid, SpectrumTrace

__all__ = [
    "FilterParams",
    "filter_response",
    "physical_spectrum",
    "physical_spectrum_scan",
]

DEFAULT_GAMMA_F = 0.1


@dataclass(frozen=True)
class FilterParams:
    """Fabry-Perot passband: center omega_f, width gamma_f."""

    omega_f: float
    gamma_f: float = DEFAULT_GAMMA_F

    def __post_init__(self):
        if self.gamma_f <= 0:
            raise ValueError(f"gamma_f must be > 0, got {self.gamma_f}")


def filter_response(t: float, f: FilterParams) -> complex:
    """Causal filter response: Theta(t) gamma_f exp(-(gamma_f + i omega_f) t)."""
    if t < 0:
        return 0.0 + 0.0j
    return f.gamma_f * np.exp(-(f.gamma_f + 1j * f.omega_f) * t)


def _grid_index(grid: CorrelationGrid, t: float) -> int:
    if t > grid.T * (1 + 1e-12):
        raise ValueError(f"readout time {t} beyond grid horizon {grid.T}")
    if t < 0:
        raise ValueError(f"readout time {t} < 0")
    idx = int(round(t / grid.dt_grid))
    return min(idx, grid.N)


def _kernel(grid: CorrelationGrid, n_t: int, t: float, omegas: np.ndarray, gamma_f: float) -> np.ndarray:
    """Trapezoid-weighted filter kernel u[m, w] over grid nodes up to n_t."""
    tm = np.arange(n_t + 1) * grid.dt_grid
    w = np.full(n_t + 1, grid.dt_grid)
    w[0] *= 0.5
    w[-1] *= 0.5
    damp = w * np.exp(-gamma_f * (t - tm))
    return damp[:, None] * np.exp(1j * np.outer(t - tm, omegas))


def _scan_raw(grid: CorrelationGrid, t: float, omegas: np.ndarray, gamma_f: float) -> np.ndarray:
    n_t = _grid_index(grid, t)
    sub = grid.values[: n_t + 1, : n_t + 1]
    u = _kernel(grid, n_t, t, omegas, gamma_f)
    return (gamma_f**2) * np.real(np.einsum("mw,mw->w", u, sub @ u.conj()))


def physical_spectrum(grid: CorrelationGrid, t: float, f: FilterParams) -> float:
    """Filtered intensity S(t, omega_f, gamma_f) per the double-integral
    definition, evaluated as a trapezoid quadratic form over the grid.

    Returns the (unclipped) real part; the imaginary part vanishes by the
    grid's conjugate symmetry.
    """
    return float(_scan_raw(grid, t, np.array([f.omega_f]), f.gamma_f)[0])


def physical_spectrum_scan(
    grid: CorrelationGrid,
    times,
    omegas,
    gamma_f: float = DEFAULT_GAMMA_F,
) -> list[SpectrumTrace]:
    """One trace per readout time, each point the filtered intensity at
    (t, omega_f). Negative quadrature residue is clipped at zero."""
    om = np.asarray(omegas, dtype=float)
    traces = []
    for t in times:
        s = _scan_raw(grid, float(t), om, gamma_f)
        traces.append(SpectrumTrace(float(t), om, np.clip(s, 0.0, None)))
    return traces
