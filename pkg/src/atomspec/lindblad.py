"""Lindblad models and their integration.

Builds the driven three-level atom of the package (and arbitrary models),
provides the master-equation right-hand side, a fixed-step RK4 integrator,
the vectorized generator (superoperator) and its steady state.

Conventions
-----------
A model's Hamiltonian is ``h_static + sum_d amp_d * (C_d e^{+i w_d t} + h.c.)``
with ``C_d`` the lowering part of drive ``d``; the ``e^{+i w t}`` sign on the
lowering operator makes the resonant rotating frame static. Collapse
operators are rate-absorbed (each is ``sqrt(Gamma) L``). Vectorization is
row-major: ``vec(rho)[i*d + j] = rho[i, j]``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .hilbert import (
    DensityMatrix,
    DimensionMismatchError,
    HilbertSpace,
    InvariantViolationError,
    Operator,
    ketbra,
    validate_density_matrix,
)

__all__ = [
    "DriveTerm",
    "LindbladModel",
    "ThreeLevelParams",
    "EvolutionResult",
    "IntegrationError",
    "DegenerateSteadyStateError",
    "three_level_model",
    "rhs",
    "evolve",
    "build_superoperator",
    "commutator_superoperator",
    "steady_state",
    "rk4_step_matrix",
]

LAB = "lab"
ROTATING = "rotating"

# default fixed steps: the lab frame must resolve the bare w3 = 8 timescale
DEFAULT_DT = {LAB: 0.005, ROTATING: 0.02}


class IntegrationError(RuntimeError):
    """Evolution aborted: a stored state violated its invariants."""


class DegenerateSteadyStateError(RuntimeError):
    """The generator's null space has dimension > 1."""


@dataclass(frozen=True)
class DriveTerm:
    """One laser drive: amp * (coupling e^{+i w t} + h.c.)."""

    coupling: Operator  # the lowering part, e.g. |1><2|
    amplitude: float  # Omega / 2
    phase_frequency: float  # w_l

    def __post_init__(self):
        if self.amplitude < 0:
            raise ValueError(f"drive amplitude must be >= 0, got {self.amplitude}")

    @property
    def is_static(self) -> bool:
        return self.amplitude == 0.0 or self.phase_frequency == 0.0


@dataclass(frozen=True)
class LindbladModel:
    space: HilbertSpace
    h_static: Operator
    drives: tuple[DriveTerm, ...]
    collapse_ops: tuple[Operator, ...]
    frame: str = ROTATING

    def __post_init__(self):
        if not self.h_static.is_hermitian(1e-12):
            raise InvariantViolationError("h_static is not Hermitian to 1e-12")
        for op in (self.h_static, *[d.coupling for d in self.drives], *self.collapse_ops):
            if op.space.subsystem_dims != self.space.subsystem_dims:
                raise DimensionMismatchError("all model operators must share the model space")
        object.__setattr__(self, "drives", tuple(self.drives))
        object.__setattr__(self, "collapse_ops", tuple(self.collapse_ops))

    @property
    def dim(self) -> int:
        return self.space.dim

    @property
    def is_time_independent(self) -> bool:
        return all(d.is_static for d in self.drives)

    @property
    def default_dt(self) -> float:
        return DEFAULT_DT.get(self.frame, 0.005)

    def hamiltonian(self, t: float) -> np.ndarray:
        """Raw Hamiltonian matrix at time t."""
        h = self.h_static.matrix.copy()
        for d in self.drives:
            if d.amplitude == 0.0:
                continue
            c = d.amplitude * np.exp(1j * d.phase_frequency * t) * d.coupling.matrix
            h += c + c.conj().T
        return h

    def static_hamiltonian(self) -> np.ndarray:
        """Hamiltonian with static (zero-frequency) drives folded in.

        Rejects genuinely time-dependent models.
        """
        if not self.is_time_independent:
            raise ValueError("model is time dependent")
        return self.hamiltonian(0.0)


@dataclass(frozen=True)
class ThreeLevelParams:
    """Level energies, decay rates and Rabi amplitudes of the source atom."""

    energies: tuple[float, float, float] = (0.0, 4.0, 8.0)
    decays: tuple[float, float] = (0.1, 0.1)
    rabi: tuple[float, float] = (2.0, 2.0)

    def __post_init__(self):
        if any(g < 0 for g in self.decays):
            raise ValueError(f"decay rates must be >= 0, got {self.decays}")
        if any(o < 0 for o in self.rabi):
            raise ValueError(f"Rabi amplitudes must be >= 0, got {self.rabi}")

    @property
    def laser_frequencies(self) -> tuple[float, float]:
        """Resonant drive frequencies (w2 - w1, w3 - w2)."""
        w1, w2, w3 = self.energies
        return (w2 - w1, w3 - w2)


def three_level_model(params: ThreeLevelParams, frame: str = ROTATING) -> LindbladModel:
    """The driven dissipative three-level atom.

    Lab frame: bare energies on the diagonal plus two explicitly
    time-dependent resonant drives. Rotating frame: the resonant drives are
    exact, so the Hamiltonian reduces to the static Omega/2 couplings with
    zero diagonal. Collapse operators are sqrt(G1)|1><2| and sqrt(G2)|1><3|
    in both frames.
    """
    space = HilbertSpace((3,))
    g1, g2 = params.decays
    o1, o2 = params.rabi
    wl1, wl2 = params.laser_frequencies
    collapse = (
        np.sqrt(g1) * ketbra(space, 0, 1),
        np.sqrt(g2) * ketbra(space, 0, 2),
    )
    if frame == LAB:
        h = Operator(space, np.diag(np.asarray(params.energies, dtype=complex)))
        drives = (
            DriveTerm(ketbra(space, 0, 1), o1 / 2.0, wl1),
            DriveTerm(ketbra(space, 1, 2), o2 / 2.0, wl2),
        )
        return LindbladModel(space, h, drives, collapse, frame=LAB)
    if frame == ROTATING:
        m = np.zeros((3, 3), dtype=complex)
        m[0, 1] = m[1, 0] = o1 / 2.0
        m[1, 2] = m[2, 1] = o2 / 2.0
        return LindbladModel(space, Operator(space, m), (), collapse, frame=ROTATING)
    raise ValueError(f"unknown frame {frame!r}")


# -- right-hand side ---------------------------------------------------------------


def rhs_matrix(model: LindbladModel, m: np.ndarray, t: float) -> np.ndarray:
    """Master-equation generator applied to an arbitrary matrix.

    The quantum regression theorem propagates non-Hermitian seed matrices
    with this same generator, so no Hermiticity is assumed here.
    """
    h = model.hamiltonian(t)
    out = -1j * (h @ m - m @ h)
    for c in model.collapse_ops:
        cm = c.matrix
        cdc = cm.conj().T @ cm
        out += cm @ m @ cm.conj().T - 0.5 * (cdc @ m + m @ cdc)
    return out


def rhs(model: LindbladModel, rho: DensityMatrix, t: float = 0.0) -> Operator:
    """d rho / dt of the master equation; traceless and Hermiticity preserving."""
    if rho.space.subsystem_dims != model.space.subsystem_dims:
        raise DimensionMismatchError("state and model live on different spaces")
    return Operator(model.space, rhs_matrix(model, rho.matrix, t))


def rk4_step_matrix(model: LindbladModel, m: np.ndarray, t: float, dt: float) -> np.ndarray:
    """One classical RK4 step of the master-equation flow on a matrix."""
    k1 = rhs_matrix(model, m, t)
    k2 = rhs_matrix(model, m + 0.5 * dt * k1, t + 0.5 * dt)
    k3 = rhs_matrix(model, m + 0.5 * dt * k2, t + 0.5 * dt)
    k4 = rhs_matrix(model, m + dt * k3, t + dt)
    return m + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


@dataclass(frozen=True)
class EvolutionResult:
    times: np.ndarray
    states: tuple[DensityMatrix, ...]

    def populations(self) -> np.ndarray:
        """Diagonal elements of every stored state, shape (n_times, dim)."""
        return np.array([s.matrix.diagonal().real for s in self.states])

    def final(self) -> DensityMatrix:
        return self.states[-1]


def evolve(
    model: LindbladModel,
    rho0: DensityMatrix,
    t0: float,
    t1: float,
    dt: float | None = None,
    record_every: int = 1,
    validate: bool = True,
) -> EvolutionResult:
    """Integrate the master equation with fixed-step RK4.

    The step count is the nearest integer to (t1 - t0) / dt and the step
    is stretched to land exactly on t1. States are stored every
    `record_every` steps (plus the endpoints) and each stored state is
    checked against the density-matrix invariants; a violation aborts with
    a diagnostic naming the failing time.
    """
    if dt is None:
        dt = model.default_dt
    if dt <= 0:
        raise ValueError(f"dt must be > 0, got {dt}")
    if t1 < t0:
        raise ValueError(f"t1 must be >= t0, got [{t0}, {t1}]")
    if rho0.space.subsystem_dims != model.space.subsystem_dims:
        raise DimensionMismatchError("initial state and model live on different spaces")

    n_steps = max(1, int(round((t1 - t0) / dt))) if t1 > t0 else 0
    if n_steps:
        dt = (t1 - t0) / n_steps
    times = [t0]
    states = [rho0]
    m = rho0.matrix.copy()
    for k in range(n_steps):
        t = t0 + k * dt
        m = rk4_step_matrix(model, m, t, dt)
        if (k + 1) % record_every == 0 or k == n_steps - 1:
            t_rec = t0 + (k + 1) * dt
            if validate:
                try:
                    validate_density_matrix(m, where=f"t = {t_rec:.6g}")
                except InvariantViolationError as err:
                    raise IntegrationError(
                        f"evolve aborted at t = {t_rec:.6g} (dt = {dt}): {err}"
                    ) from err
            times.append(t_rec)
            states.append(DensityMatrix.from_matrix(model.space, m))
    return EvolutionResult(np.asarray(times), tuple(states))


# -- vectorized generator -----------------------------------------------------------


def commutator_superoperator(x: np.ndarray) -> np.ndarray:
    """Row-major superoperator of m -> -i (x m - m x)."""
    d = x.shape[0]
    eye = np.eye(d, dtype=complex)
    return -1j * (np.kron(x, eye) - np.kron(eye, x.T))


def _dissipator_superoperator(c: np.ndarray) -> np.ndarray:
    d = c.shape[0]
    eye = np.eye(d, dtype=complex)
    cdc = c.conj().T @ c
    return (
        np.kron(c, c.conj())
        - 0.5 * np.kron(cdc, eye)
        - 0.5 * np.kron(eye, cdc.T)
    )


def build_superoperator(model: LindbladModel) -> np.ndarray:
    """Matrix G with vec(d rho/dt) = G vec(rho), row-major vec.

    Assembled from the Kronecker identities (independently of `rhs`, which
    the tests use as the oracle for this construction). Only defined for
    time-independent models.
    """
    if not model.is_time_independent:
        raise ValueError("superoperator requires a time-independent model")
    g = commutator_superoperator(model.static_hamiltonian())
    for c in model.collapse_ops:
        g += _dissipator_superoperator(c.matrix)
    return g


def steady_state(model: LindbladModel, null_tol_factor: float = 1e-10) -> DensityMatrix:
    """Unique steady state from the SVD null space of the generator.

    Raises DegenerateSteadyStateError when the numerical null space has
    dimension greater than one.
    """
    g = build_superoperator(model)
    _, s, vh = np.linalg.svd(g)
    scale = s[0] if s[0] > 0 else 1.0
    null_dim = int(np.sum(s <= null_tol_factor * scale))
    if null_dim == 0:
        raise DegenerateSteadyStateError(
            f"no null vector found (smallest singular value {s[-1]:.3e})"
        )
    if null_dim > 1:
        raise DegenerateSteadyStateError(
            f"null space dimension {null_dim}: steady state is not unique"
        )
    d = model.dim
    m = vh[-1].conj().reshape(d, d)
    m = 0.5 * (m + m.conj().T)
    tr = np.trace(m).real
    if abs(tr) < 1e-14:
        raise DegenerateSteadyStateError("null vector is traceless; not a state")
    m = m / np.trace(m)
    residual = float(np.linalg.norm(g @ m.reshape(-1)))
    if residual > 1e-9:
        raise DegenerateSteadyStateError(f"steady-state residual {residual:.3e} > 1e-9")
    # scrub the tiny negative eigenvalues SVD can leave behind
    m = _project_to_physical(m)
    return DensityMatrix.from_matrix(model.space, m)


def _project_to_physical(m: np.ndarray) -> np.ndarray:
    lam, v = np.linalg.eigh(m)
    if lam.min() >= 0:
        return m
    if lam.min() < -1e-10:
        raise InvariantViolationError(f"steady state eigenvalue {lam.min():.3e} < -1e-10")
    lam = np.clip(lam, 0.0, None)
    m = (v * lam) @ v.conj().T
    return m / np.trace(m)
