"""Two-time correlation functions via the quantum regression theorem,
the stationary emission spectrum, and the two-time correlation grid that
feeds the filtered (physical) spectrum.

The regression step propagates a seeded matrix with the same generator as
the density matrix. For ``<B(t+tau) A(t)>`` the seed is ``A rho(t)`` and
the result is ``Tr[B D(tau)]``; reversed time order follows by complex
conjugation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .hilbert import DensityMatrix, HilbertSpace, Operator, ketbra
from .lindblad import LindbladModel, ThreeLevelParams, evolve, steady_state

__all__ = [
    "DetectionPart",
    "DetectionOperator",
    "CorrelationGrid",
    "SpectrumTrace",
    "qrt_two_time",
    "qrt_sandwich",
    "wk_spectrum",
    "correlation_grid",
]

RAW = "raw"
UNIT_MAX = "unit_max"

# resolution broadening applied to the stationary correlations before the
# transform: half the natural linewidth of the reference atom. Sub-linewidth
# dressed structure and truncation ripple both fall below it.
DEFAULT_BROADENING = 0.05


@dataclass(frozen=True)
class DetectionPart:
    """One transition term of the detection operator.

    `frequency` is the lab-frame frequency the coupling oscillates at; it
    restores the optical phases that the rotating frame removes when
    stationary correlations are assembled.
    """

    weight: float
    coupling: Operator
    frequency: float


@dataclass(frozen=True)
class DetectionOperator:
    """Weighted sum of transition couplings, kept in parts.

    The default is G1 |1><2| + G2 |1><3| at the transition frequencies
    w2 - w1 and w3 - w1.
    """

    parts: tuple[DetectionPart, ...]

    def __post_init__(self):
        if not self.parts:
            raise ValueError("detection operator needs at least one part")
        dims = self.parts[0].coupling.space.subsystem_dims
        if any(p.coupling.space.subsystem_dims != dims for p in self.parts):
            raise ValueError("detection parts live on different spaces")
        object.__setattr__(self, "parts", tuple(self.parts))

    @property
    def space(self) -> HilbertSpace:
        return self.parts[0].coupling.space

    def combined(self) -> Operator:
        total = self.parts[0].weight * self.parts[0].coupling
        for p in self.parts[1:]:
            total = total + p.weight * p.coupling
        return total

    @classmethod
    def default(cls, params: ThreeLevelParams) -> DetectionOperator:
        space = HilbertSpace((3,))
        w1, w2, w3 = params.energies
        g1, g2 = params.decays
        return cls(
            (
                DetectionPart(g1, ketbra(space, 0, 1), w2 - w1),
                DetectionPart(g2, ketbra(space, 0, 2), w3 - w1),
            )
        )


@dataclass(frozen=True)
class SpectrumTrace:
    """Ordered (frequency, intensity) samples tagged with a readout time."""

    readout_time: float
    omegas: np.ndarray = field(repr=False)
    intensities: np.ndarray = field(repr=False)
    normalization: str = RAW

    def __post_init__(self):
        om = np.asarray(self.omegas, dtype=float)
        iv = np.asarray(self.intensities, dtype=float)
        if om.ndim != 1 or om.shape != iv.shape:
            raise ValueError("omegas and intensities must be matching 1-d arrays")
        if om.size >= 2 and not np.all(np.diff(om) > 0):
            raise ValueError("omegas must be strictly increasing")
        if iv.size and iv.min() < 0:
            raise ValueError("intensities must be nonnegative")
        if self.normalization not in (RAW, UNIT_MAX):
            raise ValueError(f"unknown normalization {self.normalization!r}")
        om.setflags(write=False)
        iv.setflags(write=False)
        object.__setattr__(self, "omegas", om)
        object.__setattr__(self, "intensities", iv)

    def unit_max(self) -> SpectrumTrace:
        peak = self.intensities.max() if self.intensities.size else 0.0
        if peak <= 0:
            return replace(self, normalization=UNIT_MAX)
        return replace(
            self, intensities=self.intensities / peak, normalization=UNIT_MAX
        )


@dataclass(frozen=True)
class CorrelationGrid:
    """Correlations <O^dag(t1) O(t2)> on a uniform grid over [0, T].

    `N` counts intervals per axis, so `values` holds (N+1) x (N+1) samples
    at times m * dt_grid with dt_grid = T / N; entry (m, n) pairs
    t1 = m dt_grid with t2 = n dt_grid.
    """

    T: float
    N: int
    values: np.ndarray = field(repr=False)

    SYMMETRY_TOL = 1e-7
    DIAGONAL_FLOOR = -1e-9

    def __post_init__(self):
        if self.N < 2:
            raise ValueError(f"grid needs N >= 2, got {self.N}")
        v = np.asarray(self.values, dtype=complex)
        if v.shape != (self.N + 1, self.N + 1):
            raise ValueError(
                f"values shape {v.shape} does not match N = {self.N} intervals"
            )
        defect = float(np.max(np.abs(v - v.conj().T)))
        if defect > self.SYMMETRY_TOL:
            raise ValueError(f"conjugate-symmetry defect {defect:.3e}")
        diag = v.diagonal()
        if float(np.max(np.abs(diag.imag))) > self.SYMMETRY_TOL:
            raise ValueError("diagonal entries must be real")
        if float(diag.real.min()) < self.DIAGONAL_FLOOR:
            raise ValueError(f"negative diagonal entry {diag.real.min():.3e}")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def dt_grid(self) -> float:
        return self.T / self.N

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.N + 1) * self.dt_grid


# -- seeded regression propagation ---------------------------------------------------


def _march_seed(
    model: LindbladModel,
    seed: np.ndarray,
    t_start: float,
    taus: np.ndarray,
    dt: float,
    contract,
) -> np.ndarray:
    """Propagate a seed matrix from absolute time t_start, evaluating
    `contract` at each requested tau (sorted, starting at >= 0)."""
    from .lindblad import rk4_step_matrix

    out = np.empty(len(taus), dtype=complex)
    d = seed.copy()
    tau_now = 0.0
    for i, tau in enumerate(taus):
        span = tau - tau_now
        if span > 0:
            n = max(1, int(math.ceil(span / dt - 1e-12)))
            h = span / n
            for k in range(n):
                d = rk4_step_matrix(model, d, t_start + tau_now + k * h, h)
            tau_now = tau
        out[i] = contract(d)
    return out


def _checked_taus(taus) -> np.ndarray:
    t = np.asarray(taus, dtype=float)
    if t.ndim != 1 or t.size == 0:
        raise ValueError("taus must be a nonempty 1-d sequence")
    if t[0] < 0:
        raise ValueError(
            "negative tau: compute the reversed order by complex conjugation"
        )
    if np.any(np.diff(t) < 0):
        raise ValueError("taus must be sorted ascending")
    return t


def _state_at(model, rho0: DensityMatrix, t: float, dt: float) -> np.ndarray:
    if t == 0.0:
        return rho0.matrix.copy()
    return evolve(model, rho0, 0.0, t, dt=dt, record_every=10**9).final().matrix.copy()


def qrt_two_time(
    model: LindbladModel,
    rho0: DensityMatrix,
    o1: Operator,
    o2: Operator,
    t: float,
    taus,
    dt: float | None = None,
) -> np.ndarray:
    """<O2(t + tau) O1(t)> for tau >= 0.

    Evolves rho to t, seeds D = O1 rho(t), propagates D with the
    master-equation generator and contracts with O2.
    """
    taus = _checked_taus(taus)
    if dt is None:
        dt = model.default_dt
    rho_t = _state_at(model, rho0, t, dt)
    seed = o1.matrix @ rho_t
    o2m = o2.matrix
    return _march_seed(model, seed, t, taus, dt, lambda d: np.trace(o2m @ d))


def qrt_sandwich(
    model: LindbladModel,
    rho0: DensityMatrix,
    o1: Operator,
    o2: Operator,
    o3: Operator,
    t: float,
    taus,
    dt: float | None = None,
) -> np.ndarray:
    """<O1(t) O2(t + tau) O3(t)>: same regression with seed O1 rho(t) O3."""
    taus = _checked_taus(taus)
    if dt is None:
        dt = model.default_dt
    rho_t = _state_at(model, rho0, t, dt)
    seed = o1.matrix @ rho_t @ o3.matrix
    o2m = o2.matrix
    return _march_seed(model, seed, t, taus, dt, lambda d: np.trace(o2m @ d))


# -- stationary spectrum --------------------------------------------------------------


def stationary_correlation(
    model: LindbladModel,
    detector: DetectionOperator,
    taus,
    include_elastic: bool = False,
    dt: float | None = None,
) -> np.ndarray:
    """Stationary lab-frame correlation g(tau) = <O^dag(t) O(t+tau)>.

    Each part-pair correlator is computed in the model's frame from the
    steady state and re-dressed with its lab phase e^{-i w tau}. Pairs of
    parts with different lab frequencies average to zero over t in the
    stationary limit and are dropped exactly. By default the coherent
    plateau <O_x^dag><O_y> is removed, leaving the fluctuation spectrum.
    """
    taus = _checked_taus(taus)
    if dt is None:
        dt = model.default_dt
    ss = steady_state(model).matrix
    g = np.zeros(len(taus), dtype=complex)
    for px in detector.parts:
        seed = ss @ px.coupling.matrix.conj().T
        for py in detector.parts:
            if abs(px.frequency - py.frequency) > 1e-12:
                continue
            oym = py.coupling.matrix
            k = _march_seed(model, seed, 0.0, taus, dt, lambda d: np.trace(oym @ d))
            if not include_elastic:
                k = k - np.trace(oym @ ss) * np.trace(ss @ px.coupling.matrix.conj().T)
            g += px.weight * py.weight * np.exp(-1j * py.frequency * taus) * k
    return g


def wk_spectrum(
    model: LindbladModel,
    detector: DetectionOperator,
    omega_grid,
    t_max: float = 200.0,
    dtau: float = 0.02,
    broadening: float = DEFAULT_BROADENING,
    include_elastic: bool = False,
    dt: float | None = None,
) -> SpectrumTrace:
    """Stationary spectrum: transform of the steady-state correlation.

    g(tau) is computed for tau in [0, t_max], extended to negative tau by
    conjugation, damped by e^{-broadening tau} (a Lorentzian resolution
    kernel; 0 disables it) and integrated against e^{i w tau} with
    trapezoid weights. The intensity is the real part clipped at zero.
    """
    omegas = np.asarray(omega_grid, dtype=float)
    n_tau = int(round(t_max / dtau))
    taus = np.arange(n_tau + 1) * dtau
    g = stationary_correlation(model, detector, taus, include_elastic, dt=dt)
    if broadening > 0:
        g = g * np.exp(-broadening * taus)
    wts = np.full(n_tau + 1, dtau)
    wts[0] *= 0.5
    wts[-1] *= 0.5
    gw = g * wts
    # two-sided integral: g(-tau) = conj(g(tau)) makes it 2 Re of the half side
    s = np.empty(len(omegas))
    chunk = 200
    for i in range(0, len(omegas), chunk):
        block = omegas[i : i + chunk]
        s[i : i + chunk] = 2.0 * np.real(np.exp(1j * np.outer(block, taus)) @ gw)
    return SpectrumTrace(t_max, omegas, np.clip(s, 0.0, None))


# -- correlation grid ------------------------------------------------------------------


def _generator_pieces(model: LindbladModel):
    """Row-major vectorized generator split into its static part and one
    oscillating commutator piece per drive phase."""
    from .lindblad import LindbladModel as LM
    from .lindblad import build_superoperator, commutator_superoperator

    static_drives = tuple(d for d in model.drives if d.is_static)
    base = LM(model.space, model.h_static, static_drives, model.collapse_ops, frame=model.frame)
    g_static = build_superoperator(base)
    pieces = []
    for d in model.drives:
        if d.is_static:
            continue
        c = d.amplitude * d.coupling.matrix
        pieces.append((commutator_superoperator(c).T.copy(), d.phase_frequency))
        pieces.append((commutator_superoperator(c.conj().T).T.copy(), -d.phase_frequency))
    return g_static.T.copy(), pieces


def correlation_grid(
    model: LindbladModel,
    rho0: DensityMatrix,
    detector: DetectionOperator | Operator,
    T: float,
    N: int,
    substeps: int | None = None,
) -> CorrelationGrid:
    """March the full two-time table <O^dag(t1) O(t2)> over [0, T]^2.

    The upper-left triangle t1 >= t2 is filled by seeding D = O rho(t2) at
    every grid node and propagating all seeds (and rho itself) in t1 with
    shared RK4 steps on the vectorized generator; the opposite triangle is
    the complex conjugate.
    """
    if N < 2:
        raise ValueError(f"grid needs N >= 2, got {N}")
    o = detector.combined() if isinstance(detector, DetectionOperator) else detector
    om = o.matrix
    dt_grid = T / N
    if substeps is None:
        substeps = max(1, int(math.ceil(dt_grid / model.default_dt - 1e-12)))
    dt = dt_grid / substeps
    dim = model.dim
    n_nodes = N + 1

    g_static_t, pieces = _generator_pieces(model)
    eye = np.eye(dim, dtype=complex)
    seed_op_t = np.kron(om, eye).T.copy()  # vec(O M) = (O x I) vec(M), row-major
    # Tr[O^dag D] as a vec dot: sum_ij (O^dag)_ij D_ji
    contract = om.conj().reshape(-1)

    def deriv(t: float, y: np.ndarray) -> np.ndarray:
        # the generator is a small matrix; fold the drive phases into it
        # once per evaluation instead of once per batch row
        g = g_static_t
        if pieces:
            g = g.copy()
            for g_t, w in pieces:
                g += np.exp(1j * w * t) * g_t
        return y @ g

    # row 0 carries vec(rho), rows 1.. one seed per grid node
    batch = np.zeros((1 + n_nodes, dim * dim), dtype=complex)
    batch[0] = rho0.matrix.reshape(-1)
    values = np.zeros((n_nodes, n_nodes), dtype=complex)
    for node in range(n_nodes):
        batch[1 + node] = batch[0] @ seed_op_t
        active = batch[: 2 + node]
        values[node, : node + 1] = active[1:] @ contract
        if node == N:
            break
        t_node = node * dt_grid
        for s in range(substeps):
            t = t_node + s * dt
            k1 = deriv(t, active)
            k2 = deriv(t + 0.5 * dt, active + 0.5 * dt * k1)
            k3 = deriv(t + 0.5 * dt, active + 0.5 * dt * k2)
            k4 = deriv(t + dt, active + dt * k3)
            active += (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    iu = np.triu_indices(n_nodes, 1)
    values[iu] = np.conj(values[(iu[1], iu[0])])
    return CorrelationGrid(T, N, values)
