"""Cascaded source-analyzer system: the three-level atom drives a two-level
analyzer atom through a unidirectional channel. The analyzer's excitation
probability, read as a function of its transition frequency, is the
spectrum of the incoming radiation.

Frame
-----
The joint [3, 2] model is built in the frame that rotates source levels 2
and 3 at the first laser frequency (w2 - w1) and the analyzer at the same
reference. That is the unique choice keeping all four collapse operators
and the cross coupling static: the 1-2 drive folds into the Hamiltonian,
the analyzer carries the detuning (omega_b - (w2 - w1)) |e><e|, and the
only time dependence left is the 2-3 drive at frequency w3 - w2.
Populations and analyzer excitation are frame invariant.

The cross-coupling coefficient is (i/2) sqrt(G_i p * 0.5 Gamma_B) per
channel, the value required for the analyzer to leave the source dynamics
exactly untouched given the 0.5 Gamma_B analyzer share in each of the two
mixed collapse operators.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .hilbert import (
    DensityMatrix,
    HilbertSpace,
    Operator,
    StateVector,
    ketbra,
    lift,
)
from .lindblad import (
    DriveTerm,
    LindbladModel,
    ThreeLevelParams,
    build_superoperator,
    commutator_superoperator,
)
from .qrt import SpectrumTrace

__all__ = [
    "CascadedParams",
    "CascadedModel",
    "AnalyzerBankConfig",
    "ExcitationRecord",
    "build_cascaded",
    "source_model_joint_frame",
    "ground_analyzer_state",
    "derive_trajectory_seed",
    "mcwf_trajectory",
    "ensemble_excitation",
    "bank_excitation_master",
    "analyzer_spectrum",
]

MCWF = "mcwf"
MASTER = "master"

MAX_JUMP_PROBABILITY = 0.1


@dataclass(frozen=True)
class CascadedParams:
    """Source parameters plus the analyzer channel: captured fraction p,
    analyzer frequency omega_b and analyzer decay gamma_b."""

    source: ThreeLevelParams
    omega_b: float
    p: float = 0.005
    gamma_b: float = 0.001

    def __post_init__(self):
        if not 0.0 <= self.p <= 1.0:
            raise ValueError(f"p must be within [0, 1], got {self.p}")
        if self.gamma_b <= 0:
            raise ValueError(f"gamma_b must be > 0, got {self.gamma_b}")


@dataclass(frozen=True)
class CascadedModel:
    """Joint-space Lindblad model with bookkeeping for readout."""

    model: LindbladModel
    params: CascadedParams
    excited_projector: Operator
    frame_reference: float  # analyzer rotation frequency (w2 - w1)

    @property
    def space(self) -> HilbertSpace:
        return self.model.space


@dataclass(frozen=True)
class AnalyzerBankConfig:
    """A bank of analyzer atoms: one frequency per ensemble."""

    omega_list: np.ndarray = field(repr=False)
    n_traj: int = 300
    T: float = 200.0
    dt: float = 0.01
    base_seed: int = 0
    record_dt: float = 0.5

    def __post_init__(self):
        om = np.asarray(self.omega_list, dtype=float)
        if om.ndim != 1 or om.size == 0:
            raise ValueError("omega_list must be a nonempty 1-d sequence")
        if om.size >= 2 and not np.all(np.diff(om) > 0):
            raise ValueError("omega_list must be strictly increasing")
        if self.n_traj < 1:
            raise ValueError(f"n_traj must be >= 1, got {self.n_traj}")
        if self.dt <= 0 or self.T <= 0 or self.record_dt <= 0:
            raise ValueError("T, dt and record_dt must be positive")
        om.setflags(write=False)
        object.__setattr__(self, "omega_list", om)


@dataclass(frozen=True)
class ExcitationRecord:
    """Analyzer excitation probability versus time for one frequency."""

    omega_b: float
    times: np.ndarray = field(repr=False)
    p_excited: np.ndarray = field(repr=False)
    stderr: np.ndarray = field(repr=False)
    method: str = MCWF

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        p = np.asarray(self.p_excited, dtype=float)
        e = np.asarray(self.stderr, dtype=float)
        if not (t.shape == p.shape == e.shape) or t.ndim != 1:
            raise ValueError("times, p_excited and stderr must be matching 1-d arrays")
        if p.size and (p.min() < -1e-12 or p.max() > 1.0 + 1e-12):
            raise ValueError("excitation probabilities must lie in [0, 1]")
        for a in (t, p, e):
            a.setflags(write=False)
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "p_excited", p)
        object.__setattr__(self, "stderr", e)


# -- model construction ----------------------------------------------------------------


def source_model_joint_frame(params: ThreeLevelParams) -> LindbladModel:
    """The standalone source in the same frame the joint model uses.

    Tracing the analyzer out of the joint evolution reproduces this model
    step for step, which is what the unidirectionality check compares.
    """
    space = HilbertSpace((3,))
    w1, w2, w3 = params.energies
    g1, g2 = params.decays
    o1, o2 = params.rabi
    h = np.diag([0.0, 0.0, w3 - w2]).astype(complex)
    h[0, 1] = h[1, 0] = o1 / 2.0
    drives = (DriveTerm(ketbra(space, 1, 2), o2 / 2.0, w3 - w2),)
    collapse = (np.sqrt(g1) * ketbra(space, 0, 1), np.sqrt(g2) * ketbra(space, 0, 2))
    return LindbladModel(space, Operator(space, h), drives, collapse)


def build_cascaded(cp: CascadedParams) -> CascadedModel:
    """Assemble the joint master equation of source plus analyzer.

    Collapse operators: two pure source decays carrying the (1 - p)
    fraction, and two mixed operators combining the captured source
    fraction with the analyzer's own decay, sqrt(G_i p) S_i +
    sqrt(0.5 gamma_b) sigma_-. The Hamiltonian holds the source terms, the
    analyzer detuning and the static cross coupling.
    """
    src = HilbertSpace((3,))
    ana = HilbertSpace((2,))
    joint = HilbertSpace((3, 2))
    w1, w2, w3 = cp.source.energies
    g1, g2 = cp.source.decays
    o1, o2 = cp.source.rabi
    c_ref = w2 - w1

    s1 = lift(ketbra(src, 0, 1), 0, joint).matrix
    s2 = lift(ketbra(src, 0, 2), 0, joint).matrix
    sm = lift(ketbra(ana, 0, 1), 1, joint).matrix
    pe = lift(ketbra(ana, 1, 1), 1, joint)

    h = lift(Operator(src, np.diag([0.0, 0.0, w3 - w2]).astype(complex)), 0, joint).matrix.copy()
    h += (o1 / 2.0) * (s1 + s1.conj().T)
    h += (cp.omega_b - c_ref) * pe.matrix

    a1 = math.sqrt(g1 * cp.p)
    a2 = math.sqrt(g2 * cp.p)
    b = math.sqrt(0.5 * cp.gamma_b)
    h += 1j * (a1 * b / 2.0) * (s1.conj().T @ sm - sm.conj().T @ s1)
    h += 1j * (a2 * b / 2.0) * (s2.conj().T @ sm - sm.conj().T @ s2)

    collapse = (
        Operator(joint, math.sqrt(g1 * (1.0 - cp.p)) * s1),
        Operator(joint, math.sqrt(g2 * (1.0 - cp.p)) * s2),
        Operator(joint, a1 * s1 + b * sm),
        Operator(joint, a2 * s2 + b * sm),
    )
    drives = (
        DriveTerm(Operator(joint, lift(ketbra(src, 1, 2), 0, joint).matrix), o2 / 2.0, w3 - w2),
    )
    model = LindbladModel(joint, Operator(joint, h), drives, collapse)
    return CascadedModel(model, cp, pe, c_ref)


def ground_analyzer_state(cascaded: CascadedModel, source_level: int = 2) -> StateVector:
    """|source_level> x |g> in the joint space; levels labelled 1..3."""
    if source_level not in (1, 2, 3):
        raise ValueError(f"source level must be 1..3, got {source_level}")
    return _basis_joint(cascaded.space, source_level - 1)


def _basis_joint(space: HilbertSpace, src_index: int) -> StateVector:
    amp = np.zeros(space.dim, dtype=complex)
    amp[src_index * space.subsystem_dims[1]] = 1.0
    return StateVector(space, amp)


# -- Monte-Carlo wavefunction engine ----------------------------------------------------


def derive_trajectory_seed(base_seed: int, freq_index: int, traj_index: int) -> np.random.SeedSequence:
    """Deterministic per-(frequency, trajectory) seed for exact reruns."""
    return np.random.SeedSequence(base_seed, spawn_key=(freq_index, traj_index))


def _unwrap(model) -> tuple[LindbladModel, Operator | None]:
    if isinstance(model, CascadedModel):
        return model.model, model.excited_projector
    return model, None


def _mcwf_batch(
    model: LindbladModel,
    observable: Operator,
    psi0: StateVector,
    T: float,
    dt: float,
    record_dt: float,
    streams: np.ndarray,
) -> tuple[np.ndarray, np.ndarray]:
    """Quantum-jump unraveling for a batch of trajectories.

    Each trajectory consumes exactly one uniform per step: a jump fires
    when u < dt * sum_i <L_i^dag L_i> and the same u picks the channel
    through the cumulative channel probabilities, so a trajectory's draw
    sequence is independent of how it is batched. Between jumps the state
    follows the non-Hermitian drift H - (i/2) sum L^dag L and is
    renormalized every step.

    Returns (record_times, excitation[n_rec, n_traj]).
    """
    n_traj, n_steps = streams.shape
    if int(round(T / dt)) != n_steps:
        raise ValueError("stream length does not match T / dt")
    stride = max(1, int(round(record_dt / dt)))
    dim = model.dim

    l_ops = np.array([c.matrix for c in model.collapse_ops])
    h_base = model.h_static.matrix.astype(complex).copy()
    if len(l_ops):
        h_base = h_base - 0.5j * sum(c.conj().T @ c for c in l_ops)
    drives = [(d.amplitude, d.coupling.matrix, d.phase_frequency) for d in model.drives]
    obs = observable.matrix

    def h_eff_t(t: float) -> np.ndarray:
        h = h_base
        if drives:
            h = h.copy()
            for amp, c, w in drives:
                x = amp * np.exp(1j * w * t) * c
                h += x + x.conj().T
        return h

    def drift(t: float, y: np.ndarray) -> np.ndarray:
        return -1j * (y @ h_eff_t(t).T)

    psi = np.tile(psi0.amplitudes, (n_traj, 1))
    exc = np.real(np.einsum("ni,ij,nj->n", psi.conj(), obs, psi))
    times = [0.0]
    records = [exc]
    for k in range(n_steps):
        t = k * dt
        if len(l_ops):
            l_psi = np.einsum("cij,nj->cni", l_ops, psi)
            dp_channel = dt * np.sum(np.abs(l_psi) ** 2, axis=2)
            dp_total = dp_channel.sum(axis=0)
            worst = float(dp_total.max())
            if worst > MAX_JUMP_PROBABILITY:
                raise RuntimeError(
                    f"jump probability {worst:.3f} > {MAX_JUMP_PROBABILITY} at "
                    f"t = {t:.4g}; reduce dt"
                )
            u = streams[:, k]
            jump = u < dp_total
        else:
            jump = None

        k1 = drift(t, psi)
        k2 = drift(t + 0.5 * dt, psi + 0.5 * dt * k1)
        k3 = drift(t + 0.5 * dt, psi + 0.5 * dt * k2)
        k4 = drift(t + dt, psi + dt * k3)
        nxt = psi + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)

        if jump is not None and jump.any():
            idx = np.nonzero(jump)[0]
            cum = np.cumsum(dp_channel[:, idx], axis=0)
            channel = np.argmax(u[idx] < cum, axis=0)
            nxt[idx] = l_psi[channel, idx, :]
        nxt /= np.linalg.norm(nxt, axis=1)[:, None]
        psi = nxt
        if (k + 1) % stride == 0 or k == n_steps - 1:
            times.append((k + 1) * dt)
            records.append(np.real(np.einsum("ni,ij,nj->n", psi.conj(), obs, psi)))
    return np.asarray(times), np.asarray(records)


def mcwf_trajectory(
    model: CascadedModel | LindbladModel,
    psi0: StateVector,
    T: float,
    dt: float,
    seed,
    record_dt: float = 0.5,
    observable: Operator | None = None,
) -> ExcitationRecord:
    """A single quantum-jump trajectory; bit-identical for a given seed.

    For a CascadedModel the recorded observable defaults to the analyzer
    excitation projector.
    """
    lind, default_obs = _unwrap(model)
    obs = observable if observable is not None else default_obs
    if obs is None:
        raise ValueError("observable required for a bare LindbladModel")
    n_steps = int(round(T / dt))
    rng = np.random.Generator(np.random.PCG64(seed))
    streams = rng.random(n_steps)[None, :]
    times, rec = _mcwf_batch(lind, obs, psi0, T, dt, record_dt, streams)
    omega_b = model.params.omega_b if isinstance(model, CascadedModel) else math.nan
    return ExcitationRecord(omega_b, times, rec[:, 0], np.zeros(len(times)), method=MCWF)


def ensemble_excitation(
    model: CascadedModel | LindbladModel,
    psi0: StateVector,
    cfg: AnalyzerBankConfig,
    freq_index: int,
    observable: Operator | None = None,
    n_traj: int | None = None,
) -> ExcitationRecord:
    """Trajectory-ensemble mean excitation for one bank entry.

    Trajectory j uses the seed derived from (base_seed, freq_index, j), so
    the first n members of a larger ensemble are the smaller ensemble.
    stderr is the sample standard deviation over trajectories divided by
    sqrt(n_traj).
    """
    lind, default_obs = _unwrap(model)
    obs = observable if observable is not None else default_obs
    if obs is None:
        raise ValueError("observable required for a bare LindbladModel")
    n = cfg.n_traj if n_traj is None else n_traj
    n_steps = int(round(cfg.T / cfg.dt))
    streams = np.empty((n, n_steps))
    for j in range(n):
        ss = derive_trajectory_seed(cfg.base_seed, freq_index, j)
        streams[j] = np.random.Generator(np.random.PCG64(ss)).random(n_steps)
    times, rec = _mcwf_batch(lind, obs, psi0, cfg.T, cfg.dt, cfg.record_dt, streams)
    mean = rec.mean(axis=1)
    if n > 1:
        err = rec.std(axis=1, ddof=1) / math.sqrt(n)
    else:
        err = np.zeros(len(times))
    omega_b = model.params.omega_b if isinstance(model, CascadedModel) else math.nan
    return ExcitationRecord(omega_b, times, mean, err, method=MCWF)


# -- direct master-equation bank --------------------------------------------------------


def _bank_generator_parts(cp_base: CascadedParams):
    """Vectorized generator split G(t) = G0 + detuning * Gdet
    + e^{i nu t} Gp + e^{-i nu t} Gm shared by the whole bank."""
    ref = build_cascaded(
        CascadedParams(cp_base.source, omega_b=cp_base.source.energies[1] - cp_base.source.energies[0],
                       p=cp_base.p, gamma_b=cp_base.gamma_b)
    )
    static = LindbladModel(
        ref.model.space, ref.model.h_static, (), ref.model.collapse_ops
    )
    g0 = build_superoperator(static)
    gdet = commutator_superoperator(ref.excited_projector.matrix)
    (drive,) = ref.model.drives
    c = drive.amplitude * drive.coupling.matrix
    gp = commutator_superoperator(c)
    gm = commutator_superoperator(c.conj().T)
    return g0, gdet, gp, gm, drive.phase_frequency, ref


def bank_excitation_master(
    cp_base: CascadedParams,
    omega_list,
    T: float = 200.0,
    dt: float = 0.01,
    record_dt: float = 0.5,
    source_level: int = 2,
) -> list[ExcitationRecord]:
    """Analyzer excitation for every bank frequency by direct integration
    of the joint master equation, all frequencies advanced together.

    The analyzer frequency enters the generator only through the linear
    detuning term, so one split of the superoperator serves the bank.
    """
    omegas = np.asarray(omega_list, dtype=float)
    g0, gdet, gp, gm, nu, ref = _bank_generator_parts(cp_base)
    det = omegas - ref.frame_reference
    dim = ref.model.dim

    rho0 = DensityMatrix.pure(_basis_joint(ref.space, source_level - 1)).matrix
    y = np.tile(rho0.reshape(-1), (len(omegas), 1))
    g0t, gdt, gpt, gmt = g0.T.copy(), gdet.T.copy(), gp.T.copy(), gm.T.copy()
    pe_vec = ref.excited_projector.matrix.T.reshape(-1)

    def deriv(t: float, y: np.ndarray) -> np.ndarray:
        out = y @ g0t
        out += det[:, None] * (y @ gdt)
        out += np.exp(1j * nu * t) * (y @ gpt)
        out += np.exp(-1j * nu * t) * (y @ gmt)
        return out

    n_steps = int(round(T / dt))
    stride = max(1, int(round(record_dt / dt)))
    times = [0.0]
    records = [np.real(y @ pe_vec)]
    for k in range(n_steps):
        t = k * dt
        k1 = deriv(t, y)
        k2 = deriv(t + 0.5 * dt, y + 0.5 * dt * k1)
        k3 = deriv(t + 0.5 * dt, y + 0.5 * dt * k2)
        k4 = deriv(t + dt, y + dt * k3)
        y += (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if (k + 1) % stride == 0 or k == n_steps - 1:
            times.append((k + 1) * dt)
            records.append(np.real(y @ pe_vec))
    times = np.asarray(times)
    table = np.asarray(records)
    zero = np.zeros(len(times))
    return [
        ExcitationRecord(float(w), times, np.clip(table[:, i], 0.0, 1.0), zero, method=MASTER)
        for i, w in enumerate(omegas)
    ]


def analyzer_spectrum(
    records: list[ExcitationRecord],
    readout_times,
    normalization: str = "unit_max",
) -> list[SpectrumTrace]:
    """Spectra read from the analyzer bank: excitation versus frequency at
    each readout time. All records must share one time grid."""
    if not records:
        raise ValueError("no excitation records")
    t0 = records[0].times
    for r in records[1:]:
        if r.times.shape != t0.shape or not np.allclose(r.times, t0, atol=1e-9):
            raise ValueError("excitation records on mismatched time grids")
    omegas = np.array([r.omega_b for r in records])
    if np.any(np.diff(omegas) <= 0):
        raise ValueError("records must be ordered by strictly increasing omega_b")
    traces = []
    for t in readout_times:
        idx = int(np.argmin(np.abs(t0 - t)))
        if abs(t0[idx] - t) > 1e-6 + 1e-9 * max(1.0, abs(t)):
            raise ValueError(f"readout time {t} not on the recorded grid")
        vals = np.array([r.p_excited[idx] for r in records])
        trace = SpectrumTrace(float(t), omegas, np.clip(vals, 0.0, None))
        traces.append(trace.unit_max() if normalization == "unit_max" else trace)
    return traces
