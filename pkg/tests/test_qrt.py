import numpy as np
import pytest
from scipy.linalg import expm

from atomspec.hilbert import DensityMatrix, HilbertSpace, Operator, identity, ketbra
from atomspec.lindblad import (
    LAB,
    ROTATING,
    LindbladModel,
    ThreeLevelParams,
    evolve,
    rhs,
    three_level_model,
)
from atomspec.qrt import (
    CorrelationGrid,
    DetectionOperator,
    DetectionPart,
    SpectrumTrace,
    correlation_grid,
    qrt_sandwich,
    qrt_two_time,
    stationary_correlation,
    wk_spectrum,
)
from atomspec.peaks import find_peaks

S2 = HilbertSpace((2,))
S3 = HilbertSpace((3,))


def projector_state(space, index):
    return DensityMatrix(ketbra(space, index, index))


def random_operator(rng, space):
    d = space.dim
    return Operator(space, rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d)))


def generator_from_rhs(model):
    """Oracle generator assembled by applying the rhs to basis matrices,
    independent of the package's Kronecker construction."""
    d = model.dim
    g = np.zeros((d * d, d * d), dtype=complex)
    for i in range(d):
        for j in range(d):
            e = np.zeros((d, d), dtype=complex)
            e[i, j] = 1.0
            from atomspec.lindblad import rhs_matrix

            g[:, i * d + j] = rhs_matrix(model, e, 0.0).reshape(-1)
    return g


def expm_two_time(model, rho0, o1, o2, t, taus):
    """Brute-force vectorized-propagator oracle for <O2(t+tau) O1(t)>."""
    g = generator_from_rhs(model)
    rho_t = expm(g * t) @ rho0.matrix.reshape(-1)
    d = model.dim
    seed = (o1.matrix @ rho_t.reshape(d, d)).reshape(-1)
    out = []
    for tau in taus:
        prop = expm(g * tau) @ seed
        out.append(np.trace(o2.matrix @ prop.reshape(d, d)))
    return np.array(out)


class TestQrtTwoTime:
    def test_identity_pair_is_one(self):
        m = three_level_model(ThreeLevelParams(), ROTATING)
        vals = qrt_two_time(
            m, projector_state(S3, 1), identity(S3), identity(S3), 1.0, [0.0, 0.5, 2.0]
        )
        np.testing.assert_allclose(vals, 1.0, atol=1e-9)

    def test_coincidence_limit(self, rng):
        m = three_level_model(ThreeLevelParams(), ROTATING)
        o1, o2 = random_operator(rng, S3), random_operator(rng, S3)
        rho0 = projector_state(S3, 1)
        (val,) = qrt_two_time(m, rho0, o1, o2, 2.0, [0.0])
        rho_t = evolve(m, rho0, 0.0, 2.0, dt=0.02).final()
        expected = np.trace(o2.matrix @ o1.matrix @ rho_t.matrix)
        assert abs(val - expected) < 1e-8

    def test_two_level_decay_analytic(self):
        gamma = 0.3
        m = LindbladModel(
            S2, Operator(S2, np.zeros((2, 2))), (), (np.sqrt(gamma) * ketbra(S2, 0, 1),)
        )
        sp, sm = ketbra(S2, 1, 0), ketbra(S2, 0, 1)
        t = 1.0
        taus = np.array([0.0, 0.5, 1.0, 2.0])
        vals = qrt_two_time(m, projector_state(S2, 1), sm, sp, t, taus, dt=0.005)
        expected = np.exp(-gamma * t) * np.exp(-gamma * taus / 2)
        np.testing.assert_allclose(vals, expected, atol=1e-8)

    def test_against_expm_oracle(self, rng):
        m = three_level_model(ThreeLevelParams(), ROTATING)
        rho0 = projector_state(S3, 1)
        o1, o2 = random_operator(rng, S3), random_operator(rng, S3)
        taus = np.array([0.0, 0.3, 1.1, 4.0])
        vals = qrt_two_time(m, rho0, o1, o2, 1.5, taus, dt=0.01)
        oracle = expm_two_time(m, rho0, o1, o2, 1.5, taus)
        np.testing.assert_allclose(vals, oracle, atol=1e-7)

    def test_negative_tau_rejected(self):
        m = three_level_model(ThreeLevelParams(), ROTATING)
        with pytest.raises(ValueError):
            qrt_two_time(m, projector_state(S3, 1), identity(S3), identity(S3), 0.0, [-1.0, 0.0])
        with pytest.raises(ValueError):
            qrt_two_time(m, projector_state(S3, 1), identity(S3), identity(S3), 0.0, [1.0, 0.5])


class TestQrtSandwich:
    def test_identity_outer_pair_reduces_to_average(self):
        m = three_level_model(ThreeLevelParams(), ROTATING)
        rho0 = projector_state(S3, 1)
        proj2 = ketbra(S3, 1, 1)
        taus = np.array([0.0, 1.0, 3.0])
        vals = qrt_sandwich(m, rho0, identity(S3), proj2, identity(S3), 0.0, taus, dt=0.01)
        res = evolve(m, rho0, 0.0, 3.0, dt=0.01, record_every=100)
        for tau, val in zip(taus, vals):
            idx = int(np.argmin(np.abs(res.times - tau)))
            assert abs(val - res.states[idx].matrix[1, 1]) < 1e-8

    def test_identity_middle_is_constant(self, rng):
        m = three_level_model(ThreeLevelParams(), ROTATING)
        rho0 = projector_state(S3, 1)
        o1, o3 = random_operator(rng, S3), random_operator(rng, S3)
        t = 1.0
        vals = qrt_sandwich(m, rho0, o1, identity(S3), o3, t, [0.0, 1.0, 5.0], dt=0.01)
        rho_t = evolve(m, rho0, 0.0, t, dt=0.01).final()
        const = np.trace(o3.matrix @ o1.matrix @ rho_t.matrix)
        np.testing.assert_allclose(vals, const, atol=1e-8)

    def test_against_expm_oracle(self, rng):
        m = three_level_model(ThreeLevelParams(rabi=(1.0, 0.5)), ROTATING)
        rho0 = projector_state(S3, 1)
        o1, o2, o3 = (random_operator(rng, S3) for _ in range(3))
        taus = np.array([0.0, 0.7, 2.3])
        vals = qrt_sandwich(m, rho0, o1, o2, o3, 1.0, taus, dt=0.01)
        g = generator_from_rhs(m)
        rho_t = (expm(g * 1.0) @ rho0.matrix.reshape(-1)).reshape(3, 3)
        seed = (o1.matrix @ rho_t @ o3.matrix).reshape(-1)
        oracle = np.array(
            [np.trace(o2.matrix @ (expm(g * tau) @ seed).reshape(3, 3)) for tau in taus]
        )
        np.testing.assert_allclose(vals, oracle, atol=1e-7)


@pytest.fixture(scope="module")
def omega_grid():
    return np.linspace(0.0, 12.0, 1201)


@pytest.fixture(scope="module")
def strong_lab():
    params = ThreeLevelParams(rabi=(2.0, 2.0))
    return params, three_level_model(params, LAB)


class TestWkSpectrum:
    def test_zero_detector_gives_zero(self, omega_grid):
        m = three_level_model(ThreeLevelParams(), ROTATING)
        det = DetectionOperator(
            (DetectionPart(0.0, ketbra(S3, 0, 1), 4.0), DetectionPart(0.0, ketbra(S3, 0, 2), 8.0))
        )
        trace = wk_spectrum(m, det, omega_grid, t_max=20.0)
        np.testing.assert_array_equal(trace.intensities, 0.0)

    def test_weak_drive_two_peaks(self, omega_grid):
        params = ThreeLevelParams(rabi=(0.2, 0.2))
        m = three_level_model(params, ROTATING)
        trace = wk_spectrum(m, DetectionOperator.default(params), omega_grid)
        peaks = find_peaks(trace, 0.05)
        assert len(peaks) == 2
        assert abs(peaks.omegas[0] - 4.0) <= 0.1
        assert abs(peaks.omegas[1] - 8.0) <= 0.1

    def test_strong_drive_eight_peaks(self, omega_grid):
        params = ThreeLevelParams(rabi=(2.0, 2.0))
        m = three_level_model(params, ROTATING)
        trace = wk_spectrum(m, DetectionOperator.default(params), omega_grid)
        assert len(find_peaks(trace, 0.05)) == 8

    def test_weak_peaks_near_transitions(self, omega_grid):
        # within 2 (2 pi / t_max) of the transition frequencies
        params = ThreeLevelParams(rabi=(0.2, 0.2))
        m = three_level_model(params, ROTATING)
        trace = wk_spectrum(m, DetectionOperator.default(params), omega_grid, t_max=200.0)
        peaks = find_peaks(trace, 0.05)
        tol = 2 * (2 * np.pi / 200.0)
        assert abs(peaks.omegas[0] - 4.0) <= tol
        assert abs(peaks.omegas[1] - 8.0) <= tol

    def test_truncation_error_shrinks_with_horizon(self):
        # negative excursions of the unclipped transform decrease as the
        # horizon grows
        params = ThreeLevelParams(rabi=(2.0, 2.0))
        m = three_level_model(params, ROTATING)
        det = DetectionOperator.default(params)
        omegas = np.linspace(0.0, 12.0, 401)
        worst = []
        for t_max in (50.0, 100.0, 200.0):
            n = int(round(t_max / 0.02))
            taus = np.arange(n + 1) * 0.02
            g = stationary_correlation(m, det, taus) * np.exp(-0.05 * taus)
            wts = np.full(n + 1, 0.02)
            wts[0] *= 0.5
            wts[-1] *= 0.5
            s = 2.0 * np.real(np.exp(1j * np.outer(omegas, taus)) @ (g * wts))
            worst.append(max(0.0, -s.min()))
        assert worst[0] >= worst[1] >= worst[2]

    def test_elastic_flag_restores_coherent_plateau(self, omega_grid):
        params = ThreeLevelParams(rabi=(0.2, 0.2))
        m = three_level_model(params, ROTATING)
        det = DetectionOperator.default(params)
        taus = np.array([0.0, 50.0, 100.0])
        g_full = stationary_correlation(m, det, taus, include_elastic=True)
        g_inc = stationary_correlation(m, det, taus, include_elastic=False)
        # fluctuations decay; the full correlation keeps its coherent
        # plateau (two phase-rotating terms, so only a lower bound)
        assert abs(g_inc[-1]) < 1e-4
        assert abs(g_full[-1]) > 2e-4


class TestSpectrumTrace:
    def test_requires_increasing_omegas(self):
        with pytest.raises(ValueError):
            SpectrumTrace(0.0, np.array([1.0, 1.0]), np.array([0.0, 0.0]))

    def test_requires_nonnegative_intensity(self):
        with pytest.raises(ValueError):
            SpectrumTrace(0.0, np.array([1.0, 2.0]), np.array([0.1, -0.2]))

    def test_unit_max(self):
        trace = SpectrumTrace(1.0, np.array([1.0, 2.0, 3.0]), np.array([1.0, 4.0, 2.0]))
        normed = trace.unit_max()
        assert normed.normalization == "unit_max"
        assert normed.intensities.max() == pytest.approx(1.0)


class TestCorrelationGrid:
    def test_diagonal_is_coincidence(self, strong_lab):
        params, model = strong_lab
        det = DetectionOperator.default(params)
        rho0 = projector_state(S3, 1)
        grid = correlation_grid(model, rho0, det, 4.0, 16)
        o = det.combined().matrix
        res = evolve(model, rho0, 0.0, 4.0, dt=grid.dt_grid / 50, record_every=50)
        for k in (0, 4, 8, 16):
            expected = np.trace(o.conj().T @ o @ res.states[k].matrix)
            assert abs(grid.values[k, k] - expected) < 1e-7
            assert grid.values[k, k].real >= 0.0

    def test_dark_system_grid_is_zero(self):
        params = ThreeLevelParams(rabi=(0.0, 0.0))
        model = three_level_model(params, ROTATING)
        grid = correlation_grid(
            model, projector_state(S3, 0), DetectionOperator.default(params), 4.0, 8
        )
        np.testing.assert_allclose(grid.values, 0.0, atol=1e-14)

    def test_mirrored_entries_match_direct_recomputation(self, strong_lab):
        # recompute a few t1 < t2 entries directly: <O^dag(t1) O(t2)> =
        # Tr[O prop(rho(t1) O^dag)], instead of conjugating the mirror
        params, model = strong_lab
        det = DetectionOperator.default(params)
        rho0 = projector_state(S3, 1)
        grid = correlation_grid(model, rho0, det, 4.0, 16)
        o = det.combined()
        from atomspec.qrt import _march_seed

        for m_idx, n_idx in ((1, 5), (3, 10), (0, 16)):
            t1 = grid.times[m_idx]
            t2 = grid.times[n_idx]
            rho_t1 = evolve(model, rho0, 0.0, t1, dt=0.004).final().matrix if t1 > 0 else rho0.matrix
            seed = rho_t1 @ o.matrix.conj().T
            (val,) = _march_seed(
                model, seed, t1, np.array([t2 - t1]), 0.004, lambda d: np.trace(o.matrix @ d)
            )
            assert abs(grid.values[m_idx, n_idx] - val) < 1e-7

    def test_rejects_small_n(self, strong_lab):
        params, model = strong_lab
        with pytest.raises(ValueError):
            correlation_grid(model, projector_state(S3, 1), DetectionOperator.default(params), 4.0, 1)

    def test_grid_validation(self):
        values = np.zeros((4, 4), dtype=complex)
        values[0, 1] = 1.0  # breaks conjugate symmetry
        with pytest.raises(ValueError):
            CorrelationGrid(3.0, 3, values)
        bad_diag = np.zeros((4, 4), dtype=complex)
        bad_diag[2, 2] = -1.0
        with pytest.raises(ValueError):
            CorrelationGrid(3.0, 3, bad_diag)
