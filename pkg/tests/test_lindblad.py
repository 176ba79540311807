import numpy as np
import pytest

from atomspec.hilbert import DensityMatrix, HilbertSpace, Operator, ketbra
from atomspec.lindblad import (
    LAB,
    ROTATING,
    DegenerateSteadyStateError,
    DriveTerm,
    IntegrationError,
    LindbladModel,
    ThreeLevelParams,
    build_superoperator,
    evolve,
    rhs,
    steady_state,
    three_level_model,
)

S2 = HilbertSpace((2,))
S3 = HilbertSpace((3,))


def decay_model(gamma=0.3):
    """Two-level atom with pure decay |g><e| at rate gamma."""
    return LindbladModel(
        S2,
        Operator(S2, np.zeros((2, 2))),
        (),
        (np.sqrt(gamma) * ketbra(S2, 0, 1),),
    )


def projector_state(space, index):
    return DensityMatrix(ketbra(space, index, index))


def random_density(rng, space):
    d = space.dim
    a = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    m = a @ a.conj().T
    return DensityMatrix.from_matrix(space, m / np.trace(m))


class TestThreeLevelModel:
    def test_undriven_rotating_hamiltonian_is_zero(self):
        m = three_level_model(ThreeLevelParams(rabi=(0.0, 0.0)), ROTATING)
        np.testing.assert_array_equal(m.h_static.matrix, np.zeros((3, 3)))
        assert len(m.collapse_ops) == 2
        np.testing.assert_allclose(
            m.collapse_ops[0].matrix, np.sqrt(0.1) * ketbra(S3, 0, 1).matrix
        )
        np.testing.assert_allclose(
            m.collapse_ops[1].matrix, np.sqrt(0.1) * ketbra(S3, 0, 2).matrix
        )

    @pytest.mark.parametrize("omega,entry", [(0.2, 0.1), (2.0, 1.0)])
    def test_rotating_coupling_entries(self, omega, entry):
        m = three_level_model(ThreeLevelParams(rabi=(omega, omega)), ROTATING)
        h = m.h_static.matrix
        nonzero = np.abs(h) > 1e-15
        assert nonzero.sum() == 4
        assert np.allclose(np.abs(h[nonzero]), entry)
        assert np.allclose(np.diag(h), 0.0)

    def test_lab_frame_structure(self):
        params = ThreeLevelParams()
        m = three_level_model(params, LAB)
        np.testing.assert_array_equal(m.h_static.matrix, np.diag([0.0, 4.0, 8.0]))
        assert [d.phase_frequency for d in m.drives] == [4.0, 4.0]
        assert [d.amplitude for d in m.drives] == [1.0, 1.0]
        h0 = m.hamiltonian(0.0)
        assert np.allclose(h0, h0.conj().T)

    def test_parameter_validation(self):
        with pytest.raises(ValueError):
            ThreeLevelParams(decays=(-0.1, 0.1))
        with pytest.raises(ValueError):
            ThreeLevelParams(rabi=(-1.0, 0.0))


class TestRhs:
    def test_free_case_is_zero(self, rng):
        m = LindbladModel(S3, Operator(S3, np.zeros((3, 3))), (), ())
        out = rhs(m, random_density(rng, S3))
        np.testing.assert_array_equal(out.matrix, np.zeros((3, 3)))

    def test_pure_decay_rates(self):
        m = three_level_model(ThreeLevelParams(rabi=(0.0, 0.0), decays=(0.1, 0.0)), ROTATING)
        out = rhs(m, projector_state(S3, 1)).matrix
        assert out[1, 1].real == pytest.approx(-0.1, abs=1e-14)
        assert out[0, 0].real == pytest.approx(+0.1, abs=1e-14)

    def test_traceless_on_random_states(self, rng):
        m = three_level_model(ThreeLevelParams(), ROTATING)
        for _ in range(10):
            out = rhs(m, random_density(rng, S3))
            assert abs(out.trace()) < 1e-13
            np.testing.assert_allclose(out.matrix, out.dag().matrix, atol=1e-13)


class TestEvolve:
    def test_frozen_without_dynamics(self):
        m = three_level_model(
            ThreeLevelParams(decays=(0.0, 0.0), rabi=(0.0, 0.0)), ROTATING
        )
        res = evolve(m, projector_state(S3, 1), 0.0, 5.0, dt=0.05, record_every=20)
        for state in res.states:
            np.testing.assert_allclose(state.matrix, res.states[0].matrix, atol=1e-14)

    def test_exponential_decay_law(self):
        m = three_level_model(ThreeLevelParams(rabi=(0.0, 0.0)), ROTATING)
        res = evolve(m, projector_state(S3, 1), 0.0, 10.0, dt=0.02, record_every=500)
        p22 = res.final().matrix[1, 1].real
        assert abs(p22 - np.exp(-0.1 * 10.0)) < 1e-6

    def test_strong_drive_rabi_course(self):
        # population first drops, oscillates, then settles near steady state
        m = three_level_model(ThreeLevelParams(), ROTATING)
        res = evolve(m, projector_state(S3, 1), 0.0, 200.0, dt=0.02, record_every=25)
        p22 = res.populations()[:, 1]
        t = res.times
        assert p22[np.searchsorted(t, 1.0)] < p22[0]
        early = p22[(t > 1.0) & (t < 30.0)]
        assert np.sign(np.diff(early)).std() > 0  # oscillation, not monotone
        late = p22[t > 150.0]
        assert late.max() - late.min() < 1e-3
        ss = steady_state(m).matrix[1, 1].real
        assert abs(late[-1] - ss) < 1e-4

    def test_invariant_violation_aborts(self):
        m = three_level_model(ThreeLevelParams(), ROTATING)
        with pytest.raises(IntegrationError):
            evolve(m, projector_state(S3, 1), 0.0, 50.0, dt=2.5)

    def test_conservation_suite(self):
        m = three_level_model(ThreeLevelParams(), ROTATING)
        res = evolve(m, projector_state(S3, 1), 0.0, 200.0, dt=0.01, record_every=100)
        for state in res.states:
            mmat = state.matrix
            assert abs(mmat.trace().real - 1.0) < 1e-9
            assert np.max(np.abs(mmat - mmat.conj().T)) < 1e-9
            assert np.linalg.eigvalsh(mmat).min() > -1e-8

    def test_frame_equivalence_of_populations(self):
        params = ThreeLevelParams()
        rho0 = projector_state(S3, 1)
        lab = evolve(three_level_model(params, LAB), rho0, 0.0, 20.0, dt=0.005, record_every=400)
        rot = evolve(three_level_model(params, ROTATING), rho0, 0.0, 20.0, dt=0.005, record_every=400)
        assert np.max(np.abs(lab.populations() - rot.populations())) < 1e-5

    def test_fourth_order_self_convergence(self):
        params = ThreeLevelParams()
        rho0 = projector_state(S3, 1)
        m = three_level_model(params, ROTATING)
        coarse = evolve(m, rho0, 0.0, 200.0, dt=0.02, record_every=500)
        fine = evolve(m, rho0, 0.0, 200.0, dt=0.01, record_every=1000)
        worst = max(
            np.max(np.abs(a.matrix - b.matrix))
            for a, b in zip(coarse.states, fine.states)
        )
        assert worst < 1e-6


class TestSuperoperator:
    def test_zero_model(self):
        m = LindbladModel(S2, Operator(S2, np.zeros((2, 2))), (), ())
        np.testing.assert_array_equal(build_superoperator(m), np.zeros((4, 4)))

    def test_matches_rhs_on_random_states(self, rng):
        m = three_level_model(ThreeLevelParams(), ROTATING)
        g = build_superoperator(m)
        for _ in range(20):
            state = random_density(rng, S3)
            via_g = (g @ state.matrix.reshape(-1)).reshape(3, 3)
            via_rhs = rhs(m, state).matrix
            np.testing.assert_allclose(via_g, via_rhs, atol=1e-12)

    def test_two_level_decay_eigenvalues(self):
        gamma = 0.3
        eig = np.sort_complex(np.linalg.eigvals(build_superoperator(decay_model(gamma))))
        expected = np.sort_complex(np.array([0.0, -gamma, -gamma / 2, -gamma / 2]))
        np.testing.assert_allclose(eig, expected, atol=1e-12)

    def test_rejects_time_dependent_model(self):
        m = three_level_model(ThreeLevelParams(), LAB)
        with pytest.raises(ValueError):
            build_superoperator(m)

    def test_static_drive_is_folded(self):
        drive = DriveTerm(ketbra(S2, 0, 1), 0.4, 0.0)
        m = LindbladModel(S2, Operator(S2, np.zeros((2, 2))), (drive,), ())
        g = build_superoperator(m)
        h = m.static_hamiltonian()
        assert abs(h[0, 1] - 0.4) < 1e-15
        assert np.linalg.norm(g) > 0


class TestSteadyState:
    def test_pure_decay_reaches_ground(self):
        ss = steady_state(decay_model())
        np.testing.assert_allclose(ss.matrix, np.diag([1.0, 0.0]), atol=1e-12)

    def test_matches_long_time_evolution(self):
        m = three_level_model(ThreeLevelParams(), ROTATING)
        ss = steady_state(m)
        res = evolve(m, projector_state(S3, 1), 0.0, 200.0, dt=0.02, record_every=10000)
        assert np.max(np.abs(ss.matrix - res.final().matrix)) < 1e-4

    def test_invariants(self):
        ss = steady_state(three_level_model(ThreeLevelParams(), ROTATING))
        assert abs(ss.matrix.trace().real - 1.0) < 1e-12
        assert np.linalg.eigvalsh(ss.matrix).min() > -1e-10

    def test_residual_bound(self):
        m = three_level_model(ThreeLevelParams(), ROTATING)
        g = build_superoperator(m)
        ss = steady_state(m)
        assert np.linalg.norm(g @ ss.matrix.reshape(-1)) <= 1e-9

    def test_degenerate_null_space_reported(self):
        m = LindbladModel(S2, Operator(S2, np.zeros((2, 2))), (), ())
        with pytest.raises(DegenerateSteadyStateError):
            steady_state(m)
