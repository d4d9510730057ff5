import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from tomonet import states
from tomonet import rng as R
from tomonet.exceptions import DegenerateTau, SingularState, ValidationError

EPS = states.PURE_EPSILON


class TestHaar:
    @pytest.mark.parametrize("dim", [2, 4])
    def test_unitary(self, dim, rng):
        for _ in range(200):
            u = states.haar_random_unitary(rng, dim)
            assert np.max(np.abs(u.conj().T @ u - np.eye(dim))) < 1e-12

    def test_deterministic_for_seed(self):
        np.testing.assert_array_equal(states.haar_random_unitary(11), states.haar_random_unitary(11))

    def test_first_moment(self):
        # Haar: E|U00|^2 = 1/dim
        g = R.make_rng(99)
        vals = [abs(states.haar_random_unitary(g, 2)[0, 0]) ** 2 for _ in range(10_000)]
        assert abs(np.mean(vals) - 0.5) < 0.02

    def test_phase_fix_gives_uniform_diagonal_phase(self):
        # without the R-diagonal correction arg(U00) concentrates; Haar makes it uniform
        g = R.make_rng(5)
        phases = np.array([np.angle(states.haar_random_unitary(g, 2)[0, 0]) for _ in range(4000)])
        assert abs(np.mean(np.cos(phases))) < 0.05
        assert abs(np.mean(np.sin(phases))) < 0.05

    def test_rejects_other_dims(self):
        with pytest.raises(ValidationError):
            states.haar_random_unitary(0, 3)


class TestRandomStates:
    def test_pure_state_invariants(self, rng):
        for _ in range(100):
            rho = states.random_pure_state(rng)
            states.check_density(rho)
            assert abs(np.trace(rho) - 1) < 1e-12
            assert np.linalg.eigvalsh(rho)[0] >= EPS / 4 - 1e-12
            assert states.purity(rho) >= 1 - 3 * EPS

    def test_pure_state_mean_purity(self):
        g = R.make_rng(3)
        assert np.mean([states.purity(states.random_pure_state(g)) for _ in range(1000)]) > 0.9999996

    def test_mixed_state_invariants(self, rng):
        for _ in range(200):
            rho = states.random_mixed_state(rng)
            states.check_density(rho)
            assert np.max(np.abs(rho - rho.conj().T)) < 1e-12

    def test_mixed_states_full_rank(self):
        g = R.make_rng(4)
        mins = np.array([np.linalg.eigvalsh(states.random_mixed_state(g))[0] for _ in range(10_000)])
        assert np.mean(mins > 1e-12) >= 0.999

    def test_mixed_state_mean_purity(self):
        # Hilbert-Schmidt ensemble from 4x4 Ginibre: E Tr rho^2 = (N + K) / (N K + 1) = 8 / 17
        g = R.make_rng(5)
        mean = np.mean([states.purity(states.random_mixed_state(g)) for _ in range(10_000)])
        assert abs(mean - 8 / 17) < 0.02

    def test_random_state_dispatch(self):
        with pytest.raises(ValidationError):
            states.random_state(0, "thermal")


class TestTau:
    def test_maximally_mixed(self):
        np.testing.assert_allclose(states.tau_from_density(np.eye(4) / 4), 0.5 * np.eye(4), atol=1e-15)

    def test_structure_and_roundtrip(self, mixed_states):
        for rho in mixed_states(200):
            tau = states.tau_from_density(rho)
            assert np.all(np.triu(tau, 1) == 0)
            assert np.all(np.diag(tau).imag == 0) and np.all(np.diag(tau).real >= 0)
            assert abs(np.sum(np.abs(tau) ** 2) - 1) < 1e-10
            np.testing.assert_allclose(tau.conj().T @ tau, rho, atol=1e-8)
            np.testing.assert_allclose(states.density_from_tau(tau), rho, atol=1e-8)

    def test_minor_formula_matches_cholesky(self, mixed_states):
        for rho in mixed_states(200, seed=9):
            np.testing.assert_allclose(states.tau_from_minors(rho), states.tau_from_density(rho), atol=1e-8)

    def test_minor_formula_bottom_row(self, mixed_states):
        rho = mixed_states(1)[0]
        tau = states.tau_from_minors(rho)
        assert abs(tau[3, 3] - np.sqrt(rho[3, 3].real)) < 1e-15
        np.testing.assert_allclose(tau[3, :3], rho[3, :3] / np.sqrt(rho[3, 3].real), atol=1e-15)

    def test_regularized_pure_state(self, rng):
        rho = states.random_pure_state(rng)
        np.testing.assert_allclose(states.density_from_tau(states.tau_from_density(rho)), rho, atol=1e-8)

    def test_singular_state_rejected(self):
        rho = np.zeros((4, 4), dtype=complex)
        rho[0, 0] = 1
        with pytest.raises(SingularState):
            states.tau_from_density(rho)

    def test_density_from_zero_tau(self):
        with pytest.raises(DegenerateTau):
            states.density_from_tau(np.zeros((4, 4)))

    def test_density_from_scalar_tau(self):
        np.testing.assert_allclose(states.density_from_tau(0.5 * np.eye(4)), np.eye(4) / 4, atol=1e-15)


class TestPacking:
    def test_unit_vector(self):
        v = np.zeros(16)
        v[0] = 1
        tau = states.unpack_tau16(v)
        expected = np.zeros((4, 4))
        expected[0, 0] = 1
        np.testing.assert_array_equal(tau, expected)

    def test_diagonal(self):
        np.testing.assert_array_equal(states.pack_tau16(0.5 * np.eye(4)), [0.5] * 4 + [0] * 12)

    def test_layout(self):
        tau = states.unpack_tau16(np.arange(16.0))
        expected = np.array(
            [
                [0, 0, 0, 0],
                [4 + 5j, 1, 0, 0],
                [10 + 11j, 6 + 7j, 2, 0],
                [14 + 15j, 12 + 13j, 8 + 9j, 3],
            ]
        )
        np.testing.assert_array_equal(tau, expected)

    @given(arrays(np.float64, 16, elements=st.floats(-1e6, 1e6)))
    def test_pack_unpack_exact(self, v):
        np.testing.assert_array_equal(states.pack_tau16(states.unpack_tau16(v)), v)

    def test_batched(self, rng):
        v = R.normal(rng, (7, 16))
        np.testing.assert_array_equal(states.pack_tau16(states.unpack_tau16(v)), v)

    def test_rejects_wrong_length(self):
        with pytest.raises(ValidationError):
            states.unpack_tau16(np.zeros(15))


@settings(max_examples=300, deadline=None)
@given(arrays(np.float64, 16, elements=st.floats(-10, 10)))
def test_physicality_closure_property(v):
    tau = states.unpack_tau16(v)
    if np.sum(np.abs(tau) ** 2) <= 1e-30:
        return
    rho = states.density_from_tau(tau)
    assert np.max(np.abs(rho - rho.conj().T)) <= 1e-12
    assert abs(np.trace(rho) - 1) <= 1e-12
    assert np.linalg.eigvalsh(rho)[0] >= -1e-10


def test_check_density_rejects():
    with pytest.raises(ValidationError):
        states.check_density(np.diag([1.2, -0.2, 0, 0]))
    with pytest.raises(ValidationError):
        states.check_density(np.eye(4))
    with pytest.raises(ValidationError):
        states.check_density(np.eye(3) / 3)
