import numpy as np
import pytest

from tomonet import linalg, states
from tomonet import rng as R
from tomonet.exceptions import ValidationError


def random_hermitian(rng, n=4):
    a = R.normal(rng, (n, n)) + 1j * R.normal(rng, (n, n))
    return a + a.conj().T


@pytest.mark.parametrize("solver", [linalg.hermitian_eig, linalg.jacobi_eigh])
class TestEigensolvers:
    def test_identity(self, solver):
        w, v = solver(np.eye(4))
        np.testing.assert_allclose(w, np.ones(4), atol=1e-14)

    def test_diagonal_sorted_ascending(self, solver):
        w, v = solver(np.diag([4.0, 3.0, 2.0, 1.0]).astype(complex))
        np.testing.assert_allclose(w, [1, 2, 3, 4], atol=1e-14)
        # eigenvectors are (phased) permutation columns
        np.testing.assert_allclose(np.abs(v), np.eye(4)[:, ::-1], atol=1e-12)

    def test_random_reconstruction(self, solver, rng):
        for _ in range(50):
            h = random_hermitian(rng)
            w, v = solver(h)
            assert np.all(np.diff(w) >= 0)
            np.testing.assert_allclose(h @ v, v * w, atol=1e-10)
            np.testing.assert_allclose(v.conj().T @ v, np.eye(4), atol=1e-10)
            np.testing.assert_allclose((v * w) @ v.conj().T, h, atol=1e-10)

    def test_rejects_non_hermitian(self, solver):
        with pytest.raises(ValidationError):
            solver(np.array([[0, 1], [0, 0]], dtype=complex))


def test_jacobi_agrees_with_lapack(rng):
    for _ in range(100):
        h = random_hermitian(rng)
        np.testing.assert_allclose(linalg.jacobi_eigh(h)[0], linalg.hermitian_eig(h)[0], atol=1e-11)


def test_eig_handles_stacks(rng):
    hs = np.stack([random_hermitian(rng) for _ in range(5)])
    w, v = linalg.hermitian_eig(hs)
    assert w.shape == (5, 4) and v.shape == (5, 4, 4)
    for k in range(5):
        np.testing.assert_allclose(w[k], np.linalg.eigvalsh(hs[k]), atol=1e-12)


class TestPsdSqrt:
    def test_maximally_mixed(self):
        np.testing.assert_allclose(linalg.psd_sqrt(np.eye(4) / 4), np.eye(4) / 2, atol=1e-14)

    def test_diagonal(self):
        d = np.array([0.4, 0.3, 0.2, 0.1])
        np.testing.assert_allclose(linalg.psd_sqrt(np.diag(d)), np.diag(np.sqrt(d)), atol=1e-14)

    def test_squares_back(self, mixed_states):
        for rho in mixed_states(100):
            s = linalg.psd_sqrt(rho)
            np.testing.assert_allclose(s, s.conj().T, atol=1e-12)
            np.testing.assert_allclose(s @ s, rho, atol=1e-9)

    def test_clamps_tiny_negative_eigenvalues(self):
        m = np.diag([0.5, 0.5, 0.0, -5e-11]).astype(complex)
        s = linalg.psd_sqrt(m)
        assert np.all(np.isfinite(s))
        assert s[3, 3] == 0.0

    def test_rejects_indefinite(self):
        with pytest.raises(ValidationError):
            linalg.psd_sqrt(np.diag([1.0, -0.1, 0, 0]))


class TestFidelity:
    def test_self_fidelity(self, mixed_states):
        for rho in mixed_states(50):
            assert abs(linalg.fidelity(rho, rho) - 1) < 1e-9

    def test_orthogonal_regularized_product_states(self):
        hh = np.zeros((4, 4), dtype=complex)
        hh[0, 0] = 1
        vv = np.zeros((4, 4), dtype=complex)
        vv[3, 3] = 1
        f = linalg.fidelity(states.regularize_pure(hh), states.regularize_pure(vv))
        assert f < 1e-6

    def test_pure_state_overlap(self, rng):
        for _ in range(100):
            p1 = states.haar_random_unitary(rng)[:, 0]
            p2 = states.haar_random_unitary(rng)[:, 0]
            f = linalg.fidelity(states.pure_density(p1), states.pure_density(p2))
            assert abs(f - abs(np.vdot(p1, p2)) ** 2) < 1e-8

    def test_commuting_states_classical_formula(self):
        # diagonal states: F = (sum sqrt(p_i q_i))^2
        p = np.array([0.1, 0.2, 0.3, 0.4])
        q = np.array([0.25, 0.25, 0.4, 0.1])
        expected = np.sum(np.sqrt(p * q)) ** 2
        assert abs(linalg.fidelity(np.diag(p), np.diag(q)) - expected) < 1e-12

    def test_symmetry_and_bounds(self, mixed_states):
        a, b = mixed_states(30, seed=1), mixed_states(30, seed=2)
        for x, y in zip(a, b):
            f = linalg.fidelity(x, y)
            assert 0 <= f <= 1
            assert abs(f - linalg.fidelity(y, x)) < 1e-9

    def test_batched_matches_loop(self, mixed_states):
        a, b = np.stack(mixed_states(10, 3)), np.stack(mixed_states(10, 4))
        batch = linalg.fidelity(a, b)
        np.testing.assert_allclose(batch, [linalg.fidelity(x, y) for x, y in zip(a, b)], atol=1e-14)


def test_fidelity_nearly_pure_self():
    # eigenvalues of order 1e-8 must survive; only round-off is floored
    g = R.make_rng(77)
    for _ in range(50):
        rho = states.random_pure_state(g)
        assert abs(linalg.fidelity(rho, rho) - 1) < 1e-12
