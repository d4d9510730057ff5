"""Random two-qubit states and the tau (Cholesky) parametrization.

Density matrices are plain ``(4, 4)`` complex128 arrays.  A tau matrix is a
lower-triangular ``(4, 4)`` array with real non-negative diagonal such that
``rho = tau^H tau / Tr(tau^H tau)``; its 16-float packing puts the diagonal
first, then the three sub-diagonals from the main one outwards::

    [[t0,        0,         0,       0 ],
     [t4+i t5,   t1,        0,       0 ],
     [t10+i t11, t6+i t7,   t2,      0 ],
     [t14+i t15, t12+i t13, t8+i t9, t3]]
"""

from __future__ import annotations

import numpy as np

from . import rng as _rng
from .exceptions import DegenerateTau, SingularState, ValidationError
from .linalg import dagger, hermitian_eig

DIM = 4
PURE_EPSILON = 1e-7
SINGULAR_FLOOR = 1e-10
TAU_NORM_FLOOR = 1e-30

# (row, col, real slot, imag slot); imag slot None on the diagonal
TAU16_LAYOUT = (
    (0, 0, 0, None),
    (1, 1, 1, None),
    (2, 2, 2, None),
    (3, 3, 3, None),
    (1, 0, 4, 5),
    (2, 1, 6, 7),
    (3, 2, 8, 9),
    (2, 0, 10, 11),
    (3, 1, 12, 13),
    (3, 0, 14, 15),
)

_ROWS = np.array([r for r, _, _, _ in TAU16_LAYOUT])
_COLS = np.array([c for _, c, _, _ in TAU16_LAYOUT])
_RE = np.array([k for _, _, k, _ in TAU16_LAYOUT])
_OFF = np.array([im is not None for _, _, _, im in TAU16_LAYOUT])
_IM = np.array([im for _, _, _, im in TAU16_LAYOUT if im is not None])

# exchange matrix: reverses basis order
_FLIP = np.eye(DIM)[::-1]


def haar_random_unitary(rng, dim: int = DIM) -> np.ndarray:
    """Haar-distributed unitary from QR of a complex Ginibre matrix.

    Columns of Q are rephased by the phases of R's diagonal; without that
    correction QR output is not Haar distributed.
    """
    if dim not in (2, 4):
        raise ValidationError(f"dim must be 2 or 4, got {dim}")
    rng = _rng.as_rng(rng)
    z = (_rng.normal(rng, (dim, dim)) + 1j * _rng.normal(rng, (dim, dim))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    d = np.diag(r)
    return q * (d / np.abs(d))


def pure_density(psi: np.ndarray) -> np.ndarray:
    psi = np.asarray(psi, dtype=complex).reshape(-1)
    psi = psi / np.linalg.norm(psi)
    return np.outer(psi, psi.conj())


def regularize_pure(rho: np.ndarray, epsilon: float = PURE_EPSILON) -> np.ndarray:
    return (1.0 - epsilon) * rho + (epsilon / DIM) * np.eye(DIM)


def random_pure_state(rng) -> np.ndarray:
    """``(1 - eps)|psi><psi| + eps I / 4`` with psi a Haar-random column."""
    u = haar_random_unitary(rng, DIM)
    return regularize_pure(pure_density(u[:, 0]))


def random_mixed_state(rng) -> np.ndarray:
    """Hilbert-Schmidt random state ``G G^H / Tr(G G^H)``, G complex Ginibre."""
    rng = _rng.as_rng(rng)
    g = _rng.normal(rng, (DIM, DIM)) + 1j * _rng.normal(rng, (DIM, DIM))
    m = g @ g.conj().T
    m = 0.5 * (m + m.conj().T)
    return m / np.trace(m).real


def random_state(rng, kind: str) -> np.ndarray:
    if kind == "pure":
        return random_pure_state(rng)
    if kind == "mixed":
        return random_mixed_state(rng)
    raise ValidationError(f"unknown state kind {kind!r}")


def check_density(rho: np.ndarray, atol: float = 1e-12, psd_floor: float = -1e-10) -> None:
    """Raise ValidationError unless ``rho`` (or every matrix of a stack) is a state."""
    rho = np.asarray(rho)
    if rho.shape[-2:] != (DIM, DIM):
        raise ValidationError(f"expected (..., 4, 4) density matrices, got {rho.shape}")
    if not np.all(np.isfinite(rho)):
        raise ValidationError("density matrix has non-finite entries")
    if np.max(np.abs(rho - dagger(rho))) > atol:
        raise ValidationError("density matrix is not Hermitian")
    tr = np.trace(rho, axis1=-2, axis2=-1)
    if np.max(np.abs(tr - 1.0)) > atol:
        raise ValidationError("density matrix does not have unit trace")
    w, _ = hermitian_eig(rho)
    if np.min(w) < psd_floor:
        raise ValidationError(f"density matrix is not PSD (min eigenvalue {np.min(w):.3e})")


def tau_from_density(rho: np.ndarray) -> np.ndarray:
    """Lower-triangular tau with ``tau^H tau = rho``, by Cholesky.

    Flipping the basis turns ``rho = tau^H tau`` into an ordinary Cholesky
    problem: ``J rho J = L L^H`` gives ``tau = J L^H J``.
    """
    rho = np.asarray(rho, dtype=complex)
    w, _ = hermitian_eig(rho)
    if w[0] <= SINGULAR_FLOOR:
        raise SingularState(f"min eigenvalue {w[0]:.3e} <= {SINGULAR_FLOOR}")
    flipped = _FLIP @ rho @ _FLIP
    flipped = 0.5 * (flipped + flipped.conj().T)
    try:
        low = np.linalg.cholesky(flipped)
    except np.linalg.LinAlgError as exc:
        raise SingularState(str(exc)) from exc
    tau = _FLIP @ low.conj().T @ _FLIP
    idx = np.arange(DIM)
    tau[idx, idx] = tau[idx, idx].real
    return np.tril(tau)


def _minor(rho: np.ndarray, drop_rows, drop_cols) -> complex:
    rows = [i for i in range(DIM) if i not in drop_rows]
    cols = [j for j in range(DIM) if j not in drop_cols]
    return np.linalg.det(rho[np.ix_(rows, cols)])


def tau_from_minors(rho: np.ndarray) -> np.ndarray:
    """Closed-form tau built from determinants of sub-matrices of ``rho``.

    ``m1(i, j)`` drops row i and column j; ``m2(pq, rs)`` drops rows p, r and
    columns q, s.  Independent of :func:`tau_from_density`; the two must agree
    on positive-definite input.
    """
    rho = np.asarray(rho, dtype=complex)
    det = np.linalg.det(rho).real
    m1_00 = _minor(rho, (0,), (0,)).real
    m1_01 = _minor(rho, (0,), (1,))
    m2_00_11 = _minor(rho, (0, 1), (0, 1)).real
    m2_01_12 = _minor(rho, (0, 1), (1, 2))
    m2_00_12 = _minor(rho, (0, 1), (0, 2))
    r33 = rho[3, 3].real
    if min(det, m1_00, m2_00_11, r33) <= 0.0:
        raise SingularState("leading minors are not positive")
    s33 = np.sqrt(r33)
    s2 = np.sqrt(m2_00_11)
    tau = np.zeros((DIM, DIM), dtype=complex)
    tau[0, 0] = np.sqrt(det / m1_00)
    tau[1, 0] = m1_01 / np.sqrt(m1_00 * m2_00_11)
    tau[1, 1] = np.sqrt(m1_00 / m2_00_11)
    tau[2, 0] = m2_01_12 / (s33 * s2)
    tau[2, 1] = m2_00_12 / (s33 * s2)
    tau[2, 2] = np.sqrt(m2_00_11 / r33)
    tau[3, :3] = rho[3, :3] / s33
    tau[3, 3] = s33
    return tau


def density_from_tau(tau: np.ndarray) -> np.ndarray:
    """``tau^H tau / Tr(tau^H tau)``; physical for any non-zero tau.

    Accepts a stack ``(..., 4, 4)``.
    """
    tau = np.asarray(tau, dtype=complex)
    m = dagger(tau) @ tau
    m = 0.5 * (m + dagger(m))
    norm = np.real(np.trace(m, axis1=-2, axis2=-1))
    if np.min(norm) <= TAU_NORM_FLOOR:
        raise DegenerateTau(f"Tr(tau^H tau) = {np.min(norm):.3e}")
    return m / norm[..., None, None]


def pack_tau16(tau: np.ndarray) -> np.ndarray:
    """Lower-triangular tau (or stack) to 16 reals, see module docstring."""
    tau = np.asarray(tau)
    vals = tau[..., _ROWS, _COLS]
    out = np.zeros(tau.shape[:-2] + (16,))
    out[..., _RE] = vals.real
    out[..., _IM] = vals[..., _OFF].imag
    return out


def unpack_tau16(v: np.ndarray) -> np.ndarray:
    """16 reals (or stack ``(..., 16)``) to a lower-triangular tau."""
    v = np.asarray(v, dtype=float)
    if v.shape[-1] != 16:
        raise ValidationError(f"expected 16 values, got shape {v.shape}")
    vals = v[..., _RE].astype(complex)
    vals[..., _OFF] += 1j * v[..., _IM]
    tau = np.zeros(v.shape[:-1] + (DIM, DIM), dtype=complex)
    tau[..., _ROWS, _COLS] = vals
    return tau


def density_from_tau16(v: np.ndarray) -> np.ndarray:
    return density_from_tau(unpack_tau16(v))


def purity(rho: np.ndarray) -> float:
    return float(np.real(np.trace(rho @ rho)))
