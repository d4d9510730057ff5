"""Linear-inversion (Stokes) reconstruction from a 6x6 measurement grid."""

from __future__ import annotations

import numpy as np

from .linalg import dagger, hermitian_eig
from .tomography import MeasurementGrid

PAULI = np.array(
    [
        [[1, 0], [0, 1]],
        [[0, 1], [1, 0]],
        [[0, -1j], [1j, 0]],
        [[1, 0], [0, -1]],
    ],
    dtype=complex,
)

# s[l, k] = sum(sign * M[cell]) over four cells; l, k index (I, X, Y, Z)
STOKES_TERMS = {
    (0, 0): ((+1, 0, 0), (+1, 0, 1), (+1, 0, 3), (+1, 0, 2)),
    (1, 1): ((+1, 2, 3), (-1, 2, 2), (-1, 2, 0), (+1, 2, 1)),
    # <X Y> = dr - dl - ar + al; d(x)r sits at [2, 4]
    (1, 2): ((+1, 2, 4), (-1, 2, 5), (-1, 3, 1), (+1, 3, 0)),
    (1, 3): ((+1, 3, 5), (-1, 3, 4), (-1, 3, 2), (+1, 3, 3)),
    (2, 1): ((+1, 5, 2), (-1, 5, 3), (-1, 5, 5), (+1, 5, 4)),
    (2, 2): ((+1, 5, 1), (-1, 5, 0), (-1, 4, 4), (+1, 4, 5)),
    (2, 3): ((+1, 4, 0), (-1, 4, 1), (-1, 4, 3), (+1, 4, 2)),
    (3, 1): ((+1, 1, 2), (-1, 1, 3), (-1, 1, 5), (+1, 1, 4)),
    (3, 2): ((+1, 1, 1), (-1, 1, 0), (-1, 0, 4), (+1, 0, 5)),
    (3, 3): ((+1, 0, 0), (-1, 0, 1), (-1, 0, 3), (+1, 0, 2)),
    (0, 1): ((+1, 2, 3), (-1, 2, 2), (+1, 2, 0), (-1, 2, 1)),
    (0, 2): ((+1, 5, 1), (+1, 4, 4), (-1, 5, 0), (-1, 4, 5)),
    (0, 3): ((+1, 0, 0), (-1, 0, 1), (+1, 0, 3), (-1, 0, 2)),
    (1, 0): ((+1, 2, 3), (+1, 2, 2), (-1, 2, 0), (-1, 2, 1)),
    (2, 0): ((+1, 5, 1), (-1, 4, 4), (+1, 5, 0), (-1, 4, 5)),
    (3, 0): ((+1, 0, 0), (+1, 0, 1), (-1, 0, 3), (-1, 0, 2)),
}


def _stokes_operator() -> np.ndarray:
    op = np.zeros((4, 4, 6, 6))
    for (l, k), terms in STOKES_TERMS.items():
        for sign, i, j in terms:
            op[l, k, i, j] += sign
    return op


# (4, 4, 6, 6) linear map from grid values to Stokes parameters
STOKES_OPERATOR = _stokes_operator()
# (4, 4, 4, 4): sigma_l (x) sigma_k / 4
PAULI_BASIS = np.einsum("lab,kcd->lkacbd", PAULI, PAULI).reshape(4, 4, 4, 4) / 4.0


def _values(g) -> np.ndarray:
    if isinstance(g, MeasurementGrid):
        return g.values
    return np.asarray(g, dtype=float)


def stokes_params(g) -> np.ndarray:
    """4x4 real Stokes parameters s[l, k] from a grid (or stack of grids)."""
    return np.einsum("lkij,...ij->...lk", STOKES_OPERATOR, _values(g))


def stokes_reconstruct(g) -> np.ndarray:
    """``(1/4) sum_lk s_lk sigma_l (x) sigma_k``: Hermitian, not necessarily PSD."""
    s = stokes_params(g)
    return np.einsum("...lk,lkab->...ab", s, PAULI_BASIS)


def physicalize(h: np.ndarray, return_min_eig: bool = False):
    """Clamp negative eigenvalues to zero and renormalize to unit trace.

    Falls back to the maximally mixed state when nothing positive survives.
    Works on stacks.  With ``return_min_eig`` also returns the pre-clamp
    minimum eigenvalue(s) for diagnostics.
    """
    w, v = hermitian_eig(h)
    clipped = np.clip(w, 0.0, None)
    total = clipped.sum(axis=-1)
    dead = total <= 0.0
    safe_total = np.where(dead, 1.0, total)
    clipped = np.where(dead[..., None], 0.25, clipped / safe_total[..., None])
    rho = (v * clipped[..., None, :]) @ dagger(v)
    rho = 0.5 * (rho + dagger(rho))
    if return_min_eig:
        return rho, w[..., 0]
    return rho
