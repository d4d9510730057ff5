"""Hermitian eigensolvers, PSD square roots and Uhlmann fidelity.

The production path goes through LAPACK (``numpy.linalg.eigh``), which also
handles stacks of matrices.  :func:`jacobi_eigh` is a self-contained cyclic
Jacobi solver kept as an independent cross-check.
"""

from __future__ import annotations

import numpy as np

from .exceptions import NumericalFailure, ValidationError

HERMITIAN_ATOL = 1e-9
CLAMP_FLOOR = -1e-10
# below eps-level backward error of eigh; sqrt would inflate it to ~1e-8
EIG_NOISE = 1e-14


def dagger(m: np.ndarray) -> np.ndarray:
    return np.swapaxes(np.conj(m), -1, -2)


def _check_hermitian(h: np.ndarray, atol: float = HERMITIAN_ATOL) -> np.ndarray:
    h = np.asarray(h, dtype=complex)
    if h.shape[-2:] != (h.shape[-1], h.shape[-1]):
        raise ValidationError(f"expected square matrices, got shape {h.shape}")
    if not np.all(np.isfinite(h)):
        raise ValidationError("matrix has non-finite entries")
    if np.max(np.abs(h - dagger(h)), initial=0.0) >= atol:
        raise ValidationError("matrix is not Hermitian")
    return h


def hermitian_eig(h: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Eigenvalues (ascending) and unitary eigenvectors of Hermitian ``h``.

    Works on a single matrix or a stack ``(..., n, n)``.
    """
    h = _check_hermitian(h)
    h = 0.5 * (h + dagger(h))
    try:
        w, v = np.linalg.eigh(h)
    except np.linalg.LinAlgError as exc:
        raise NumericalFailure(str(exc)) from exc
    return w, v


def jacobi_eigh(
    h: np.ndarray, tol: float = 1e-13, max_sweeps: int = 100
) -> tuple[np.ndarray, np.ndarray]:
    """Cyclic complex Jacobi rotations for a single Hermitian matrix.

    Stops when the off-diagonal Frobenius norm drops below ``tol`` (scaled by
    the matrix norm when it exceeds 1); raises NumericalFailure after
    ``max_sweeps`` sweeps.
    """
    a = _check_hermitian(h).copy()
    a = 0.5 * (a + a.conj().T)
    n = a.shape[0]
    v = np.eye(n, dtype=complex)
    threshold = tol * max(1.0, np.linalg.norm(a))

    offdiag = ~np.eye(n, dtype=bool)

    def off(m):
        return np.sqrt(np.sum(np.abs(m[offdiag]) ** 2))

    for _ in range(max_sweeps):
        if off(a) < threshold:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                mag = abs(apq)
                if mag < 1e-300:
                    continue
                phase = apq / mag
                app, aqq = a[p, p].real, a[q, q].real
                theta = 0.5 * np.arctan2(2.0 * mag, aqq - app)
                c, s = np.cos(theta), np.sin(theta)
                # unitary acting on the (p, q) plane that zeroes a[p, q]
                rot = np.eye(n, dtype=complex)
                rot[p, p] = c
                rot[q, q] = c
                rot[p, q] = s * phase
                rot[q, p] = -s * np.conj(phase)
                a = rot.conj().T @ a @ rot
                v = v @ rot
    else:
        if off(a) >= threshold:
            raise NumericalFailure(f"Jacobi did not converge in {max_sweeps} sweeps")
    w = np.real(np.diag(a))
    order = np.argsort(w, kind="stable")
    return w[order], v[:, order]


def psd_sqrt(rho: np.ndarray) -> np.ndarray:
    """Hermitian square root of a PSD matrix (or stack).

    Eigenvalues in ``[-1e-10, 0)`` are treated as round-off and clamped to 0.
    """
    w, v = hermitian_eig(rho)
    if np.min(w) < CLAMP_FLOOR:
        raise ValidationError(f"matrix is not PSD (min eigenvalue {np.min(w):.3e})")
    root = np.sqrt(np.clip(w, 0.0, None))
    return (v * root[..., None, :]) @ dagger(v)


def _floored_sqrt(rho: np.ndarray) -> np.ndarray:
    w, v = hermitian_eig(rho)
    if np.min(w) < CLAMP_FLOOR:
        raise ValidationError(f"matrix is not PSD (min eigenvalue {np.min(w):.3e})")
    # eigenvalues at round-off level would turn into ~1e-8 after the root
    floor = EIG_NOISE * np.maximum(1.0, np.max(np.abs(w), axis=-1, keepdims=True))
    root = np.sqrt(np.where(w > floor, w, 0.0))
    return (v * root[..., None, :]) @ dagger(v)


def fidelity(rho_pred: np.ndarray, rho_targ: np.ndarray) -> np.ndarray | float:
    """Uhlmann fidelity ``|Tr sqrt(sqrt(a) b sqrt(a))|^2``, clamped to [0, 1].

    Evaluated as the squared trace norm of ``sqrt(a) sqrt(b)`` (sum of
    singular values), which avoids taking roots of tiny eigenvalues of the
    inner product.  Both arguments may be stacks of equal leading shape;
    returns a float for a single pair.
    """
    a = _floored_sqrt(np.asarray(rho_pred, dtype=complex))
    b = _floored_sqrt(np.asarray(rho_targ, dtype=complex))
    f = np.sum(np.linalg.svd(a @ b, compute_uv=False), axis=-1) ** 2
    f = np.clip(f, 0.0, 1.0)
    return float(f) if np.ndim(f) == 0 else f
