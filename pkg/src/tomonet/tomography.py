"""Simulated two-qubit polarization tomography.

The 36 two-qubit projectors are laid out on a 6x6 grid in the coincidence
order of a Nucrypt entangled-photon analyzer (:data:`GRID_LABELS`).  Noise is
modelled as a random unitary rotation of the second qubit's analyzer, drawn
independently for each of the 36 cells.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import rng as _rng
from .exceptions import BadCount, TomographyError, ValidationError

GRID_SHAPE = (6, 6)
N_PROJECTORS = 36

GRID_LABELS = (
    ("hh", "hv", "vv", "vh", "vr", "vl"),
    ("hl", "hr", "hd", "ha", "va", "vd"),
    ("ad", "aa", "da", "dd", "dr", "dl"),
    ("al", "ar", "ah", "av", "dv", "dh"),
    ("rh", "rv", "lv", "lh", "lr", "ll"),
    ("rl", "rr", "rd", "ra", "la", "ld"),
)

_S = 1.0 / np.sqrt(2.0)
BASIS_KETS = {
    "h": np.array([1.0, 0.0], dtype=complex),
    "v": np.array([0.0, 1.0], dtype=complex),
    "d": np.array([_S, _S], dtype=complex),
    "a": np.array([_S, -_S], dtype=complex),
    "r": np.array([_S, 1j * _S], dtype=complex),
    "l": np.array([_S, -1j * _S], dtype=complex),
}


def basis_projectors() -> dict[str, np.ndarray]:
    """Single-qubit projectors ``|x><x|`` for x in h, v, d, a, r, l."""
    return {k: np.outer(ket, ket.conj()) for k, ket in BASIS_KETS.items()}


_PROJ = basis_projectors()
_FIRST = np.array([[_PROJ[lab[0]] for lab in row] for row in GRID_LABELS])
_SECOND = np.array([[_PROJ[lab[1]] for lab in row] for row in GRID_LABELS])


def _kron_grid(first: np.ndarray, second: np.ndarray) -> np.ndarray:
    # (6,6,2,2) x (6,6,2,2) -> (6,6,4,4)
    return np.einsum("...ab,...cd->...acbd", first, second).reshape(
        first.shape[:-2] + (4, 4)
    )


def projector_grid() -> np.ndarray:
    """Noiseless ``(6, 6, 4, 4)`` grid of two-qubit projectors."""
    return _kron_grid(_FIRST, _SECOND)


def rotation_matrix(theta, phi, xi) -> np.ndarray:
    """Analyzer rotation U(theta, phi, xi); vectorized over the angle arrays."""
    theta, phi, xi = np.broadcast_arrays(
        np.asarray(theta, float), np.asarray(phi, float), np.asarray(xi, float)
    )
    c, s = np.cos(theta), np.sin(theta)
    u = np.empty(theta.shape + (2, 2), dtype=complex)
    u[..., 0, 0] = np.exp(0.5j * phi) * c
    u[..., 0, 1] = -1j * np.exp(1j * xi) * s
    u[..., 1, 0] = -1j * np.exp(-1j * xi) * s
    u[..., 1, 1] = np.exp(-0.5j * phi) * c
    return u


def _check_sigma(sigma: float) -> float:
    sigma = float(sigma)
    if not np.isfinite(sigma) or sigma < 0:
        raise ValidationError(f"sigma must be finite and >= 0, got {sigma}")
    return sigma


def random_rotation(rng, sigma: float, size=()) -> np.ndarray:
    """U with theta, phi, xi i.i.d. N(0, sigma^2); ``size`` leading dims."""
    sigma = _check_sigma(sigma)
    rng = _rng.as_rng(rng)
    shape = (size,) if np.isscalar(size) else tuple(size)
    angles = _rng.normal(rng, (3,) + shape, scale=sigma)
    return rotation_matrix(angles[0], angles[1], angles[2])


def noisy_projector_grid(rng, sigma: float) -> np.ndarray:
    """Grid with each cell's second-qubit projector conjugated by its own U."""
    sigma = _check_sigma(sigma)
    if sigma == 0.0:
        return projector_grid()
    u = random_rotation(rng, sigma, GRID_SHAPE)
    second = u @ _SECOND @ np.swapaxes(u.conj(), -1, -2)
    return _kron_grid(_FIRST, second)


@dataclass(frozen=True)
class MeasurementGrid:
    """6x6 expectation values with a presence mask (True = measured)."""

    values: np.ndarray
    mask: np.ndarray = field(default_factory=lambda: np.ones(GRID_SHAPE, dtype=bool))

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        mask = np.asarray(self.mask, dtype=bool)
        if values.shape != GRID_SHAPE or mask.shape != GRID_SHAPE:
            raise ValidationError("measurement grid and mask must be 6x6")
        values = np.where(mask, values, 0.0)
        values.setflags(write=False)
        mask = mask.copy()
        mask.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "mask", mask)

    @property
    def n_measured(self) -> int:
        return int(self.mask.sum())

    def __eq__(self, other):
        if not isinstance(other, MeasurementGrid):
            return NotImplemented
        return np.array_equal(self.values, other.values) and np.array_equal(
            self.mask, other.mask
        )

    __hash__ = None


def measure_values(rho: np.ndarray, grid: np.ndarray | None = None) -> np.ndarray:
    """``Re Tr(rho P[i, j])`` for a state (or stack) against a projector grid.

    ``rho`` of shape ``(..., 4, 4)`` broadcasts against ``grid`` of shape
    ``(..., 6, 6, 4, 4)``; returns ``(..., 6, 6)``.
    """
    if grid is None:
        grid = projector_grid()
    rho = np.asarray(rho, dtype=complex)
    # Tr(rho P) = sum_ab rho[a, b] P[b, a]
    tr = np.einsum("...ab,...ijba->...ij", rho, grid)
    if np.max(np.abs(tr.imag), initial=0.0) > 1e-10:
        raise TomographyError("measurement trace has an imaginary residue")
    return tr.real


def measure(rho: np.ndarray, grid: np.ndarray | None = None) -> MeasurementGrid:
    return MeasurementGrid(measure_values(rho, grid))


def prefix_mask(keep: int) -> np.ndarray:
    """Boolean 6x6 mask keeping the first ``keep`` cells in row-major order."""
    keep = int(keep)
    if not 1 <= keep <= N_PROJECTORS:
        raise BadCount(f"keep must be in [1, 36], got {keep}")
    flat = np.zeros(N_PROJECTORS, dtype=bool)
    flat[:keep] = True
    return flat.reshape(GRID_SHAPE)


def mask_measurements(g: MeasurementGrid, keep: int | np.ndarray) -> MeasurementGrid:
    """Zero out unmeasured projectors.

    ``keep`` is either a count (prefix of the row-major order) or an explicit
    6x6 boolean mask of cells to keep.
    """
    if np.ndim(keep) == 0:
        mask = prefix_mask(keep)
    else:
        mask = np.asarray(keep, dtype=bool)
        if mask.shape != GRID_SHAPE:
            raise ValidationError("explicit keep mask must be 6x6")
        if not mask.any():
            raise BadCount("keep mask selects no projectors")
    return MeasurementGrid(g.values, g.mask & mask)
