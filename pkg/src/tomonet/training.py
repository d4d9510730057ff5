"""Mini-batch Adagrad training of the tau regressor and fidelity evaluation."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import cnn
from . import rng as _rng
from .exceptions import EmptyDataset, ValidationError
from .linalg import fidelity
from .states import TAU_NORM_FLOOR, density_from_tau, unpack_tau16

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 200
    learning_rate: float = 0.008
    batch_size: int = 4
    dropout_rate: float = 0.5
    seed: int = 0
    initial_accumulator: float = 0.0

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValidationError("learning_rate must be > 0")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValidationError("dropout_rate must be in [0, 1)")
        if self.batch_size < 1:
            raise ValidationError("batch_size must be >= 1")
        if self.epochs < 0:
            raise ValidationError("epochs must be >= 0")
        if self.initial_accumulator < 0:
            raise ValidationError("initial_accumulator must be >= 0")


@dataclass
class TrainHistory:
    train_loss: list = field(default_factory=list)
    test_fidelity: list = field(default_factory=list)
    degenerate: list = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.train_loss)

    def append(self, loss: float, fid: float, degenerate: int = 0) -> None:
        self.train_loss.append(float(loss))
        self.test_fidelity.append(float(fid))
        self.degenerate.append(int(degenerate))


def densities_from_outputs(tau16: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Map network outputs to states; degenerate rows become I/4 and are flagged."""
    tau = unpack_tau16(tau16)
    norm = np.sum(np.abs(tau) ** 2, axis=(-2, -1))
    bad = norm <= TAU_NORM_FLOOR
    if bad.any():
        tau[bad] = 0.5 * np.eye(4)
    return density_from_tau(tau), bad


def predict_density(params: cnn.CnnParams, grid) -> np.ndarray:
    """Eval-mode forward, unpack, ``tau^H tau / Tr``; raises DegenerateTau on tau = 0."""
    out = cnn.predict_tau16(params, grid)
    rho = density_from_tau(unpack_tau16(out))
    return rho[0] if np.ndim(grid) == 2 else rho


def evaluate(params: cnn.CnnParams, grids: np.ndarray, references: np.ndarray) -> tuple[np.ndarray, int]:
    """Per-sample fidelities of the network's predictions and the degenerate count."""
    rho, bad = densities_from_outputs(cnn.predict_tau16(params, grids))
    return np.atleast_1d(fidelity(rho, references)), int(bad.sum())


def train(
    train_grids: np.ndarray,
    train_targets: np.ndarray,
    cfg: TrainConfig,
    test_grids: np.ndarray | None = None,
    test_references: np.ndarray | None = None,
    params: cnn.CnnParams | None = None,
    callback=None,
) -> tuple[cnn.CnnParams, TrainHistory]:
    """Train from ``params`` (fresh Glorot init from ``cfg.seed`` if None).

    Each epoch shuffles with ``child_rng(seed, "shuffle", epoch)`` and draws
    dropout masks from ``child_rng(seed, "dropout", epoch)``; batches are
    consecutive slices of the shuffled order, the last one possibly short.
    After every epoch the mean test fidelity is recorded when test data is
    given (NaN otherwise).
    """
    train_grids = np.asarray(train_grids, dtype=float)
    train_targets = np.asarray(train_targets, dtype=float)
    n = len(train_grids)
    if n == 0:
        raise EmptyDataset("training split is empty")
    if train_targets.shape != (n, cnn.N_OUT):
        raise ValidationError(f"targets must have shape ({n}, 16), got {train_targets.shape}")
    if params is None:
        params = cnn.init_params(cfg.seed, train_grids.shape[1:])
        params.accum[:] = cfg.initial_accumulator
    else:
        params = params.copy()
    history = TrainHistory()
    for epoch in range(cfg.epochs):
        order = _rng.child_rng(cfg.seed, "shuffle", epoch).permutation(n)
        drop = _rng.child_rng(cfg.seed, "dropout", epoch)
        total = 0.0
        for start in range(0, n, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            loss = cnn.train_step(
                params, train_grids[idx], train_targets[idx],
                cfg.learning_rate, drop, cfg.dropout_rate,
            )
            total += loss * len(idx)
        fid, bad = np.nan, 0
        if test_grids is not None and len(test_grids):
            fids, bad = evaluate(params, test_grids, test_references)
            fid = float(np.mean(fids))
        history.append(total / n, fid, bad)
        logger.debug("epoch %d loss %.3e fidelity %.5f", epoch, total / n, fid)
        if callback is not None:
            callback(epoch, params, history)
    return params, history


def train_dataset(dataset, cfg: TrainConfig, **kwargs):
    """:func:`train` on a :class:`~tomonet.dataset.Dataset`'s splits."""
    return train(
        dataset.train.grids, dataset.train.targets, cfg,
        dataset.test.grids, dataset.test.references, **kwargs,
    )
