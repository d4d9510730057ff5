"""scikit-learn compatible wrappers around the Stokes and CNN reconstructors.

Both estimators take ``X`` as an array of measurement grids, shape
``(n_samples, 6, 6)`` (a flat ``(n_samples, 36)`` array is accepted too), and
predict density matrices of shape ``(n_samples, 4, 4)``.  ``score`` is the
mean Uhlmann fidelity against reference states.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_is_fitted

from . import cnn, states, stokes, training
from .exceptions import ValidationError
from .linalg import fidelity


def check_grids(X, input_shape=(6, 6)) -> np.ndarray:
    """Coerce ``X`` to a finite float array of shape ``(n, *input_shape)``."""
    X = np.asarray(X, dtype=float)
    h, w = input_shape
    if X.ndim == 2 and X.shape[1] == h * w:
        X = X.reshape(-1, h, w)
    if X.ndim != 3 or X.shape[1:] != (h, w):
        raise ValidationError(f"expected grids of shape (n, {h}, {w}), got {X.shape}")
    if not np.all(np.isfinite(X)):
        raise ValidationError("grids contain NaN or inf")
    return X


def check_states(rho, n: int | None = None) -> np.ndarray:
    rho = np.asarray(rho, dtype=complex)
    if rho.shape == (4, 4):
        rho = rho[None]
    if rho.ndim != 3 or rho.shape[1:] != (4, 4):
        raise ValidationError(f"expected density matrices of shape (n, 4, 4), got {rho.shape}")
    if n is not None and len(rho) != n:
        raise ValidationError(f"got {len(rho)} states for {n} grids")
    return rho


def check_targets(y, n: int) -> np.ndarray:
    """Tau16 targets from either ``(n, 16)`` reals or ``(n, 4, 4)`` states."""
    y = np.asarray(y)
    if y.ndim == 3 and y.shape[1:] == (4, 4):
        return np.stack([states.pack_tau16(states.tau_from_density(r)) for r in y])
    y = np.asarray(y, dtype=float)
    if y.shape != (n, 16):
        raise ValidationError(f"expected targets of shape ({n}, 16) or ({n}, 4, 4), got {y.shape}")
    if not np.all(np.isfinite(y)):
        raise ValidationError("targets contain NaN or inf")
    return y


class _FidelityScoreMixin:
    def score(self, X, y, sample_weight=None):
        """Mean fidelity between predicted states and reference states ``y``."""
        rho = self.predict(X)
        y = np.asarray(y)
        ref = states.density_from_tau16(y) if y.ndim == 2 and y.shape[1] == 16 else check_states(y, len(rho))
        f = np.atleast_1d(fidelity(rho, ref))
        return float(np.average(f, weights=sample_weight))


class StokesReconstructor(_FidelityScoreMixin, BaseEstimator):
    """Linear inversion through the 16 two-qubit Stokes parameters.

    Parameters
    ----------
    physical : bool, default=True
        Project the (possibly indefinite) linear estimate onto the state
        space by eigenvalue clamping.
    """

    def __init__(self, physical: bool = True):
        self.physical = physical

    def fit(self, X=None, y=None):
        self.n_features_in_ = 36
        return self

    def transform(self, X):
        """Stokes parameters, shape ``(n, 4, 4)``."""
        return stokes.stokes_params(check_grids(X))

    def predict(self, X):
        raw = stokes.stokes_reconstruct(check_grids(X))
        if self.physical:
            raw, self.last_min_eigenvalues_ = stokes.physicalize(raw, return_min_eig=True)
        return raw


class CnnTomography(_FidelityScoreMixin, RegressorMixin, BaseEstimator):
    """Convolutional tau-matrix regressor.

    ``fit(X, y)`` takes grids and either tau16 targets ``(n, 16)`` or
    reference density matrices ``(n, 4, 4)``.  ``predict`` returns density
    matrices; ``predict_tau16`` the raw network outputs.

    Parameters
    ----------
    epochs : int, default=200
    learning_rate : float, default=0.008
    batch_size : int, default=4
    dropout_rate : float, default=0.5
    random_state : int, default=0
        Seeds initialization, shuffling and dropout.
    warm_start : bool, default=False
        Continue from the current parameters on repeated ``fit`` calls.
    """

    def __init__(
        self,
        epochs: int = 200,
        learning_rate: float = 0.008,
        batch_size: int = 4,
        dropout_rate: float = 0.5,
        random_state: int = 0,
        warm_start: bool = False,
    ):
        self.epochs = epochs
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.dropout_rate = dropout_rate
        self.random_state = random_state
        self.warm_start = warm_start

    def _config(self) -> training.TrainConfig:
        return training.TrainConfig(
            epochs=self.epochs,
            learning_rate=self.learning_rate,
            batch_size=self.batch_size,
            dropout_rate=self.dropout_rate,
            seed=self.random_state,
        )

    def fit(self, X, y, eval_set=None, callback=None):
        """Train on ``(X, y)``; ``eval_set=(X_test, rho_test)`` is scored every epoch."""
        X = np.asarray(X, dtype=float)
        if X.ndim == 2 and X.shape[1] == 36:
            X = X.reshape(-1, 6, 6)
        if X.ndim != 3:
            raise ValidationError(f"expected grids of shape (n, h, w), got {X.shape}")
        X = check_grids(X, X.shape[1:])
        targets = check_targets(y, len(X))
        start = self.params_ if self.warm_start and hasattr(self, "params_") else None
        test_X = test_rho = None
        if eval_set is not None:
            test_X = check_grids(eval_set[0], X.shape[1:])
            test_rho = check_states(eval_set[1], len(test_X))
        self.params_, self.history_ = training.train(
            X, targets, self._config(), test_X, test_rho, params=start, callback=callback
        )
        self.input_shape_ = tuple(X.shape[1:])
        self.n_features_in_ = int(np.prod(self.input_shape_))
        return self

    def predict_tau16(self, X):
        check_is_fitted(self, "params_")
        return cnn.predict_tau16(self.params_, check_grids(X, self.input_shape_))

    def predict(self, X):
        rho, bad = training.densities_from_outputs(self.predict_tau16(X))
        self.last_degenerate_ = int(bad.sum())
        return rho

    def save(self, path) -> None:
        from .checkpoint import save_checkpoint

        check_is_fitted(self, "params_")
        save_checkpoint(self.params_, path)

    @classmethod
    def from_checkpoint(cls, path, **kwargs) -> "CnnTomography":
        from .checkpoint import load_checkpoint

        est = cls(**kwargs)
        est.params_ = load_checkpoint(path)
        est.input_shape_ = est.params_.input_shape
        est.n_features_in_ = int(np.prod(est.input_shape_))
        est.history_ = training.TrainHistory()
        return est
