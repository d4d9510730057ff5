"""Small convolutional regressor from a 6x6 measurement grid to 16 tau values.

Architecture (channels-last, batch first)::

    (6, 6, 1) -conv 2x2 same, 25 maps, ReLU-> (6, 6, 25)
              -maxpool 2x2 / 2->              (3, 3, 25)
              -conv 2x2 same, 25 maps, ReLU-> (3, 3, 25)
              -flatten (row, col, channel)->  225
              -dense 720, ReLU, dropout->     720
              -dense 450, ReLU, dropout->     450
              -dense 16, linear->             16

"Same" padding for the even 2x2 kernel adds one zero row at the bottom and one
zero column at the right.  Pooling rounds up: an odd spatial size is padded
with ``-inf`` so the last row/column forms its own window.  Dropout is inverted: kept units are scaled by
``1 / (1 - rate)`` during training and evaluation is the identity.

All parameters live in one flat float64 vector (layer order of
:data:`LAYERS`), with a parallel vector of Adagrad accumulators.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numba
import numpy as np

from . import rng as _rng
from .exceptions import ShapeMismatch

N_MAPS = 25
FC1 = 720
FC2 = 450
N_OUT = 16
ADAGRAD_DELTA = 1e-8

def pooled_shape(input_shape) -> tuple[int, int]:
    h, w = input_shape
    return (h + 1) // 2, (w + 1) // 2


def layer_shapes(input_shape=(6, 6)) -> tuple:
    """(name, shape) for every parameter block, in storage order."""
    ph, pw = pooled_shape(input_shape)
    return (
        ("conv1_w", (2, 2, 1, N_MAPS)),
        ("conv1_b", (N_MAPS,)),
        ("conv2_w", (2, 2, N_MAPS, N_MAPS)),
        ("conv2_b", (N_MAPS,)),
        ("fc1_w", (ph * pw * N_MAPS, FC1)),
        ("fc1_b", (FC1,)),
        ("fc2_w", (FC1, FC2)),
        ("fc2_b", (FC2,)),
        ("out_w", (FC2, N_OUT)),
        ("out_b", (N_OUT,)),
    )


LAYERS = layer_shapes()


def n_params(input_shape=(6, 6)) -> int:
    return sum(math.prod(shape) for _, shape in layer_shapes(input_shape))


N_PARAMS = n_params()


def _views(flat: np.ndarray, input_shape=(6, 6)) -> dict[str, np.ndarray]:
    views, pos = {}, 0
    for name, shape in layer_shapes(input_shape):
        size = math.prod(shape)
        views[name] = flat[pos : pos + size].reshape(shape)
        pos += size
    return views


@dataclass
class CnnParams:
    """Weights, biases and Adagrad state of the regressor."""

    values: np.ndarray
    accum: np.ndarray = None
    step: int = 0
    input_shape: tuple = (6, 6)
    layers: dict = field(init=False, repr=False, compare=False)
    grad_sq: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        self.input_shape = tuple(int(s) for s in self.input_shape)
        if len(self.input_shape) != 2 or min(self.input_shape) < 1:
            raise ShapeMismatch(f"bad input shape {self.input_shape}")
        size = n_params(self.input_shape)
        self.values = np.ascontiguousarray(self.values, dtype=np.float64)
        if self.values.shape != (size,):
            raise ShapeMismatch(f"expected {size} parameters, got {self.values.shape}")
        if self.accum is None:
            self.accum = np.zeros(size)
        self.accum = np.ascontiguousarray(self.accum, dtype=np.float64)
        if self.accum.shape != (size,):
            raise ShapeMismatch("accumulator shape does not match parameters")
        self.layers = _views(self.values, self.input_shape)
        self.grad_sq = _views(self.accum, self.input_shape)

    @property
    def size(self) -> int:
        return self.values.size

    def __getitem__(self, name: str) -> np.ndarray:
        return self.layers[name]

    def copy(self) -> "CnnParams":
        return CnnParams(self.values.copy(), self.accum.copy(), self.step, self.input_shape)

    def __eq__(self, other):
        if not isinstance(other, CnnParams):
            return NotImplemented
        return (
            self.step == other.step
            and self.input_shape == other.input_shape
            and np.array_equal(self.values, other.values)
            and np.array_equal(self.accum, other.accum)
        )

    @classmethod
    def zeros(cls, input_shape=(6, 6)) -> "CnnParams":
        return cls(np.zeros(n_params(input_shape)), input_shape=input_shape)


def _fans(shape) -> tuple[int, int]:
    if len(shape) == 4:
        receptive = shape[0] * shape[1]
        return receptive * shape[2], receptive * shape[3]
    return shape[0], shape[1]


def init_params(seed: int, input_shape=(6, 6)) -> CnnParams:
    """Glorot-uniform weights, zero biases, drawn from ``seed``."""
    rng = _rng.child_rng(seed, "cnn-init")
    params = CnnParams.zeros(input_shape)
    for name, shape in layer_shapes(input_shape):
        if name.endswith("_w"):
            fan_in, fan_out = _fans(shape)
            limit = math.sqrt(6.0 / (fan_in + fan_out))
            params[name][...] = rng.uniform(-limit, limit, size=shape)
    return params


# --- layer primitives -------------------------------------------------------


def _patches(x: np.ndarray) -> np.ndarray:
    """(B, H, W, C) -> (B, H, W, 4C) 2x2 windows of the bottom/right padded input."""
    b, h, w, c = x.shape
    padded = np.zeros((b, h + 1, w + 1, c))
    padded[:, :h, :w] = x
    return np.concatenate(
        [padded[:, di : di + h, dj : dj + w] for di in (0, 1) for dj in (0, 1)],
        axis=-1,
    )


def _patches_backward(dp: np.ndarray, c: int) -> np.ndarray:
    b, h, w, _ = dp.shape
    padded = np.zeros((b, h + 1, w + 1, c))
    k = 0
    for di in (0, 1):
        for dj in (0, 1):
            padded[:, di : di + h, dj : dj + w] += dp[..., k * c : (k + 1) * c]
            k += 1
    return padded[:, :h, :w]


def _conv(x, w, bias):
    p = _patches(x)
    kernel = w.reshape(-1, w.shape[-1])
    return p, p @ kernel + bias


def _maxpool(x: np.ndarray):
    b, h, w, c = x.shape
    ph, pw = pooled_shape((h, w))
    if (2 * ph, 2 * pw) != (h, w):
        # odd sizes: pad bottom/right with -inf so no window is empty
        padded = np.full((b, 2 * ph, 2 * pw, c), -np.inf)
        padded[:, :h, :w] = x
        x = padded
    win = x.reshape(b, ph, 2, pw, 2, c).transpose(0, 1, 3, 5, 2, 4)
    win = win.reshape(b, ph, pw, c, 4)
    arg = np.argmax(win, axis=-1)
    out = np.take_along_axis(win, arg[..., None], axis=-1)[..., 0]
    return out, arg


def _maxpool_backward(dout: np.ndarray, arg: np.ndarray, shape) -> np.ndarray:
    b, h, w, c = shape
    ph, pw = dout.shape[1:3]
    win = np.zeros(dout.shape + (4,))
    np.put_along_axis(win, arg[..., None], dout[..., None], axis=-1)
    win = win.reshape(b, ph, pw, c, 2, 2).transpose(0, 1, 4, 2, 5, 3)
    return win.reshape(b, 2 * ph, 2 * pw, c)[:, :h, :w]


def dropout_masks(rng, batch: int, rate: float) -> tuple[np.ndarray, np.ndarray]:
    """Inverted-dropout multipliers for the two dense hidden layers."""
    if rate <= 0.0:
        return np.ones((batch, FC1)), np.ones((batch, FC2))
    keep = 1.0 - rate
    u1 = rng.random((batch, FC1))
    u2 = rng.random((batch, FC2))
    return (u1 < keep) / keep, (u2 < keep) / keep


def _as_batch(x, input_shape=(6, 6)) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape == tuple(input_shape):
        x = x[None]
    if x.ndim != 3 or x.shape[1:] != tuple(input_shape):
        raise ShapeMismatch(
            f"expected inputs of shape (B, {input_shape[0]}, {input_shape[1]}), got {x.shape}"
        )
    return x


def forward(
    params: CnnParams,
    x,
    train: bool = False,
    rng=None,
    dropout_rate: float = 0.5,
    masks=None,
):
    """Run the network on a batch of grids.

    Returns ``(out, cache)`` with ``out`` of shape (B, 16).  In train mode
    dropout masks are drawn from ``rng`` unless given explicitly as a pair
    from :func:`dropout_masks`.
    """
    if not isinstance(params, CnnParams):
        raise ShapeMismatch("params must be a CnnParams instance")
    x = _as_batch(x, params.input_shape)
    b = x.shape[0]
    p = params.layers
    if train:
        if masks is None:
            masks = dropout_masks(_rng.as_rng(rng), b, dropout_rate)
    else:
        masks = None

    x0 = x[..., None]
    p1, z1 = _conv(x0, p["conv1_w"], p["conv1_b"])
    a1 = np.maximum(z1, 0.0)
    pooled, arg = _maxpool(a1)
    p2, z2 = _conv(pooled, p["conv2_w"], p["conv2_b"])
    a2 = np.maximum(z2, 0.0)
    flat = a2.reshape(b, -1)
    z3 = flat @ p["fc1_w"] + p["fc1_b"]
    h3 = np.maximum(z3, 0.0)
    if masks is not None:
        h3 = h3 * masks[0]
    z4 = h3 @ p["fc2_w"] + p["fc2_b"]
    h4 = np.maximum(z4, 0.0)
    if masks is not None:
        h4 = h4 * masks[1]
    out = h4 @ p["out_w"] + p["out_b"]
    cache = dict(
        p1=p1, z1=z1, arg=arg, a1_shape=a1.shape, p2=p2, z2=z2, flat=flat,
        z3=z3, h3=h3, z4=z4, h4=h4, masks=masks, out=out,
    )
    return out, cache


def loss_mse(pred, target) -> float:
    """Mean squared error over the 16 components, averaged over the batch."""
    pred = np.asarray(pred, dtype=float)
    target = np.asarray(target, dtype=float)
    return float(np.mean((pred - target) ** 2))


def _backprop(params: CnnParams, cache, target):
    """Per-layer (input activation, output delta) pairs, deltas batch-averaged."""
    p = params.layers
    out = cache["out"]
    target = np.asarray(target, dtype=float).reshape(out.shape)
    b = out.shape[0]
    masks = cache["masks"]

    d_out = 2.0 * (out - target) / (N_OUT * b)
    dh4 = d_out @ p["out_w"].T
    if masks is not None:
        dh4 = dh4 * masks[1]
    dz4 = dh4 * (cache["z4"] > 0)
    dh3 = dz4 @ p["fc2_w"].T
    if masks is not None:
        dh3 = dh3 * masks[0]
    dz3 = dh3 * (cache["z3"] > 0)
    dflat = dz3 @ p["fc1_w"].T
    dz2 = dflat.reshape(cache["z2"].shape) * (cache["z2"] > 0)
    dp2 = dz2 @ p["conv2_w"].reshape(-1, N_MAPS).T
    dpool = _patches_backward(dp2, N_MAPS)
    da1 = _maxpool_backward(dpool, cache["arg"], cache["a1_shape"])
    dz1 = da1 * (cache["z1"] > 0)
    return dict(
        conv1=(cache["p1"].reshape(-1, 4), dz1.reshape(-1, N_MAPS)),
        conv2=(cache["p2"].reshape(-1, 4 * N_MAPS), dz2.reshape(-1, N_MAPS)),
        fc1=(cache["flat"], dz3),
        fc2=(cache["h3"], dz4),
        out=(cache["h4"], d_out),
    )


def backward(params: CnnParams, cache, target) -> np.ndarray:
    """Exact gradient of :func:`loss_mse` as a flat vector aligned with params."""
    deltas = _backprop(params, cache, target)
    grads = np.zeros(params.size)
    g = _views(grads, params.input_shape)
    for layer, (x_in, delta) in deltas.items():
        w = g[f"{layer}_w"]
        w[...] = (x_in.T @ delta).reshape(w.shape)
        g[f"{layer}_b"][...] = delta.sum(axis=0)
    return grads


def adagrad_step(
    params: CnnParams, grads: np.ndarray, lr: float, delta: float = ADAGRAD_DELTA
) -> CnnParams:
    """Return updated parameters; ``params`` is left untouched."""
    grads = np.asarray(grads, dtype=np.float64)
    if grads.shape != params.values.shape:
        raise ShapeMismatch(f"expected {params.size} gradients, got {grads.shape}")
    new = params.copy()
    new.accum += grads * grads
    new.values -= lr * grads / (np.sqrt(new.accum) + delta)
    new.step += 1
    return new


# --- fused training step ----------------------------------------------------


@numba.njit(cache=True)
def _dense_adagrad(w, acc, x, d, lr, delta):  # pragma: no cover - compiled
    """In-place Adagrad on a dense layer whose gradient is ``x.T @ d``.

    Rows with an all-zero input column and columns with an all-zero delta have
    exactly zero gradient and are skipped; the update is identical to the
    dense rule because a zero gradient leaves both weight and accumulator
    unchanged.
    """
    b, n_in = x.shape
    n_out = d.shape[1]
    cols = np.empty(n_out, dtype=np.int64)
    n_cols = 0
    for j in range(n_out):
        for k in range(b):
            if d[k, j] != 0.0:
                cols[n_cols] = j
                n_cols += 1
                break
    for i in range(n_in):
        active = False
        for k in range(b):
            if x[k, i] != 0.0:
                active = True
                break
        if not active:
            continue
        for c in range(n_cols):
            j = cols[c]
            g = 0.0
            for k in range(b):
                g += x[k, i] * d[k, j]
            if g != 0.0:
                a = acc[i, j] + g * g
                acc[i, j] = a
                w[i, j] -= lr * g / (math.sqrt(a) + delta)


@numba.njit(cache=True)
def _vector_adagrad(w, acc, g, lr, delta):  # pragma: no cover - compiled
    for i in range(w.size):
        gi = g[i]
        if gi != 0.0:
            a = acc[i] + gi * gi
            acc[i] = a
            w[i] -= lr * gi / (math.sqrt(a) + delta)


def train_step(
    params: CnnParams, x, target, lr: float, rng, dropout_rate: float = 0.5
) -> float:
    """One in-place forward/backward/Adagrad update on a mini-batch.

    Mathematically identical to ``adagrad_step(params, backward(...), lr)``
    but avoids materializing the 500k-entry gradient.  Returns the batch loss
    measured before the update.
    """
    out, cache = forward(params, x, train=True, rng=rng, dropout_rate=dropout_rate)
    loss = loss_mse(out, target)
    deltas = _backprop(params, cache, target)
    w, acc = params.layers, params.grad_sq
    for layer, (x_in, delta) in deltas.items():
        name = f"{layer}_w"
        shape = w[name].shape
        _dense_adagrad(
            w[name].reshape(-1, shape[-1]),
            acc[name].reshape(-1, shape[-1]),
            np.ascontiguousarray(x_in),
            np.ascontiguousarray(delta),
            lr,
            ADAGRAD_DELTA,
        )
        _vector_adagrad(w[f"{layer}_b"], acc[f"{layer}_b"], delta.sum(axis=0), lr, ADAGRAD_DELTA)
    params.step += 1
    return loss


def predict_tau16(params: CnnParams, x, batch: int = 1024) -> np.ndarray:
    """Eval-mode forward over any number of grids, chunked."""
    x = _as_batch(x, params.input_shape)
    outs = [forward(params, x[i : i + batch])[0] for i in range(0, len(x), batch)]
    return np.concatenate(outs, axis=0) if outs else np.zeros((0, N_OUT))
