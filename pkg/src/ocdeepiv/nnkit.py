"""Hand-written layers, loss, optimizer and gradient checker.

Each layer is a small dataclass holding its parameters.  Forward functions
take a :class:`Mode`; backward functions take whatever the matching forward
cached and the upstream gradient, and return input and parameter gradients.

Batch norm follows the usual framework conventions: biased batch variance
for normalization, unbiased variance in the running estimate, momentum 0.1,
eps 1e-5.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import ConfigError, GradCheckError, ShapeError, TrainingError
from .numkit import RngStream


class Mode(enum.Enum):
    TRAIN = "train"
    EVAL = "eval"


# --------------------------------------------------------------------------
# Linear

@dataclass
class LinearLayer:
    W: np.ndarray  # (out, in)
    b: np.ndarray  # (out,)

    @classmethod
    def init(cls, in_dim: int, out_dim: int, rng: RngStream) -> "LinearLayer":
        # U(-1/sqrt(in), 1/sqrt(in)) for weight and bias, the common default.
        bound = 1.0 / np.sqrt(in_dim)
        W = rng.uniform(-bound, bound, (out_dim, in_dim))
        b = rng.uniform(-bound, bound, (out_dim,))
        return cls(W, b)

    def params(self) -> dict[str, np.ndarray]:
        return {"W": self.W, "b": self.b}


def linear_forward(layer: LinearLayer, x: np.ndarray, mode: Mode = Mode.TRAIN) -> np.ndarray:
    if x.ndim != 2 or x.shape[1] != layer.W.shape[1]:
        raise ShapeError(f"linear layer expects (*, {layer.W.shape[1]}) input, got {x.shape}")
    return x @ layer.W.T + layer.b


def linear_backward(layer: LinearLayer, x: np.ndarray, upstream: np.ndarray):
    """Return ``(grad_x, grad_W, grad_b)``."""
    if upstream.shape != (x.shape[0], layer.W.shape[0]):
        raise ShapeError(
            f"upstream gradient {upstream.shape} does not match output "
            f"({x.shape[0]}, {layer.W.shape[0]})"
        )
    return upstream @ layer.W, upstream.T @ x, upstream.sum(axis=0)


# --------------------------------------------------------------------------
# Batch norm (per column)

@dataclass
class BatchNormLayer:
    gamma: np.ndarray
    beta: np.ndarray
    running_mean: np.ndarray
    running_var: np.ndarray
    eps: float = 1e-5
    momentum: float = 0.1

    @classmethod
    def init(cls, width: int) -> "BatchNormLayer":
        return cls(np.ones(width), np.zeros(width), np.zeros(width), np.ones(width))

    def params(self) -> dict[str, np.ndarray]:
        return {"gamma": self.gamma, "beta": self.beta}


def batchnorm_forward(layer: BatchNormLayer, x: np.ndarray, mode: Mode):
    """Return ``(y, cache)``; ``cache`` is ``None`` in eval mode.

    Train mode updates the running statistics in place.
    """
    if x.ndim != 2 or x.shape[1] != layer.gamma.shape[0]:
        raise ShapeError(f"batch norm expects width {layer.gamma.shape[0]}, got {x.shape}")
    if mode is Mode.EVAL:
        inv_std = 1.0 / np.sqrt(layer.running_var + layer.eps)
        return (x - layer.running_mean) * inv_std * layer.gamma + layer.beta, None

    n = x.shape[0]
    if n < 2:
        raise TrainingError("batch norm in train mode needs at least 2 rows")
    mean = x.mean(axis=0)
    centered = x - mean
    var = (centered * centered).mean(axis=0)
    inv_std = 1.0 / np.sqrt(var + layer.eps)
    xhat = centered * inv_std

    m = layer.momentum
    layer.running_mean *= 1.0 - m
    layer.running_mean += m * mean
    layer.running_var *= 1.0 - m
    layer.running_var += m * var * (n / (n - 1))

    return xhat * layer.gamma + layer.beta, (xhat, inv_std)


def _norm_backward(xhat, inv_std, dxhat, axis):
    # Shared by batch norm (axis=0) and layer norm (axis=1).
    n = xhat.shape[axis]
    s1 = dxhat.sum(axis=axis, keepdims=True)
    s2 = (dxhat * xhat).sum(axis=axis, keepdims=True)
    return inv_std * (dxhat - s1 / n - xhat * s2 / n)


def batchnorm_backward(layer: BatchNormLayer, cache, upstream: np.ndarray):
    """Return ``(grad_x, grad_gamma, grad_beta)`` for a train-mode forward."""
    if cache is None:
        raise TrainingError("batch norm backward needs a train-mode forward cache")
    xhat, inv_std = cache
    grad_gamma = (upstream * xhat).sum(axis=0)
    grad_beta = upstream.sum(axis=0)
    grad_x = _norm_backward(xhat, inv_std[None, :], upstream * layer.gamma, axis=0)
    return grad_x, grad_gamma, grad_beta


# --------------------------------------------------------------------------
# Layer norm (per row)

@dataclass
class LayerNormLayer:
    gamma: np.ndarray
    beta: np.ndarray
    eps: float = 1e-5

    @classmethod
    def init(cls, width: int) -> "LayerNormLayer":
        return cls(np.ones(width), np.zeros(width))

    def params(self) -> dict[str, np.ndarray]:
        return {"gamma": self.gamma, "beta": self.beta}


def layernorm_forward(layer: LayerNormLayer, x: np.ndarray, mode: Mode = Mode.TRAIN):
    if x.ndim != 2 or x.shape[1] != layer.gamma.shape[0]:
        raise ShapeError(f"layer norm expects width {layer.gamma.shape[0]}, got {x.shape}")
    mean = x.mean(axis=1, keepdims=True)
    centered = x - mean
    var = (centered * centered).mean(axis=1, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + layer.eps)
    xhat = centered * inv_std
    return xhat * layer.gamma + layer.beta, (xhat, inv_std)


def layernorm_backward(layer: LayerNormLayer, cache, upstream: np.ndarray):
    xhat, inv_std = cache
    grad_gamma = (upstream * xhat).sum(axis=0)
    grad_beta = upstream.sum(axis=0)
    grad_x = _norm_backward(xhat, inv_std, upstream * layer.gamma, axis=1)
    return grad_x, grad_gamma, grad_beta


# --------------------------------------------------------------------------
# ReLU and dropout

def relu_forward(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def relu_backward(x: np.ndarray, upstream: np.ndarray) -> np.ndarray:
    # subgradient at exactly 0 is 0
    return upstream * (x > 0.0)


@dataclass
class DropoutLayer:
    p: float = 0.3

    def __post_init__(self):
        if not 0.0 <= self.p < 1.0:
            raise ConfigError(f"dropout probability must lie in [0, 1), got {self.p}")


def dropout_forward(layer: DropoutLayer, x: np.ndarray, mode: Mode,
                    rng: RngStream | None = None, mask: np.ndarray | None = None):
    """Inverted dropout.  Returns ``(y, mask)`` where ``mask`` is 0/1.

    A supplied ``mask`` is reused instead of drawing a new one, which is how
    gradient checks freeze the stochastic part of the network.
    """
    if mode is Mode.EVAL or layer.p == 0.0:
        return x, np.ones_like(x)
    if mask is None:
        if rng is None:
            raise ConfigError("train-mode dropout needs an RngStream or a fixed mask")
        mask = rng.bernoulli_mask(x.shape[0], x.shape[1], 1.0 - layer.p)
    elif mask.shape != x.shape:
        raise ShapeError(f"dropout mask {mask.shape} does not match input {x.shape}")
    return x * mask / (1.0 - layer.p), mask


def dropout_backward(layer: DropoutLayer, mask: np.ndarray, upstream: np.ndarray) -> np.ndarray:
    return upstream * mask / (1.0 - layer.p)


# --------------------------------------------------------------------------
# Loss

def mse_loss(pred: np.ndarray, target: np.ndarray):
    """Mean squared error and its gradient with respect to ``pred``."""
    if pred.shape != target.shape:
        raise ShapeError(f"prediction {pred.shape} and target {target.shape} differ")
    diff = pred - target
    n = diff.size
    # numpy scalar, so extended-precision inputs stay extended
    return np.sum(diff * diff) / n, (2.0 / n) * diff


# --------------------------------------------------------------------------
# Adam with coupled (L2-style) weight decay

@dataclass
class AdamState:
    lr: float = 1e-3
    weight_decay: float = 0.0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(state: AdamState, params: dict[str, np.ndarray],
              grads: dict[str, np.ndarray]) -> dict[str, np.ndarray]:
    """One Adam update, applied in place to every array in ``params``."""
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.t
    c2 = 1.0 - b2 ** state.t
    for name, theta in params.items():
        g = grads[name]
        if g.shape != theta.shape:
            raise ShapeError(f"gradient for {name} has shape {g.shape}, parameter {theta.shape}")
        if state.weight_decay:
            g = g + state.weight_decay * theta
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros_like(theta)
            state.v[name] = np.zeros_like(theta)
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        theta -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return params


# --------------------------------------------------------------------------
# Finite-difference gradient check

@dataclass
class GradCheckReport:
    name: str
    max_rel_error: float
    worst_param: str
    worst_index: tuple
    per_param: dict[str, float]
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.max_rel_error < self.tolerance


def relative_error(a, n) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    n = np.asarray(n, dtype=np.float64)
    return np.abs(a - n) / np.maximum(np.maximum(np.abs(a), np.abs(n)), 1e-8)


def numeric_grad(loss_fn: Callable[[], float], arr: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Central differences of ``loss_fn`` with respect to ``arr`` (perturbed in place)."""
    grad = np.zeros_like(arr)
    flat = arr.reshape(-1)
    g = grad.reshape(-1)
    for i in range(flat.size):
        old = flat[i]
        flat[i] = old + h
        fp = loss_fn()
        flat[i] = old - h
        fm = loss_fn()
        flat[i] = old
        if not (np.isfinite(fp) and np.isfinite(fm)):
            raise GradCheckError(f"non-finite loss while perturbing entry {i}")
        g[i] = (fp - fm) / (2.0 * h)
    return grad


def grad_check(loss_fn: Callable[[], float], arrays: dict[str, np.ndarray],
               analytic: dict[str, np.ndarray], *, h: float = 1e-5,
               tolerance: float = 1e-5, name: str = "") -> GradCheckReport:
    """Compare ``analytic`` gradients to central differences of ``loss_fn``.

    ``arrays`` maps names to the live arrays ``loss_fn`` reads (parameters and
    inputs alike).  ``loss_fn`` must be deterministic, so any dropout mask has
    to be fixed beforehand.
    """
    per_param = {}
    worst = (-1.0, "", ())
    for key, arr in arrays.items():
        a = np.asarray(analytic[key], dtype=np.float64)
        if not np.all(np.isfinite(a)):
            raise GradCheckError(f"non-finite analytic gradient for {key}")
        num = numeric_grad(loss_fn, arr, h)
        err = relative_error(a, num)
        idx = np.unravel_index(int(np.argmax(err)), err.shape) if err.size else ()
        e = float(err.max()) if err.size else 0.0
        per_param[key] = e
        if e > worst[0]:
            worst = (e, key, tuple(int(i) for i in idx))
    return GradCheckReport(name, max(worst[0], 0.0), worst[1], worst[2], per_param, tolerance)
