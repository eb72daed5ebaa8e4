"""Finite-difference checks for every layer family and the full network.

Each check builds a small random problem in float64, computes analytic
gradients with the hand-written backward passes and compares them with
central differences (``nnkit.grad_check``).  Scalar losses are
``sum(output * R)`` for a fixed random ``R`` unless stated otherwise.

For the penalty and the full network the differences are taken on an
extended-precision copy.  In float64 their rounding noise (about
1e-16 * |loss| / h) swamps gradient entries that are exactly or nearly zero,
such as a bias feeding straight into batch norm.
"""

from __future__ import annotations

import numpy as np

from . import model
from . import nnkit as nn
from .errors import ConfigError
from .nnkit import GradCheckReport, Mode
from .numkit import RngStream

FAMILIES = ("linear", "batchnorm", "layernorm", "relu", "dropout", "mse", "ortho", "net")
KINK_MARGIN = 1e-4
EXTENDED = np.longdouble


def _away_from_zero(rng, rows, cols, margin=KINK_MARGIN):
    x = rng.standard_normal(rows, cols)
    while np.any(np.abs(x) < margin):
        bad = np.abs(x) < margin
        x[bad] = rng.standard_normal(1, int(bad.sum()))[0]
    return x


def check_linear(seed=0, tol=1e-5) -> GradCheckReport:
    rng = RngStream(seed, 10)
    layer = nn.LinearLayer(rng.standard_normal(4, 3), rng.standard_normal(1, 4)[0])
    x = rng.standard_normal(5, 3)
    R = rng.standard_normal(5, 4)
    loss = lambda: float(np.sum(nn.linear_forward(layer, x) * R))
    dx, dW, db = nn.linear_backward(layer, x, R)
    return nn.grad_check(loss, {"x": x, "W": layer.W, "b": layer.b},
                         {"x": dx, "W": dW, "b": db}, tolerance=tol, name="linear")


def check_batchnorm(seed=0, tol=1e-5) -> GradCheckReport:
    rng = RngStream(seed, 11)
    layer = nn.BatchNormLayer.init(4)
    layer.gamma[:] = rng.standard_normal(1, 4)[0]
    layer.beta[:] = rng.standard_normal(1, 4)[0]
    x = rng.standard_normal(8, 4)
    R = rng.standard_normal(8, 4)

    def loss():
        y, _ = nn.batchnorm_forward(layer, x, Mode.TRAIN)
        return float(np.sum(y * R))

    _, cache = nn.batchnorm_forward(layer, x, Mode.TRAIN)
    dx, dg, db = nn.batchnorm_backward(layer, cache, R)
    return nn.grad_check(loss, {"x": x, "gamma": layer.gamma, "beta": layer.beta},
                         {"x": dx, "gamma": dg, "beta": db}, tolerance=tol, name="batchnorm")


def check_layernorm(seed=0, tol=1e-5) -> GradCheckReport:
    rng = RngStream(seed, 12)
    layer = nn.LayerNormLayer.init(5)
    layer.gamma[:] = rng.standard_normal(1, 5)[0]
    layer.beta[:] = rng.standard_normal(1, 5)[0]
    x = rng.standard_normal(6, 5)
    R = rng.standard_normal(6, 5)

    def loss():
        y, _ = nn.layernorm_forward(layer, x)
        return float(np.sum(y * R))

    _, cache = nn.layernorm_forward(layer, x)
    dx, dg, db = nn.layernorm_backward(layer, cache, R)
    return nn.grad_check(loss, {"x": x, "gamma": layer.gamma, "beta": layer.beta},
                         {"x": dx, "gamma": dg, "beta": db}, tolerance=tol, name="layernorm")


def check_relu(seed=0, tol=1e-5) -> GradCheckReport:
    rng = RngStream(seed, 13)
    x = _away_from_zero(rng, 6, 5)
    R = rng.standard_normal(6, 5)
    loss = lambda: float(np.sum(nn.relu_forward(x) * R))
    return nn.grad_check(loss, {"x": x}, {"x": nn.relu_backward(x, R)},
                         tolerance=tol, name="relu")


def check_dropout(seed=0, tol=1e-5) -> GradCheckReport:
    rng = RngStream(seed, 14)
    layer = nn.DropoutLayer(0.3)
    x = rng.standard_normal(6, 5)
    R = rng.standard_normal(6, 5)
    _, mask = nn.dropout_forward(layer, x, Mode.TRAIN, rng)
    loss = lambda: float(np.sum(nn.dropout_forward(layer, x, Mode.TRAIN, mask=mask)[0] * R))
    return nn.grad_check(loss, {"x": x}, {"x": nn.dropout_backward(layer, mask, R)},
                         tolerance=tol, name="dropout")


def check_mse(seed=0, tol=1e-5) -> GradCheckReport:
    rng = RngStream(seed, 15)
    pred = rng.standard_normal(7, 1)
    target = rng.standard_normal(7, 1)
    _, grad = nn.mse_loss(pred, target)
    return nn.grad_check(lambda: nn.mse_loss(pred, target)[0], {"pred": pred}, {"pred": grad},
                         tolerance=tol, name="mse")


def check_ortho(seed=0, tol=1e-5, lambda_reg=0.02) -> GradCheckReport:
    # Narrow network: same layer structure, far fewer weights to perturb.
    net = model.DualPathNet.init({"fz": 3, "fx": 6}, seed, width=8)
    wide = net.astype(EXTENDED)
    return nn.grad_check(lambda: model.ortho_penalty(wide, lambda_reg), wide.weight_matrices(),
                         model.ortho_grad(net, lambda_reg), tolerance=tol, name="ortho")


def _net_problem(seed, batch):
    # Resample until no ReLU input sits within KINK_MARGIN of zero.
    net = model.treatment_net(seed)
    for attempt in range(100):
        rng = RngStream(seed, 100 + attempt)
        Z = rng.standard_normal(batch, 3)
        F = rng.standard_normal(batch, 6)
        target = rng.standard_normal(batch, 1)
        probe = net.copy()
        _, caches = probe.forward_cached((Z, F), Mode.TRAIN, rng)
        pre = np.concatenate([np.abs(caches[b][k]).ravel()
                              for b in ("fz", "fx") for k in ("pre1", "pre2")])
        if pre.min() > KINK_MARGIN:
            masks = {b: caches[b]["mask"] for b in ("fz", "fx")}
            return net, Z, F, target, masks
    raise ConfigError("could not draw a batch away from ReLU kinks")


def check_net(seed=0, tol=1e-5, batch=16) -> GradCheckReport:
    """Full treatment network in train mode with dropout masks frozen."""
    net, Z, F, target, masks = _net_problem(seed, batch)
    pred, caches = net.forward_cached((Z, F), Mode.TRAIN, masks=masks)
    grads = net.backward(caches, nn.mse_loss(pred, target)[1])

    wide = net.astype(EXTENDED)
    Zw, Fw, tw = Z.astype(EXTENDED), F.astype(EXTENDED), target.astype(EXTENDED)
    wmasks = {k: m.astype(EXTENDED) for k, m in masks.items()}

    def loss():
        out, _ = wide.forward_cached((Zw, Fw), Mode.TRAIN, masks=wmasks)
        return nn.mse_loss(out, tw)[0]

    arrays = dict(wide.named_params())
    arrays["input.fz"] = Zw
    arrays["input.fx"] = Fw
    return nn.grad_check(loss, arrays, grads, tolerance=tol, name="net")


CHECKS = {
    "linear": check_linear,
    "batchnorm": check_batchnorm,
    "layernorm": check_layernorm,
    "relu": check_relu,
    "dropout": check_dropout,
    "mse": check_mse,
    "ortho": check_ortho,
    "net": check_net,
}


def parse_scope(scope: str | None) -> list[str]:
    """``all`` (default), ``net``, ``layer:<family>`` or a comma list of families."""
    if not scope or scope == "all":
        return list(FAMILIES)
    out = []
    for part in scope.split(","):
        part = part.strip()
        name = part.split(":", 1)[1] if part.startswith("layer:") else part
        if name not in CHECKS:
            raise ConfigError(f"unknown gradcheck scope {part!r}; families are {FAMILIES}")
        out.append(name)
    return out


def run_checks(scope: str | None = None, tol: float = 1e-5, seed: int = 0):
    return [CHECKS[name](seed=seed, tol=tol) for name in parse_scope(scope)]
