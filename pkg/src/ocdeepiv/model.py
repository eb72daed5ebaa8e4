"""OC-DeepIV: dual-path network, orthogonality penalty and staged training.

The network has two identical feature extractors (one per input channel),
each ``fc1 -> batch norm -> relu -> dropout -> fc2 -> layer norm -> relu``,
whose 64-wide outputs are concatenated and mapped to a scalar by a linear
head.  Training minimises plain MSE for the first ``switch_epoch`` epochs and
MSE plus ``lambda_reg * sum ||W^T W - I||_F^2`` over every weight matrix
afterwards.
"""

from __future__ import annotations

import copy
import dataclasses
import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import nnkit as nn
from .errors import ConfigError, DivergenceError, PreconditionError, ShapeError
from .nnkit import Mode
from .numkit import RngStream, as_matrix, frobenius_sq

HIDDEN = 64

# Stream ids used under a training seed.
INIT_STREAM = 0
DROPOUT_STREAM = 1
SHUFFLE_STREAM = 2


def build_features(X, T) -> np.ndarray:
    """Covariate features ``[x1, x2, x1^2, x2^2, x1*t, x2*t]``."""
    X = as_matrix(X)
    T = as_matrix(T)
    if X.shape[1] != 2 or T.shape[1] != 1 or X.shape[0] != T.shape[0]:
        raise ShapeError(f"expected X (N, 2) and T (N, 1), got {X.shape} and {T.shape}")
    return np.hstack([X, X * X, X * T])


def poly_features(X) -> np.ndarray:
    """Treatment-free part of :func:`build_features`: ``[x1, x2, x1^2, x2^2]``."""
    X = as_matrix(X)
    if X.shape[1] != 2:
        raise ShapeError(f"expected X (N, 2), got {X.shape}")
    return np.hstack([X, X * X])


# --------------------------------------------------------------------------
# Network

class FeatureExtractor:
    def __init__(self, fc1, bn1, drop, fc2, ln2):
        self.fc1 = fc1
        self.bn1 = bn1
        self.drop = drop
        self.fc2 = fc2
        self.ln2 = ln2

    @classmethod
    def init(cls, in_dim: int, rng: RngStream, width: int = HIDDEN, p: float = 0.3):
        return cls(
            nn.LinearLayer.init(in_dim, width, rng),
            nn.BatchNormLayer.init(width),
            nn.DropoutLayer(p),
            nn.LinearLayer.init(width, width, rng),
            nn.LayerNormLayer.init(width),
        )

    @property
    def in_dim(self) -> int:
        return self.fc1.W.shape[1]

    def named_params(self) -> dict[str, np.ndarray]:
        out = {}
        for lname in ("fc1", "bn1", "fc2", "ln2"):
            for pname, arr in getattr(self, lname).params().items():
                out[f"{lname}.{pname}"] = arr
        return out

    def linear_layers(self) -> dict[str, nn.LinearLayer]:
        return {"fc1": self.fc1, "fc2": self.fc2}

    def forward(self, x, mode, rng=None, mask=None):
        h1 = nn.linear_forward(self.fc1, x)
        b1, bn_cache = nn.batchnorm_forward(self.bn1, h1, mode)
        r1 = nn.relu_forward(b1)
        d1, mask = nn.dropout_forward(self.drop, r1, mode, rng, mask)
        h2 = nn.linear_forward(self.fc2, d1)
        l2, ln_cache = nn.layernorm_forward(self.ln2, h2)
        out = nn.relu_forward(l2)
        cache = {"x": x, "bn": bn_cache, "pre1": b1, "mask": mask, "d1": d1,
                 "ln": ln_cache, "pre2": l2}
        return out, cache

    def backward(self, cache, dout):
        grads = {}
        d = nn.relu_backward(cache["pre2"], dout)
        d, grads["ln2.gamma"], grads["ln2.beta"] = nn.layernorm_backward(self.ln2, cache["ln"], d)
        d, grads["fc2.W"], grads["fc2.b"] = nn.linear_backward(self.fc2, cache["d1"], d)
        d = nn.dropout_backward(self.drop, cache["mask"], d)
        d = nn.relu_backward(cache["pre1"], d)
        d, grads["bn1.gamma"], grads["bn1.beta"] = nn.batchnorm_backward(self.bn1, cache["bn"], d)
        dx, grads["fc1.W"], grads["fc1.b"] = nn.linear_backward(self.fc1, cache["x"], d)
        return dx, grads


class DualPathNet:
    """Two feature extractors joined by a linear head.

    ``TreatmentNet`` routes instruments (width 3) and covariate features
    (width 6); ``OutcomeNet`` routes the treatment (width 1) and covariate
    features.  Parameter names are ``<branch>.<layer>.<param>``.
    """

    def __init__(self, branches: dict[str, FeatureExtractor], head: nn.LinearLayer):
        self.branches = branches
        self.head = head
        width = sum(b.fc2.W.shape[0] for b in branches.values())
        if head.W.shape[1] != width:
            raise ShapeError(f"head expects {head.W.shape[1]} inputs, branches give {width}")

    @classmethod
    def init(cls, dims: dict[str, int], seed: int, p: float = 0.3, width: int = HIDDEN):
        rng = RngStream(seed, INIT_STREAM)
        branches = {name: FeatureExtractor.init(d, rng, width, p) for name, d in dims.items()}
        head = nn.LinearLayer.init(width * len(dims), 1, rng)
        return cls(branches, head)

    def named_params(self) -> dict[str, np.ndarray]:
        out = {}
        for bname, branch in self.branches.items():
            for k, v in branch.named_params().items():
                out[f"{bname}.{k}"] = v
        out["head.W"] = self.head.W
        out["head.b"] = self.head.b
        return out

    def weight_matrices(self) -> dict[str, np.ndarray]:
        """Every 2-D weight, i.e. what the orthogonality penalty covers."""
        out = {}
        for bname, branch in self.branches.items():
            for lname, layer in branch.linear_layers().items():
                out[f"{bname}.{lname}.W"] = layer.W
        out["head.W"] = self.head.W
        return out

    def running_stats(self) -> dict[str, np.ndarray]:
        return {f"{b}.bn1.{k}": getattr(br.bn1, k)
                for b, br in self.branches.items() for k in ("running_mean", "running_var")}

    def copy(self) -> "DualPathNet":
        return copy.deepcopy(self)

    def astype(self, dtype) -> "DualPathNet":
        """Deep copy with every array (parameters and running stats) cast to ``dtype``."""
        net = self.copy()
        layers = [net.head] + [getattr(b, n) for b in net.branches.values()
                               for n in ("fc1", "bn1", "fc2", "ln2")]
        for layer in layers:
            for f in dataclasses.fields(layer):
                value = getattr(layer, f.name)
                if isinstance(value, np.ndarray):
                    setattr(layer, f.name, value.astype(dtype))
        return net

    def forward_cached(self, inputs, mode, rng=None, masks=None):
        names = list(self.branches)
        if len(inputs) != len(names):
            raise ShapeError(f"expected {len(names)} inputs, got {len(inputs)}")
        masks = masks or {}
        feats, caches = [], {}
        for name, x in zip(names, inputs):
            branch = self.branches[name]
            x = as_matrix(x)
            if x.shape[1] != branch.in_dim:
                raise ShapeError(f"branch {name} expects width {branch.in_dim}, got {x.shape[1]}")
            f, caches[name] = branch.forward(x, mode, rng, masks.get(name))
            feats.append(f)
        combined = np.hstack(feats)
        out = nn.linear_forward(self.head, combined)
        caches["combined"] = combined
        return out, caches

    def backward(self, caches, dout):
        """Gradients of every parameter plus each input, keyed ``input.<branch>``."""
        grads = {}
        dcomb, grads["head.W"], grads["head.b"] = nn.linear_backward(
            self.head, caches["combined"], dout)
        col = 0
        for name, branch in self.branches.items():
            w = branch.fc2.W.shape[0]
            dx, g = branch.backward(caches[name], dcomb[:, col:col + w])
            col += w
            for k, v in g.items():
                grads[f"{name}.{k}"] = v
            grads[f"input.{name}"] = dx
        return grads


def treatment_net(seed: int, x_dim: int = 6, z_dim: int = 3, p: float = 0.3) -> DualPathNet:
    return DualPathNet.init({"fz": z_dim, "fx": x_dim}, seed, p)


def outcome_net(seed: int, x_dim: int = 6, p: float = 0.3) -> DualPathNet:
    return DualPathNet.init({"ft": 1, "fx": x_dim}, seed, p)


def forward(net: DualPathNet, Z, F, mode: Mode = Mode.EVAL, rng: RngStream | None = None):
    out, _ = net.forward_cached((Z, F), mode, rng)
    return out


# --------------------------------------------------------------------------
# Orthogonality penalty

def _weights(net) -> dict[str, np.ndarray]:
    # a network, a name -> matrix mapping, or a plain sequence of matrices
    if hasattr(net, "weight_matrices"):
        return net.weight_matrices()
    if isinstance(net, dict):
        return net
    return {str(i): W for i, W in enumerate(net)}


def ortho_penalty(net, lambda_reg: float) -> float:
    """``lambda_reg * sum ||W^T W - I||_F^2`` over the 2-D weights (biases excluded)."""
    if lambda_reg < 0:
        raise ConfigError(f"lambda_reg must be >= 0, got {lambda_reg}")
    total = 0.0
    for W in _weights(net).values():
        total += frobenius_sq(W.T @ W - np.eye(W.shape[1], dtype=W.dtype))
    return lambda_reg * total


def ortho_grad(net, lambda_reg: float) -> dict[str, np.ndarray]:
    # d/dW ||W^T W - I||^2 = 4 W (W^T W - I)
    return {name: 4.0 * lambda_reg * (W @ (W.T @ W - np.eye(W.shape[1])))
            for name, W in _weights(net).items()}


# --------------------------------------------------------------------------
# Training

@dataclass
class TrainConfig:
    epochs: int = 100
    switch_epoch: int = 50
    lr: float = 1e-3
    weight_decay: float = 5e-4
    lambda_reg: float = 0.02
    dropout_p: float = 0.3
    seed: int = 0
    lr_decay: float = 1.0
    lambda_ramp: int = 0     # epochs to ramp lambda linearly after the switch; 0 = abrupt
    batch_size: int = 0      # 0 = full batch

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.epochs < 0:
            raise ConfigError(f"epochs must be >= 0, got {self.epochs}")
        if not 0 <= self.switch_epoch <= self.epochs:
            raise ConfigError(f"switch_epoch must lie in [0, epochs], got {self.switch_epoch}")
        if self.lambda_reg < 0:
            raise ConfigError(f"lambda_reg must be >= 0, got {self.lambda_reg}")
        if self.lr <= 0 or self.lr_decay <= 0:
            raise ConfigError("lr and lr_decay must be positive")
        if self.weight_decay < 0:
            raise ConfigError(f"weight_decay must be >= 0, got {self.weight_decay}")
        if not 0 <= self.dropout_p < 1:
            raise ConfigError(f"dropout_p must lie in [0, 1), got {self.dropout_p}")
        if self.lambda_ramp < 0 or self.batch_size < 0:
            raise ConfigError("lambda_ramp and batch_size must be >= 0")

    def lambda_at(self, epoch: int) -> float:
        """Penalty weight in force during 1-based ``epoch``."""
        if epoch <= self.switch_epoch:
            return 0.0
        if self.lambda_ramp:
            return self.lambda_reg * min(1.0, (epoch - self.switch_epoch) / self.lambda_ramp)
        return self.lambda_reg


@dataclass
class LossRecord:
    epoch: int
    total: float
    mse: float
    ortho: float


def _train_step(net, inputs, target, lam, adam, rng):
    pred, caches = net.forward_cached(inputs, Mode.TRAIN, rng)
    mse, dpred = nn.mse_loss(pred, target)
    mse = float(mse)
    grads = net.backward(caches, dpred)
    ortho = 0.0
    if lam > 0.0:
        ortho = float(ortho_penalty(net, lam))
        for k, g in ortho_grad(net, lam).items():
            grads[k] = grads[k] + g
    params = net.named_params()
    return mse, ortho, params, grads


def staged_train(net: DualPathNet, Z, F, target, cfg: TrainConfig):
    """Train ``net`` in place; return ``(net, [LossRecord per epoch])``.

    One Adam step on the full data per epoch unless ``cfg.batch_size`` is set.
    Each record holds the train-mode losses evaluated just before the step.
    """
    Z, F, target = as_matrix(Z), as_matrix(F), as_matrix(target)
    n = Z.shape[0]
    if F.shape[0] != n or target.shape[0] != n:
        raise ShapeError(f"row counts differ: {Z.shape[0]}, {F.shape[0]}, {target.shape[0]}")
    for branch in net.branches.values():
        branch.drop.p = cfg.dropout_p
    adam = nn.AdamState(lr=cfg.lr, weight_decay=cfg.weight_decay)
    rng = RngStream(cfg.seed, DROPOUT_STREAM)
    shuffle = RngStream(cfg.seed, SHUFFLE_STREAM)
    records: list[LossRecord] = []

    for epoch in range(1, cfg.epochs + 1):
        adam.lr = cfg.lr * cfg.lr_decay ** (epoch - 1)
        lam = cfg.lambda_at(epoch)
        if cfg.batch_size and cfg.batch_size < n:
            order = shuffle.permutation(n)
            batches = [order[i:i + cfg.batch_size] for i in range(0, n, cfg.batch_size)]
            # a trailing single row would break batch norm
            if len(batches) > 1 and len(batches[-1]) < 2:
                batches[-2] = np.concatenate([batches[-2], batches.pop()])
        else:
            batches = [None]

        mses, orthos = [], []
        for idx in batches:
            inputs = (Z, F) if idx is None else (Z[idx], F[idx])
            tgt = target if idx is None else target[idx]
            mse, ortho, params, grads = _train_step(net, inputs, tgt, lam, adam, rng)
            if not (math.isfinite(mse) and math.isfinite(ortho)):
                raise DivergenceError(epoch, records)
            nn.adam_step(adam, params, grads)
            mses.append(mse)
            orthos.append(ortho)
        mse = mses[0] if len(mses) == 1 else float(np.mean(mses))
        ortho = orthos[0] if len(orthos) == 1 else float(np.mean(orthos))
        records.append(LossRecord(epoch, mse + ortho, mse, ortho))
    return net, records


# --------------------------------------------------------------------------
# Theta estimation

def predict_theta_code_faithful(net: DualPathNet, Z, F) -> np.ndarray:
    """Eval-mode network output taken directly as the effect estimate."""
    return forward(net, Z, F, Mode.EVAL)


@dataclass
class CodeFaithfulFit:
    net: DualPathNet
    theta_hat: np.ndarray
    losses: list[LossRecord]


def fit_code_faithful(ds, cfg: TrainConfig) -> CodeFaithfulFit:
    """Train a treatment net on ``(Z, build_features(X, T))`` against ``T``."""
    F = build_features(ds.X, ds.T)
    net = treatment_net(cfg.seed, p=cfg.dropout_p)
    net, losses = staged_train(net, ds.Z, F, ds.T, cfg)
    return CodeFaithfulFit(net, predict_theta_code_faithful(net, ds.Z, F), losses)


@dataclass
class TwoStageFit:
    stage1: DualPathNet
    stage2: DualPathNet
    t_hat: np.ndarray
    theta_hat: np.ndarray
    stage1_losses: list[LossRecord] = field(default_factory=list)
    stage2_losses: list[LossRecord] = field(default_factory=list)


def effect_contrast(net: DualPathNet, X) -> np.ndarray:
    """``g(1, x) - g(0, x)`` evaluated in eval mode."""
    X = as_matrix(X)
    n = X.shape[0]
    ones, zeros = np.ones((n, 1)), np.zeros((n, 1))
    g1 = forward(net, ones, build_features(X, ones), Mode.EVAL)
    g0 = forward(net, zeros, build_features(X, zeros), Mode.EVAL)
    return g1 - g0


def fit_two_stage(ds, cfg: TrainConfig, stage2_cfg: TrainConfig | None = None) -> TwoStageFit:
    """Two-stage IV fit.

    Stage 1 learns ``E[T | Z, X]`` from instruments and treatment-free
    covariate features.  Stage 2 regresses ``Y`` on the fitted treatment and
    ``build_features(X, t_hat)``; the effect is the contrast between
    ``t = 1`` and ``t = 0``.
    """
    if ds.Y is None:
        raise PreconditionError("two-stage estimation requires an outcome column Y")
    stage2_cfg = stage2_cfg or replace(cfg, seed=cfg.seed + 1)

    net1 = treatment_net(cfg.seed, x_dim=4, p=cfg.dropout_p)
    net1, losses1 = staged_train(net1, ds.Z, poly_features(ds.X), ds.T, cfg)
    t_hat = forward(net1, ds.Z, poly_features(ds.X), Mode.EVAL)

    net2 = outcome_net(stage2_cfg.seed, p=stage2_cfg.dropout_p)
    net2, losses2 = staged_train(net2, t_hat, build_features(ds.X, t_hat), ds.Y, stage2_cfg)
    theta = effect_contrast(net2, ds.X)
    return TwoStageFit(net1, net2, t_hat, theta, losses1, losses2)


def estimate_theta_two_stage(ds, cfg: TrainConfig) -> np.ndarray:
    return fit_two_stage(ds, cfg).theta_hat


# --------------------------------------------------------------------------
# Smoothing

def moving_average(x, w: int = 15) -> np.ndarray:
    """Uniform moving average, same length as ``x``, zero-padded at the edges."""
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    if w < 1:
        raise ConfigError(f"window must be >= 1, got {w}")
    if w > x.size:
        raise ConfigError(f"window {w} exceeds series length {x.size}")
    return np.convolve(x, np.ones(w) / w, mode="same")
