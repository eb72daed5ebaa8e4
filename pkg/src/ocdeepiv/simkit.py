"""Synthetic data-generating processes.

Two generators are provided:

* ``code_faithful`` -- instruments and covariates are standard normal and the
  treatment is an independent fair coin.  No outcome is produced.
* ``confounded`` -- the treatment is a threshold of instruments, covariates
  and an unobserved confounder; the same confounder enters the outcome, so
  naive regression of Y on T is biased upward.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .numkit import RngStream, as_matrix

CODE_FAITHFUL = "code_faithful"
CONFOUNDED = "confounded"
DGP_KINDS = (CODE_FAITHFUL, CONFOUNDED)


def theta_true(X) -> np.ndarray:
    """True effect ``0.5 x1 - 0.3 x2 + 0.1 x1 x2``, shape (N, 1)."""
    X = as_matrix(X)
    x1, x2 = X[:, 0], X[:, 1]
    return (0.5 * x1 - 0.3 * x2 + 0.1 * (x1 * x2)).reshape(-1, 1)


@dataclass
class Dataset:
    Z: np.ndarray
    X: np.ndarray
    T: np.ndarray
    theta_true: np.ndarray
    Y: np.ndarray | None = None
    seed: int | None = None
    kind: str = CODE_FAITHFUL

    def __post_init__(self):
        n = self.Z.shape[0]
        cols = [self.X, self.T, self.theta_true] + ([self.Y] if self.Y is not None else [])
        if any(c.shape[0] != n for c in cols):
            raise ConfigError("dataset columns have different row counts")

    @property
    def n(self) -> int:
        return self.Z.shape[0]


@dataclass
class DGPSpec:
    kind: str = CODE_FAITHFUL
    n: int = 10000
    seed: int = 0
    gamma: tuple = (0.8, 0.8, 0.8)
    beta: tuple = (0.3, 0.3)
    kappa_t: float = 0.7
    kappa_y: float = 0.7
    delta: tuple = (0.5, -0.5)
    noise_t: float = 1.0
    noise_y: float = 1.0
    constant_effect: float | None = None   # None = heterogeneous truth

    def __post_init__(self):
        if self.kind not in DGP_KINDS:
            raise ConfigError(f"unknown dgp kind {self.kind!r}; expected one of {DGP_KINDS}")
        if self.n < 2:
            raise ConfigError(f"n must be >= 2, got {self.n}")
        if self.noise_t <= 0 or self.noise_y <= 0:
            raise ConfigError("noise scales must be positive")
        if len(self.gamma) != 3 or len(self.beta) != 2 or len(self.delta) != 2:
            raise ConfigError("gamma needs 3 entries, beta and delta need 2")


def gen_code_faithful(n: int = 10000, seed: int = 0) -> Dataset:
    rng = RngStream(seed, 0)
    Z = rng.standard_normal(n, 3)
    X = rng.standard_normal(n, 2)
    T = (rng.standard_normal(n, 1) > 0).astype(np.float64)
    return Dataset(Z, X, T, theta_true(X), None, seed, CODE_FAITHFUL)


def gen_confounded(spec: DGPSpec) -> Dataset:
    gamma = np.asarray(spec.gamma, dtype=np.float64)
    if not np.any(gamma):
        warnings.warn("all instrument strengths are zero; instruments are irrelevant",
                      stacklevel=2)
    rng = RngStream(spec.seed, 0)
    n = spec.n
    Z = rng.standard_normal(n, 3)
    X = rng.standard_normal(n, 2)
    u = rng.standard_normal(n, 1)
    eps = spec.noise_t * rng.standard_normal(n, 1)
    eta = spec.noise_y * rng.standard_normal(n, 1)

    latent = Z @ gamma[:, None] + X @ np.asarray(spec.beta)[:, None] + spec.kappa_t * u + eps
    T = (latent > 0).astype(np.float64)
    if spec.constant_effect is None:
        theta = theta_true(X)
    else:
        theta = np.full((n, 1), float(spec.constant_effect))
    Y = theta * T + X @ np.asarray(spec.delta)[:, None] + spec.kappa_y * u + eta
    return Dataset(Z, X, T, theta, Y, spec.seed, CONFOUNDED)


def generate(spec: DGPSpec) -> Dataset:
    if spec.kind == CODE_FAITHFUL:
        return gen_code_faithful(spec.n, spec.seed)
    return gen_confounded(spec)
