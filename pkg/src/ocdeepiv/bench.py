"""Baseline estimators and the estimator comparison harness."""

from __future__ import annotations

import enum
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import model
from .errors import ConfigError, PreconditionError, RankError
from .model import LossRecord, TrainConfig, moving_average
from .numkit import RngStream


class EstimatorKind(enum.Enum):
    NaiveOLS = "NaiveOLS"
    TwoSLS = "TwoSLS"
    LinearDML = "LinearDML"
    DeepIVNoOrtho = "DeepIVNoOrtho"
    OCDeepIV_CodeFaithful = "OCDeepIV_CodeFaithful"
    OCDeepIV_TwoStage = "OCDeepIV_TwoStage"

    @classmethod
    def parse(cls, name: str) -> "EstimatorKind":
        try:
            return cls(name.strip())
        except ValueError:
            raise ConfigError(f"unknown estimator {name!r}; expected one of "
                              f"{[k.value for k in cls]}") from None


NEEDS_Y = {EstimatorKind.NaiveOLS, EstimatorKind.TwoSLS, EstimatorKind.LinearDML,
           EstimatorKind.OCDeepIV_TwoStage}


@dataclass
class EstimateResult:
    kind: EstimatorKind
    theta_hat: np.ndarray
    theta_hat_smoothed: np.ndarray
    mse_raw: float
    mse_smoothed: float
    window: int
    loss_history: list[LossRecord] = field(default_factory=list)
    wall_time: float = 0.0


def _result(kind, ds, theta_hat, window, history=(), wall_time=0.0):
    theta_hat = np.asarray(theta_hat, dtype=np.float64).reshape(-1, 1)
    smooth = moving_average(theta_hat[:, 0], window).reshape(-1, 1)
    truth = ds.theta_true
    return EstimateResult(
        kind, theta_hat, smooth,
        float(np.mean((theta_hat - truth) ** 2)),
        float(np.mean((smooth - truth) ** 2)),
        window, list(history), wall_time,
    )


def _require_y(ds):
    if ds.Y is None:
        raise PreconditionError("requires Y")


# --------------------------------------------------------------------------
# Closed-form estimators

def least_squares(design: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Solve the normal equations, refusing rank-deficient designs."""
    gram = design.T @ design
    if np.linalg.matrix_rank(gram) < design.shape[1]:
        raise RankError(f"design matrix of shape {design.shape} is rank deficient")
    return np.linalg.solve(gram, design.T @ y)


def effect_basis(X: np.ndarray) -> np.ndarray:
    """``[1, x1, x2, x1*x2]``: the terms the linear effect estimates use."""
    x1, x2 = X[:, :1], X[:, 1:2]
    return np.hstack([np.ones_like(x1), x1, x2, x1 * x2])


def _effect_design(X, t):
    # [1, t, x1, x2, x1 t, x2 t, x1 x2 t]
    B = effect_basis(X)
    return np.hstack([np.ones_like(t), t, X, B[:, 1:] * t])


def _theta_from_coefs(X, coefs):
    # coefs ordered as in _effect_design
    return effect_basis(X) @ coefs[[1, 4, 5, 6]]


def fit_naive_ols(ds, window: int = 15) -> EstimateResult:
    _require_y(ds)
    start = time.perf_counter()
    coefs = least_squares(_effect_design(ds.X, ds.T), ds.Y)
    return _result(EstimatorKind.NaiveOLS, ds, _theta_from_coefs(ds.X, coefs), window,
                   wall_time=time.perf_counter() - start)


def fit_2sls(ds, window: int = 15) -> EstimateResult:
    _require_y(ds)
    start = time.perf_counter()
    first = np.hstack([np.ones((ds.n, 1)), ds.Z, ds.X])
    t_hat = first @ least_squares(first, ds.T)
    coefs = least_squares(_effect_design(ds.X, t_hat), ds.Y)
    return _result(EstimatorKind.TwoSLS, ds, _theta_from_coefs(ds.X, coefs), window,
                   wall_time=time.perf_counter() - start)


def fit_linear_dml(ds, window: int = 15, fold_seed: int = 0, n_folds: int = 2) -> EstimateResult:
    """Cross-fitted partialling-out with linear nuisance models.

    Y and T are residualised on ``[1, X, X^2]`` out of fold; the Y residual is
    then regressed on the T residual times ``[1, x1, x2, x1*x2]``.  Z is not used.
    """
    _require_y(ds)
    if ds.n // n_folds < 20:
        raise ConfigError(f"each fold needs at least 20 rows, got {ds.n // n_folds}")
    start = time.perf_counter()
    nuisance = np.hstack([np.ones((ds.n, 1)), ds.X, ds.X ** 2])
    folds = np.array_split(RngStream(fold_seed, 0).permutation(ds.n), n_folds)
    y_res = np.empty_like(ds.Y)
    t_res = np.empty_like(ds.T)
    for k, test in enumerate(folds):
        train = np.concatenate([f for j, f in enumerate(folds) if j != k])
        for target, res in ((ds.Y, y_res), (ds.T, t_res)):
            res[test] = target[test] - nuisance[test] @ least_squares(nuisance[train], target[train])
    B = effect_basis(ds.X)
    coefs = least_squares(B * t_res, y_res)
    return _result(EstimatorKind.LinearDML, ds, B @ coefs, window,
                   wall_time=time.perf_counter() - start)


# --------------------------------------------------------------------------
# Neural estimators

def fit_oc_code_faithful(ds, cfg: TrainConfig, window: int = 15) -> EstimateResult:
    start = time.perf_counter()
    fit = model.fit_code_faithful(ds, cfg)
    return _result(EstimatorKind.OCDeepIV_CodeFaithful, ds, fit.theta_hat, window,
                   fit.losses, time.perf_counter() - start)


def fit_oc_two_stage(ds, cfg: TrainConfig, window: int = 15,
                     kind=EstimatorKind.OCDeepIV_TwoStage) -> EstimateResult:
    _require_y(ds)
    start = time.perf_counter()
    fit = model.fit_two_stage(ds, cfg)
    return _result(kind, ds, fit.theta_hat, window,
                   fit.stage2_losses, time.perf_counter() - start)


def fit_ablation_no_ortho(ds, cfg: TrainConfig, window: int = 15,
                          mode: str = "two_stage") -> EstimateResult:
    """The chosen OC-DeepIV pipeline with the orthogonality penalty switched off."""
    cfg0 = replace(cfg, lambda_reg=0.0)
    if mode == "two_stage":
        return fit_oc_two_stage(ds, cfg0, window, EstimatorKind.DeepIVNoOrtho)
    if mode == "code_faithful":
        res = fit_oc_code_faithful(ds, cfg0, window)
        res.kind = EstimatorKind.DeepIVNoOrtho
        return res
    raise ConfigError(f"unknown ablation mode {mode!r}")


def run_estimator(kind: EstimatorKind, ds, cfg: TrainConfig, window: int = 15,
                  ablation_mode: str = "two_stage") -> EstimateResult:
    if kind in NEEDS_Y or (kind is EstimatorKind.DeepIVNoOrtho and ablation_mode == "two_stage"):
        _require_y(ds)
    if kind is EstimatorKind.NaiveOLS:
        return fit_naive_ols(ds, window)
    if kind is EstimatorKind.TwoSLS:
        return fit_2sls(ds, window)
    if kind is EstimatorKind.LinearDML:
        return fit_linear_dml(ds, window, fold_seed=cfg.seed)
    if kind is EstimatorKind.DeepIVNoOrtho:
        return fit_ablation_no_ortho(ds, cfg, window, ablation_mode)
    if kind is EstimatorKind.OCDeepIV_CodeFaithful:
        return fit_oc_code_faithful(ds, cfg, window)
    return fit_oc_two_stage(ds, cfg, window)


# --------------------------------------------------------------------------
# Comparison

@dataclass
class ComparisonRow:
    kind: EstimatorKind
    mse_raw: float = float("nan")
    mse_smoothed: float = float("nan")
    mse_raw_std: float = 0.0
    mse_smoothed_std: float = 0.0
    replications: int = 0
    wall_time: float = 0.0
    error: str | None = None

    @property
    def failed(self) -> bool:
        return self.error is not None


def max_threads() -> int:
    try:
        return max(1, int(os.environ.get("OCDEEPIV_THREADS", "1")))
    except ValueError:
        raise ConfigError("OCDEEPIV_THREADS must be an integer") from None


def compare(datasets, kinds, cfg: TrainConfig, window: int = 15,
            ablation_mode: str = "two_stage") -> list[ComparisonRow]:
    """Run every estimator on every dataset (one per replication).

    Replication ``r`` trains neural estimators with seed ``cfg.seed + r``.
    Rows come back in the order of ``kinds``; an estimator that raises is
    recorded as failed and the rest still run.
    """
    if not isinstance(datasets, (list, tuple)):
        datasets = [datasets]
    kinds = [EstimatorKind.parse(k) if isinstance(k, str) else k for k in kinds]

    def run_kind(kind):
        results = []
        try:
            for r, ds in enumerate(datasets):
                rcfg = replace(cfg, seed=cfg.seed + r)
                results.append(run_estimator(kind, ds, rcfg, window, ablation_mode))
        except (PreconditionError, RankError, ConfigError, ArithmeticError,
                RuntimeError) as exc:
            return ComparisonRow(kind, error=f"failed: {exc}")
        raw = np.array([res.mse_raw for res in results])
        smooth = np.array([res.mse_smoothed for res in results])
        return ComparisonRow(
            kind, float(raw.mean()), float(smooth.mean()),
            float(raw.std(ddof=1)) if raw.size > 1 else 0.0,
            float(smooth.std(ddof=1)) if smooth.size > 1 else 0.0,
            len(results), float(sum(res.wall_time for res in results)),
        )

    with ThreadPoolExecutor(max_workers=min(max_threads(), len(kinds) or 1)) as pool:
        return list(pool.map(run_kind, kinds))

