"""Orthogonality-constrained deep instrumental-variable estimation.

Modules:

* ``numkit``    matrix helpers and seeded random streams
* ``nnkit``     layers with hand-written backward passes, Adam, gradient checks
* ``model``     the dual-path network, orthogonality penalty, staged training
* ``simkit``    synthetic data-generating processes
* ``bench``     baseline estimators and comparisons
* ``cli``       command-line front end (CSV, manifest and figure output)
"""

from .model import (
    DualPathNet,
    LossRecord,
    TrainConfig,
    build_features,
    estimate_theta_two_stage,
    fit_code_faithful,
    fit_two_stage,
    moving_average,
    ortho_grad,
    ortho_penalty,
    staged_train,
)
from .simkit import DGPSpec, Dataset, gen_code_faithful, gen_confounded, theta_true

__version__ = "0.1.0"
