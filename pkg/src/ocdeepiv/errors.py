"""Exception types shared across the package.

Each maps onto one CLI exit code (see ``ocdeepiv.cli``).
"""


class ShapeError(ValueError):
    """Operand shapes are incompatible."""


class ConfigError(ValueError):
    """A configuration value is missing, unknown or out of range."""


class PreconditionError(ValueError):
    """Input data does not satisfy what an operation needs (e.g. missing Y)."""


class RankError(ValueError):
    """A least-squares design matrix is rank deficient."""


class TrainingError(RuntimeError):
    """Training cannot proceed (e.g. batch norm on a single row)."""


class DivergenceError(TrainingError):
    """Loss became non-finite. ``records`` holds the losses logged so far."""

    def __init__(self, epoch, records=None):
        super().__init__(f"loss became non-finite at epoch {epoch}")
        self.epoch = epoch
        self.records = list(records or [])


class GradCheckError(RuntimeError):
    """Analytic and numeric gradients disagree, or non-finite values appeared."""
