"""Dense matrix helpers and seeded random streams.

Matrices are plain ``numpy`` float64 arrays.  Random draws go through
:class:`RngStream`, a Philox (counter-based) generator keyed by
``(seed, stream_id)`` so independent consumers never share state.
"""

from __future__ import annotations

import numpy as np

from .errors import ConfigError, ShapeError


def as_matrix(a) -> np.ndarray:
    """Return ``a`` as a 2-D float array (vectors become one column).

    Floating arrays keep their dtype; anything else becomes float64.
    """
    m = np.asarray(a)
    if not np.issubdtype(m.dtype, np.floating):
        m = m.astype(np.float64)
    if m.ndim == 1:
        m = m.reshape(-1, 1)
    if m.ndim != 2:
        raise ShapeError(f"expected a 2-D matrix, got shape {m.shape}")
    return m


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"cannot multiply {a.shape} by {b.shape}")
    return a @ b


def frobenius_sq(a: np.ndarray) -> float:
    """Sum of squared entries (a numpy scalar of the input's float dtype)."""
    a = as_matrix(a)
    return np.sum(a * a)


class RngStream:
    """Reproducible random stream identified by ``(seed, stream_id)``.

    Two streams with the same pair produce bit-identical draws on any
    platform; different ``stream_id`` values are independent.
    """

    def __init__(self, seed: int, stream_id: int = 0):
        self.seed = int(seed)
        self.stream_id = int(stream_id)
        self.reset()

    def reset(self) -> None:
        ss = np.random.SeedSequence(self.seed, spawn_key=(self.stream_id,))
        self._gen = np.random.Generator(np.random.Philox(ss))

    def standard_normal(self, rows: int, cols: int) -> np.ndarray:
        if rows < 1 or cols < 1:
            raise ConfigError(f"rows and cols must be >= 1, got {rows}x{cols}")
        return self._gen.standard_normal((rows, cols))

    def uniform(self, low: float, high: float, shape) -> np.ndarray:
        return self._gen.uniform(low, high, shape)

    def bernoulli_mask(self, rows: int, cols: int, keep_prob: float) -> np.ndarray:
        if not 0.0 < keep_prob <= 1.0:
            raise ConfigError(f"keep_prob must lie in (0, 1], got {keep_prob}")
        if keep_prob == 1.0:
            return np.ones((rows, cols))
        return (self._gen.random((rows, cols)) < keep_prob).astype(np.float64)

    def integers(self, high: int, size=None):
        return self._gen.integers(0, high, size=size)

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)


def sample_standard_normal(rng: RngStream, rows: int, cols: int) -> np.ndarray:
    return rng.standard_normal(rows, cols)


def sample_bernoulli_mask(rng: RngStream, rows: int, cols: int, keep_prob: float) -> np.ndarray:
    return rng.bernoulli_mask(rows, cols, keep_prob)
