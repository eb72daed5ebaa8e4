import numpy as np
import pytest

from ocdeepiv import simkit
from ocdeepiv.errors import ConfigError
from ocdeepiv.numkit import RngStream


@pytest.mark.parametrize("x, expected", [
    ([0, 0], 0.0), ([1, 0], 0.5), ([0, 1], -0.3), ([1, 1], 0.3), ([2, -1], 1.1),
])
def test_theta_true_examples(x, expected):
    assert simkit.theta_true(np.array([x], dtype=float))[0, 0] == pytest.approx(expected)


def test_code_faithful_shapes_and_balance():
    ds = simkit.gen_code_faithful(10000, 0)
    assert ds.Z.shape == (10000, 3) and ds.X.shape == (10000, 2) and ds.T.shape == (10000, 1)
    assert ds.Y is None
    assert set(np.unique(ds.T)) == {0.0, 1.0}
    assert 0.48 <= ds.T.mean() <= 0.52
    for j in range(3):
        assert abs(np.corrcoef(ds.T[:, 0], ds.Z[:, j])[0, 1]) <= 0.03


def test_code_faithful_draw_order():
    # instruments, covariates and treatment noise come from one stream in that order
    rng = RngStream(5, 0)
    Z, X, e = rng.standard_normal(40, 3), rng.standard_normal(40, 2), rng.standard_normal(40, 1)
    ds = simkit.gen_code_faithful(40, 5)
    assert np.array_equal(ds.Z, Z) and np.array_equal(ds.X, X)
    assert np.array_equal(ds.T, (e > 0).astype(float))
    assert np.array_equal(ds.theta_true, simkit.theta_true(X))


def test_generators_are_deterministic():
    a, b = simkit.gen_code_faithful(100, 9), simkit.gen_code_faithful(100, 9)
    assert all(np.array_equal(getattr(a, k), getattr(b, k)) for k in ("Z", "X", "T"))
    spec = simkit.DGPSpec(kind="confounded", n=100, seed=9)
    c, d = simkit.generate(spec), simkit.generate(spec)
    assert np.array_equal(c.Y, d.Y) and np.array_equal(c.T, d.T)
    assert not np.array_equal(c.Z, simkit.gen_code_faithful(100, 10).Z)


def _confounded_oracle(spec):
    rng = RngStream(spec.seed, 0)
    n = spec.n
    Z, X = rng.standard_normal(n, 3), rng.standard_normal(n, 2)
    u, eps, eta = (rng.standard_normal(n, 1) for _ in range(3))
    x1, x2 = X[:, :1], X[:, 1:]
    latent = (spec.gamma[0] * Z[:, :1] + spec.gamma[1] * Z[:, 1:2] + spec.gamma[2] * Z[:, 2:]
              + spec.beta[0] * x1 + spec.beta[1] * x2 + spec.kappa_t * u + spec.noise_t * eps)
    T = np.where(latent > 0, 1.0, 0.0)
    theta = 0.5 * x1 - 0.3 * x2 + 0.1 * x1 * x2
    Y = theta * T + spec.delta[0] * x1 + spec.delta[1] * x2 + spec.kappa_y * u + spec.noise_y * eta
    return T, Y


def test_confounded_matches_oracle():
    spec = simkit.DGPSpec(kind="confounded", n=500, seed=4)
    ds = simkit.generate(spec)
    T, Y = _confounded_oracle(spec)
    assert np.array_equal(ds.T, T)
    np.testing.assert_allclose(ds.Y, Y, rtol=0, atol=1e-12)


def test_constant_effect_variant():
    spec = simkit.DGPSpec(kind="confounded", n=300, seed=2, constant_effect=1.5)
    ds = simkit.generate(spec)
    assert np.all(ds.theta_true == 1.5)
    het = simkit.generate(simkit.DGPSpec(kind="confounded", n=300, seed=2))
    np.testing.assert_allclose(ds.Y - het.Y, (1.5 - het.theta_true) * ds.T, atol=1e-12)


def test_instrument_relevance(confounded_het):
    for j in range(3):
        assert np.corrcoef(confounded_het.T[:, 0], confounded_het.Z[:, j])[0, 1] >= 0.1


def test_confounder_biases_naive_difference(confounded_het):
    # u raises both T and Y, so treated units look better than the true effect implies
    ds = confounded_het
    resid = ds.Y - ds.theta_true * ds.T
    treated = ds.T[:, 0] == 1
    assert resid[treated].mean() - resid[~treated].mean() > 0.3


def test_zero_gamma_warns():
    with pytest.warns(UserWarning, match="irrelevant"):
        simkit.gen_confounded(simkit.DGPSpec(kind="confounded", n=50, gamma=(0, 0, 0)))


@pytest.mark.parametrize("kwargs", [
    {"kind": "other"}, {"n": 1}, {"noise_t": 0.0}, {"gamma": (1.0, 1.0)},
])
def test_spec_validation(kwargs):
    with pytest.raises(ConfigError):
        simkit.DGPSpec(**kwargs)


def test_dataset_row_mismatch():
    with pytest.raises(ConfigError):
        simkit.Dataset(np.zeros((3, 3)), np.zeros((2, 2)), np.zeros((3, 1)), np.zeros((3, 1)))
