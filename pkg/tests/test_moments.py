import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from mpmath import mp, ncdf

from mc import mc_moments, within_se
from momentbnn.errors import DomainError, ShapeError
from momentbnn.moments import MomentTensor, normal_cdf, product_moments, truncated_stats

finite = st.floats(-1e3, 1e3, allow_nan=False)
nonneg = st.floats(0.0, 1e3, allow_nan=False)


def identity_grid(n_side=40):
    """(mean, var) pairs with unclamped |alpha| <= 3, about 10^3 of them."""
    var = np.geomspace(0.05, 20.0, 25)
    alpha = np.linspace(-2.999, 2.999, n_side)
    v, a = np.meshgrid(var, alpha)
    return (-a * np.sqrt(v)).ravel(), v.ravel()


# --- product_moments -----------------------------------------------------


def test_product_deterministic():
    assert product_moments(2, 0, 3, 0) == (6.0, 0.0)


def test_product_zero_means():
    assert product_moments(0, 1, 0, 1) == (0.0, 1.0)


def test_product_monte_carlo():
    mx, vx, my, vy = 1.3, 0.7, -0.4, 2.1
    mean, var = product_moments(mx, vx, my, vy)
    rng = np.random.default_rng(11)

    def draw(k):
        x = mx + math.sqrt(vx) * rng.standard_normal(k)
        y = my + math.sqrt(vy) * rng.standard_normal(k)
        return x * y

    assert within_se(mean, var, mc_moments(draw, 10**7, mean, chunk=10**6))


def test_product_negative_variance_names_argument():
    with pytest.raises(DomainError, match="var_x"):
        product_moments(0, -1, 0, 1)
    with pytest.raises(DomainError, match="var_y"):
        product_moments(0, 1, 0, -1e-300)


@given(finite, nonneg, finite, nonneg)
def test_product_symmetric(mx, vx, my, vy):
    assert product_moments(mx, vx, my, vy) == product_moments(my, vy, mx, vx)


@given(finite, nonneg, finite, nonneg)
def test_product_variance_nonnegative_and_zero_iff(mx, vx, my, vy):
    _, var = product_moments(mx, vx, my, vy)
    assert var >= 0
    degenerate = (vx == 0 and vy == 0) or (vx == 0 and mx == 0) or (vy == 0 and my == 0)
    if degenerate:
        assert var == 0
    elif var == 0:
        # only reachable through underflow of tiny products
        assert vx * vy + vx * my * my + mx * mx * vy < 1e-300 or min(vx, vy) < 1e-300


# --- truncated_stats -----------------------------------------------------


def test_truncated_standard_normal():
    s = truncated_stats(0.0, 1.0)
    assert s.alpha == 0.0
    assert s.prob_below == 0.5 and s.prob_above == 0.5


def test_truncated_mean_above_monte_carlo():
    s = truncated_stats(0.0, 1.0)
    assert s.mean_above == pytest.approx(math.sqrt(2.0 / math.pi), abs=1e-15)
    rng = np.random.default_rng(12)
    z = rng.standard_normal(10**7)
    pos = z[z >= 0]
    se = pos.std(ddof=1) / math.sqrt(pos.size)
    assert abs(pos.mean() - s.mean_above) <= 3 * se


def test_truncated_clamp():
    s = truncated_stats(10.0, 1.0)
    assert s.alpha == -3.0 and bool(s.clamped)
    mp.dps = 40
    assert abs(s.prob_below - float(ncdf(-3))) < 1e-17
    assert s.prob_below == pytest.approx(0.00135, abs=5e-6)


def test_truncated_rejects_nonpositive_variance():
    with pytest.raises(DomainError):
        truncated_stats(0.0, 0.0)
    with pytest.raises(DomainError):
        truncated_stats(np.zeros(3), np.array([1.0, -1.0, 1.0]))


def test_normal_cdf_accuracy():
    mp.dps = 40
    zs = np.linspace(-8, 8, 161)
    ref = np.array([float(ncdf(z)) for z in zs])
    assert np.max(np.abs(normal_cdf(zs) - ref)) <= 1e-12


def test_total_expectation_identity_grid():
    mean, var = identity_grid()
    assert mean.size >= 1000
    s = truncated_stats(mean, var)
    assert not s.clamped.any()
    recon = s.prob_below * s.mean_below + s.prob_above * s.mean_above
    assert np.max(np.abs(recon - mean)) <= 1e-10


def test_total_variance_identity_grid():
    mean, var = identity_grid()
    s = truncated_stats(mean, var)
    recon = (
        s.prob_below * s.var_below
        + s.prob_above * s.var_above
        + s.prob_below * (s.mean_below - mean) ** 2
        + s.prob_above * (s.mean_above - mean) ** 2
    )
    assert np.max(np.abs(recon - var)) <= 1e-10


@given(st.floats(-50, 50), st.floats(1e-6, 1e4))
def test_truncated_invariants(mean, var):
    s = truncated_stats(mean, var)
    assert s.prob_below + s.prob_above == 1.0
    assert abs(s.alpha) <= 3.0
    assert 0.0 <= s.prob_below <= 1.0
    assert s.var_below >= 0 and s.var_above >= 0


# --- MomentTensor --------------------------------------------------------


def test_moment_tensor_validation():
    t = MomentTensor(np.zeros((2, 3)), np.ones((2, 3)))
    assert t.shape == (2, 3)
    with pytest.raises(ShapeError):
        MomentTensor(np.zeros(3), np.ones(4))
    with pytest.raises(DomainError):
        MomentTensor(np.zeros(2), np.array([1.0, -1.0]))
    with pytest.raises(DomainError):
        MomentTensor(np.array([np.nan]), np.ones(1))
    d = MomentTensor.deterministic([1.0, 2.0])
    assert np.all(d.var == 0)
