"""Moment algebra for independent Gaussian quantities.

Everything here works elementwise on float64 arrays (or Python floats) and
assumes independence between elements; no covariance is tracked.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

from .errors import DomainError, ShapeError

#: Standardized truncation points are clamped to this magnitude.
ALPHA_CLAMP = 3.0

_INV_SQRT_2PI = 1.0 / np.sqrt(2.0 * np.pi)


@dataclass(frozen=True)
class MomentTensor:
    """Per-element mean and variance of a layer activation.

    The leading axis is the batch axis.
    """

    mean: np.ndarray
    var: np.ndarray

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=np.float64)
        var = np.asarray(self.var, dtype=np.float64)
        if mean.shape != var.shape:
            raise ShapeError(f"mean shape {mean.shape} != variance shape {var.shape}")
        if not (np.all(np.isfinite(mean)) and np.all(np.isfinite(var))):
            raise DomainError("moment tensor contains non-finite values")
        if np.any(var < 0):
            raise DomainError("moment tensor contains negative variances")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "var", var)

    @property
    def shape(self):
        return self.mean.shape

    @classmethod
    def deterministic(cls, values):
        values = np.asarray(values, dtype=np.float64)
        return cls(values, np.zeros_like(values))


@dataclass(frozen=True)
class TruncatedNormalStats:
    """Branch probabilities and conditional moments of N(mean, var) split at 0.

    ``*_below`` refers to the event a < 0, ``*_above`` to a >= 0.  ``alpha`` is
    the clamped standardized truncation point ``-mean / sqrt(var)``.
    """

    alpha: np.ndarray
    prob_below: np.ndarray
    prob_above: np.ndarray
    mean_below: np.ndarray
    mean_above: np.ndarray
    var_below: np.ndarray
    var_above: np.ndarray
    clamped: np.ndarray


def normal_pdf(z):
    """Standard normal density."""
    z = np.asarray(z, dtype=np.float64)
    return _INV_SQRT_2PI * np.exp(-0.5 * z * z)


def normal_cdf(z):
    """Standard normal CDF, P(Z < z).

    Backed by ``scipy.special.ndtr``, which is accurate to double precision in
    both tails (absolute error well below 1e-15).
    """
    return ndtr(np.asarray(z, dtype=np.float64))


def product_moments(mean_x, var_x, mean_y, var_y):
    """Mean and variance of X*Y for independent X and Y."""
    mean_x, var_x, mean_y, var_y = (
        np.asarray(a, dtype=np.float64) for a in (mean_x, var_x, mean_y, var_y)
    )
    if np.any(var_x < 0):
        raise DomainError("var_x must be non-negative")
    if np.any(var_y < 0):
        raise DomainError("var_y must be non-negative")
    mean = mean_x * mean_y
    # grouped so that swapping (x, y) is bit-exact
    var = var_x * var_y + (var_x * mean_y**2 + mean_x**2 * var_y)
    if mean.ndim == 0:
        return float(mean), float(var)
    return mean, var


def truncated_stats(mean, var) -> TruncatedNormalStats:
    """Split N(mean, var) at zero and return the conditional statistics.

    alpha is clamped to [-3, 3] before any downstream quantity is evaluated,
    so for |alpha| > 3 the conditional moments are an approximation.
    """
    mean = np.asarray(mean, dtype=np.float64)
    var = np.asarray(var, dtype=np.float64)
    if np.any(var <= 0):
        raise DomainError("truncated_stats requires var > 0")
    std = np.sqrt(var)
    raw = -mean / std
    alpha = np.clip(raw, -ALPHA_CLAMP, ALPHA_CLAMP)
    pdf = normal_pdf(alpha)
    p_below = normal_cdf(alpha)
    p_above = 1.0 - p_below
    lam_below = pdf / p_below
    lam_above = pdf / p_above
    return TruncatedNormalStats(
        alpha=alpha,
        prob_below=p_below,
        prob_above=p_above,
        mean_below=mean - std * lam_below,
        mean_above=mean + std * lam_above,
        var_below=var * (1.0 - alpha * lam_below - lam_below**2),
        var_above=var * (1.0 + alpha * lam_above - lam_above**2),
        clamped=np.abs(raw) > ALPHA_CLAMP,
    )
