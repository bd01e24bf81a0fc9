"""Negative ELBO: Gaussian reconstruction loss plus a decaying KL penalty."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import DomainError, ShapeError

LOG_2PI = math.log(2.0 * math.pi)

#: Added to propagated output variances before they are used as predictive variances.
VARIANCE_FLOOR = 1e-6


@dataclass
class PredictiveDistribution:
    """Per-input predictive mean and variance.

    ``var_aleatoric``/``var_epistemic`` are only filled for split-head
    networks; an embedded network reports only the total.
    """

    mean: np.ndarray
    var_total: np.ndarray
    var_aleatoric: Optional[np.ndarray] = None
    var_epistemic: Optional[np.ndarray] = None


@dataclass(frozen=True)
class LossBreakdown:
    nll: float
    kl: float
    alpha: float
    total: float

    def as_dict(self):
        return {"alpha": self.alpha, "kl": self.kl, "nll": self.nll, "total": self.total}


def gaussian_nll(mean, var, targets):
    """Summed negative log density of ``targets`` under N(mean, var)."""
    mean, var, targets = (np.asarray(a, dtype=np.float64) for a in (mean, var, targets))
    if mean.shape != targets.shape or var.shape != targets.shape:
        raise ShapeError(
            f"prediction shapes {mean.shape}/{var.shape} do not match targets {targets.shape}"
        )
    if np.any(var <= 0):
        raise DomainError("predictive variance must be positive")
    resid = targets - mean
    return 0.5 * float(np.sum(LOG_2PI + np.log(var) + resid * resid / var))


def expected_nll(pred: PredictiveDistribution, targets) -> float:
    """Reconstruction loss of a predictive distribution, summed over the batch."""
    return gaussian_nll(pred.mean, pred.var_total, targets)


def kl_decay_weight(epoch, total_epochs):
    """Per-epoch KL weight 2^(M-i) / (2^M - 1); weights over i = 1..M sum to 1.

    For large i the weight underflows to 0.0, which is the correctly rounded
    double result.
    """
    if total_epochs < 1:
        raise DomainError(f"total_epochs must be >= 1, got {total_epochs}")
    if not 1 <= epoch <= total_epochs:
        raise DomainError(f"epoch {epoch} outside 1..{total_epochs}")
    return math.ldexp(1.0, -epoch) / (1.0 - math.ldexp(1.0, -total_epochs))


def negative_elbo(pred, targets, kl, alpha) -> LossBreakdown:
    if not 0.0 <= alpha <= 1.0:
        raise DomainError(f"alpha must lie in [0, 1], got {alpha}")
    nll = expected_nll(pred, targets)
    return LossBreakdown(nll=nll, kl=float(kl), alpha=float(alpha), total=alpha * kl + nll)


# --- taped rules ---------------------------------------------------------


def gaussian_nll_rule(mean, var, targets):
    resid = targets - mean
    inv = 1.0 / var
    out = np.asarray(0.5 * np.sum(LOG_2PI + np.log(var) + resid * resid * inv))

    def pullback(g):
        return -g * resid * inv, 0.5 * g * (inv - resid * resid * inv * inv), None

    return out, pullback
