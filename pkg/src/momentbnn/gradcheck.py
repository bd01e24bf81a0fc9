"""Compare tape gradients of the negative ELBO with central finite differences."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .layers import LeakyReluLayer
from .moments import ALPHA_CLAMP
from .network import Architecture, _as_input, build_network
from .objective import gaussian_nll
from .variational import SpikeSlabPrior, log_posterior, log_prior

#: Pre-activations whose |alpha| falls in this band are too close to the clamp.
CLAMP_BAND = (ALPHA_CLAMP - 0.01, ALPHA_CLAMP + 0.01)


@dataclass
class GradCheckReport:
    max_rel_error: float
    failing: list = field(default_factory=list)
    tolerance: float = 1e-4
    n_checked: int = 0

    @property
    def passed(self):
        return not self.failing

    def __str__(self):
        status = "PASS" if self.passed else "FAIL"
        s = (
            f"{status}: max relative error {self.max_rel_error:.3e} over "
            f"{self.n_checked} coordinates (tolerance {self.tolerance:g})"
        )
        if self.failing:
            s += f"; failing indices {self.failing[:20]}"
        return s


def reference_loss(network, x, y, alpha, eps, prior):
    """Negative ELBO via the plain (untaped) forward path."""
    pred = network.predict(x)
    nll = gaussian_nll(pred.mean, pred.var_total, y)
    store = network.store
    w = store.mu + store.sigma * eps
    kl = np.mean(log_posterior(store, w) - log_prior(prior, w))
    return alpha * kl + nll


def _alphas_near_clamp(network, x):
    h = _as_input(x)
    for layer in network.layers:
        if isinstance(layer, LeakyReluLayer):
            with np.errstate(divide="ignore", invalid="ignore"):
                a = np.abs(h.mean / np.sqrt(h.var))
            if np.any((a >= CLAMP_BAND[0]) & (a <= CLAMP_BAND[1])):
                return True
        h = layer.forward(h)
    return False


def finite_difference_gradient(network, loss, step=1e-5):
    theta = network.store.as_vector()
    fd = np.empty_like(theta)
    for j in range(theta.size):
        orig = theta[j]
        theta[j] = orig + step
        network.store.set_vector(theta)
        up = loss()
        theta[j] = orig - step
        network.store.set_vector(theta)
        down = loss()
        theta[j] = orig
        fd[j] = (up - down) / (2.0 * step)
    network.store.set_vector(theta)
    return fd


def compare_gradients(analytic, numeric, tolerance, atol=1e-7):
    """Relative error per coordinate with an absolute floor ``atol``."""
    diff = np.abs(analytic - numeric)
    scale = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), atol / tolerance)
    rel = diff / scale
    failing = [int(i) for i in np.flatnonzero(rel > tolerance)]
    max_rel = float(rel.max()) if rel.size else 0.0
    return max_rel, failing


def grad_check(
    arch_or_network,
    batch=None,
    tolerance=1e-4,
    *,
    seed=0,
    batch_size=8,
    alpha=0.5,
    prior=None,
    step=1e-5,
    corrupt=False,
):
    """Check every gradient coordinate of the negative ELBO.

    With an :class:`Architecture`, a network is built with spread-out random
    parameters (means ~ N(0, 0.5^2), rho ~ U(-3, -1)) so that both clamped and
    unclamped leaky-ReLU units are exercised.  Batches with a pre-activation
    within 0.01 of the alpha clamp are redrawn.  ``corrupt`` perturbs the
    analytic gradient and exists to test that failures are detected.
    """
    rng = np.random.default_rng(seed)
    prior = prior or SpikeSlabPrior()
    if isinstance(arch_or_network, Architecture):
        network = build_network(arch_or_network)
        store = network.store
        store.mu[:] = rng.normal(0.0, 0.5, store.size)
        store.rho[:] = rng.uniform(-3.0, -1.0, store.size)
        in_dim = arch_or_network.input_dim
    else:
        network = arch_or_network
        in_dim = 1
    if batch is None:
        for _ in range(100):
            x = rng.uniform(-1.0, 1.0, (batch_size, in_dim)).squeeze(-1)
            if not _alphas_near_clamp(network, x):
                break
        y = x.reshape(batch_size, -1)[:, 0] + 1.0 + 0.1 * rng.standard_normal(batch_size)
    else:
        x, y = batch
    eps = rng.standard_normal((1, network.store.size))

    if network.store.size == 0:
        return GradCheckReport(0.0, [], tolerance, 0)

    _, analytic, _ = network.loss_and_grad(x, y, alpha, eps, prior)
    if corrupt:
        analytic = analytic.copy()
        analytic[0] += 1e-2 * (1.0 + abs(analytic[0]))
    numeric = finite_difference_gradient(
        network, lambda: reference_loss(network, x, y, alpha, eps, prior), step
    )
    max_rel, failing = compare_gradients(analytic, numeric, tolerance)
    return GradCheckReport(max_rel, failing, tolerance, analytic.size)
