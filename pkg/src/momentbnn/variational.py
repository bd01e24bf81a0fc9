"""Factorized Gaussian posterior, priors and the Monte Carlo KL estimate."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .autograd import reparameterize
from .errors import ConfigError, DomainError, ShapeError

LOG_2PI = math.log(2.0 * math.pi)

#: Default initialization of posterior means and spreads.
INIT_MU_STD = 0.05
INIT_RHO = -5.0


def softplus(rho):
    return np.logaddexp(0.0, rho)


class GaussianParameter:
    """An array of independent N(mu, softplus(rho)^2) parameters.

    ``mu`` and ``rho`` are usually views into a :class:`ParameterStore`'s
    flat buffers, so in-place updates of the store are seen here.
    """

    def __init__(self, mu, rho):
        self.mu = mu
        self.rho = rho

    @property
    def sigma(self):
        return softplus(self.rho)

    @property
    def variance(self):
        s = self.sigma
        return s * s

    @property
    def shape(self):
        return self.mu.shape


@dataclass(frozen=True)
class SpikeSlabPrior:
    """mix * N(0, var_slab) + (1 - mix) * N(0, var_spike), shared by all parameters."""

    var_slab: float = 1.0
    var_spike: float = math.exp(-12.0)
    mix: float = 0.5

    def __post_init__(self):
        if self.var_slab <= 0 or self.var_spike <= 0:
            raise ConfigError("prior variances must be positive")
        if not 0.0 < self.mix < 1.0:
            raise ConfigError("prior mixing weight must lie in (0, 1)")


@dataclass(frozen=True)
class NormalPrior:
    """Single Gaussian prior N(mean, var); mostly useful as a reference."""

    mean: float = 0.0
    var: float = 1.0


class ParameterStore:
    """All Gaussian parameters of a network in two flat float64 buffers.

    Entries are laid out in the order the layers declare them.  The flat
    learnable vector interleaves the two buffers: ``theta[2j] = mu_j`` and
    ``theta[2j + 1] = rho_j``.
    """

    def __init__(self, specs):
        self.entries = []
        offset = 0
        for name, shape in specs:
            shape = tuple(int(d) for d in shape)
            size = int(np.prod(shape, dtype=np.int64))
            self.entries.append((name, shape, offset))
            offset += size
        self.size = offset
        self.mu = np.zeros(offset)
        self.rho = np.full(offset, INIT_RHO)

    @classmethod
    def for_layers(cls, layers):
        """Build a store for ``layers`` and bind each layer's parameters to it."""
        specs = []
        for i, layer in enumerate(layers):
            for pname, shape in layer.param_specs():
                specs.append((f"{i}.{pname}", shape))
        store = cls(specs)
        for i, layer in enumerate(layers):
            if layer.param_specs():
                layer.params = {
                    pname: store.parameter(f"{i}.{pname}")
                    for pname, _ in layer.param_specs()
                }
        return store

    def __len__(self):
        return self.size

    def _entry(self, name):
        for entry in self.entries:
            if entry[0] == name:
                return entry
        raise KeyError(name)

    def parameter(self, name):
        _, shape, offset = self._entry(name)
        size = int(np.prod(shape, dtype=np.int64))
        sl = slice(offset, offset + size)
        return GaussianParameter(self.mu[sl].reshape(shape), self.rho[sl].reshape(shape))

    def initialize(self, rng, mu_std=INIT_MU_STD, rho=INIT_RHO):
        self.mu[:] = rng.normal(0.0, mu_std, size=self.size)
        self.rho[:] = rho

    @property
    def sigma(self):
        return softplus(self.rho)

    def as_vector(self):
        theta = np.empty(2 * self.size)
        theta[0::2] = self.mu
        theta[1::2] = self.rho
        return theta

    def set_vector(self, theta):
        theta = np.asarray(theta, dtype=np.float64)
        if theta.shape != (2 * self.size,):
            raise ShapeError(f"expected vector of length {2 * self.size}, got {theta.shape}")
        self.mu[:] = theta[0::2]
        self.rho[:] = theta[1::2]


def sample_weights(store, rng, n_samples=None):
    """Draw w = mu + sigma * eps with eps ~ N(0, 1) from ``rng``.

    Returns a vector, or an (n_samples, size) array if ``n_samples`` is given.
    """
    size = (store.size,) if n_samples is None else (n_samples, store.size)
    eps = rng.standard_normal(size)
    return store.mu + store.sigma * eps


def _normal_logpdf(w, mean, var):
    return -0.5 * (LOG_2PI + np.log(var) + (w - mean) ** 2 / var)


def log_posterior(store, w):
    """log q(w | theta) summed over parameters (last axis)."""
    w = np.asarray(w, dtype=np.float64)
    if w.shape[-1] != store.size:
        raise ShapeError(f"weight vector length {w.shape[-1]} != store size {store.size}")
    sigma = store.sigma
    return np.sum(_normal_logpdf(w, store.mu, sigma * sigma), axis=-1)


def _spike_slab_terms(w, prior):
    log_slab = math.log(prior.mix) + _normal_logpdf(w, 0.0, prior.var_slab)
    log_spike = math.log1p(-prior.mix) + _normal_logpdf(w, 0.0, prior.var_spike)
    return log_slab, log_spike


def log_prior(prior, w):
    """log p(w) summed over the last axis, for a spike-slab or normal prior."""
    w = np.asarray(w, dtype=np.float64)
    if isinstance(prior, NormalPrior):
        return np.sum(_normal_logpdf(w, prior.mean, prior.var), axis=-1)
    log_slab, log_spike = _spike_slab_terms(w, prior)
    return np.sum(np.logaddexp(log_slab, log_spike), axis=-1)


def kl_monte_carlo(store, prior, n_samples, rng):
    """(1/N) sum_i [log q(w_i) - log p(w_i)] over N fresh posterior draws."""
    if n_samples < 1:
        raise DomainError("n_samples must be >= 1")
    w = sample_weights(store, rng, n_samples)
    return float(np.mean(log_posterior(store, w) - log_prior(prior, w)))


# --- taped rules ---------------------------------------------------------


def log_posterior_rule(w, mu, sigma):
    """sum over all entries of log N(w | mu, sigma^2); w may carry a sample axis."""
    z = (w - mu) / sigma
    out = np.asarray(np.sum(-0.5 * LOG_2PI - np.log(sigma) - 0.5 * z * z))

    def pullback(g):
        g_w = -g * z / sigma
        g_mu = -g_w
        g_sigma = g * (-1.0 / sigma + z * z / sigma)
        if w.ndim == 2:
            g_mu = g_mu.sum(axis=0)
            g_sigma = g_sigma.sum(axis=0)
        return g_w, g_mu, g_sigma

    return out, pullback


def log_prior_rule(w, prior):
    """sum over all entries of log p(w)."""
    if isinstance(prior, NormalPrior):
        out = np.asarray(np.sum(_normal_logpdf(w, prior.mean, prior.var)))

        def pullback(g):
            return (-g * (w - prior.mean) / prior.var,)

        return out, pullback

    log_slab, log_spike = _spike_slab_terms(w, prior)
    out = np.asarray(np.sum(np.logaddexp(log_slab, log_spike)))
    r_slab = expit(log_slab - log_spike)

    def pullback(g):
        dlog = -w * (r_slab / prior.var_slab + (1.0 - r_slab) / prior.var_spike)
        return (g * dlog,)

    return out, pullback


def kl_estimate_rule(log_q, log_p, n_samples):
    def pullback(g):
        return g / n_samples, -g / n_samples

    return np.asarray((log_q - log_p) / n_samples), pullback


def record_kl(tape, mu, sigma, eps, prior):
    """Record the reparameterized MC-KL estimate for posterior draws mu + sigma * eps."""
    w = tape.apply(reparameterize, mu, sigma, eps)
    log_q = tape.apply(log_posterior_rule, w, mu, sigma)
    log_p = tape.apply(log_prior_rule, w, prior=prior)
    return tape.apply(kl_estimate_rule, log_q, log_p, n_samples=eps.shape[0])
