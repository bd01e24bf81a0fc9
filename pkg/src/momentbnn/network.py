"""Fully connected moment-propagating networks with embedded or split heads."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from enum import Enum

import numpy as np

from . import autograd as ag
from .errors import ConfigError
from .layers import LeakyReluLayer, LinearLayer
from .moments import MomentTensor
from .objective import (
    VARIANCE_FLOOR,
    LossBreakdown,
    PredictiveDistribution,
    gaussian_nll_rule,
)
from .variational import ParameterStore, record_kl, softplus


class HeadMode(str, Enum):
    EMBEDDED = "embedded"
    SPLIT = "split"

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise ConfigError(
                f"unknown head mode {value!r}; expected 'embedded' or 'split'"
            ) from None


@dataclass(frozen=True)
class Architecture:
    """Layer widths, activation slope and output head of an MLP.

    An embedded head has one output unit whose propagated variance is the
    total predictive variance.  A split head adds a second output unit whose
    propagated mean, through a softplus, is the aleatoric variance.
    """

    hidden_sizes: tuple = (4,)
    slope: float = 0.01
    head_mode: HeadMode = HeadMode.EMBEDDED
    input_dim: int = 1
    output_dim: int = 1

    def __post_init__(self):
        object.__setattr__(self, "hidden_sizes", tuple(int(h) for h in self.hidden_sizes))
        object.__setattr__(self, "head_mode", HeadMode.parse(self.head_mode))
        if any(h < 1 for h in self.hidden_sizes):
            raise ConfigError(f"hidden sizes must be positive, got {self.hidden_sizes}")
        if self.input_dim < 1 or self.output_dim != 1:
            raise ConfigError("only positive input_dim and output_dim = 1 are supported")
        if not 0.0 <= self.slope <= 1.0:
            raise ConfigError(f"leaky-ReLU slope must lie in [0, 1], got {self.slope}")

    @property
    def n_outputs(self):
        return 2 if self.head_mode is HeadMode.SPLIT else 1

    def to_dict(self):
        d = asdict(self)
        d["hidden_sizes"] = list(self.hidden_sizes)
        d["head_mode"] = self.head_mode.value
        return d

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


@dataclass
class _Recorded:
    tape: ag.Tape
    mu: ag.Var
    rho: ag.Var
    mean: ag.Var
    var_total: ag.Var
    extras: dict = field(default_factory=dict)


class Network:
    """A sequence of moment layers plus the store holding their parameters."""

    def __init__(self, layers, head_mode=HeadMode.EMBEDDED, architecture=None):
        self.layers = list(layers)
        self.head_mode = HeadMode.parse(head_mode)
        self.architecture = architecture
        self.store = ParameterStore.for_layers(self.layers)

    @property
    def n_learnable(self):
        return 2 * self.store.size

    # plain forward ------------------------------------------------------

    def forward(self, x) -> MomentTensor:
        """Propagate inputs of shape (n,) or (n, d) through every layer."""
        h = _as_input(x)
        for layer in self.layers:
            h = layer.forward(h)
        return h

    def predict(self, x) -> PredictiveDistribution:
        out = self.forward(x)
        if self.head_mode is HeadMode.SPLIT:
            var_e = out.var[:, 0] + VARIANCE_FLOOR
            var_a = softplus(out.mean[:, 1])
            total = var_a + var_e
            # report the epistemic part as total - aleatoric (within an ulp of var_e)
            # so that total - aleatoric - epistemic is exactly zero
            return PredictiveDistribution(out.mean[:, 0], total, var_a, total - var_a)
        return PredictiveDistribution(out.mean[:, 0], out.var[:, 0] + VARIANCE_FLOOR)

    # taped forward ------------------------------------------------------

    def record(self, tape=None):
        """Put the store on a tape and return (tape, mu, rho, sigma, per-layer params)."""
        tape = tape or ag.Tape()
        mu = tape.leaf(self.store.mu.copy())
        rho = tape.leaf(self.store.rho.copy())
        sigma = tape.apply(ag.softplus, rho)
        var = tape.apply(ag.square, sigma)
        params = {}
        for name, shape, offset in self.store.entries:
            params[name] = (
                tape.apply(ag.take, mu, start=offset, shape=shape),
                tape.apply(ag.take, var, start=offset, shape=shape),
            )
        return tape, mu, rho, sigma, params

    def record_predict(self, x, tape=None):
        tape, mu, rho, sigma, params = self.record(tape)
        h = _as_input(x)
        mean, var = h.mean, h.var
        for i, layer in enumerate(self.layers):
            lp = {
                pname: params[f"{i}.{pname}"] for pname, _ in layer.param_specs()
            }
            mean, var = layer.record(tape, mean, var, lp)
        if not self.layers:
            mean, var = tape.leaf(mean), tape.leaf(var)
        m0 = tape.apply(ag.column, mean, index=0)
        v0 = tape.apply(ag.column, var, index=0)
        var_e = tape.apply(ag.add_scalar, v0, c=VARIANCE_FLOOR)
        rec = _Recorded(tape, mu, rho, m0, var_e, {"sigma": sigma})
        if self.head_mode is HeadMode.SPLIT:
            m1 = tape.apply(ag.column, mean, index=1)
            var_a = tape.apply(ag.softplus, m1)
            rec.var_total = tape.apply(ag.add, var_a, var_e)
            rec.extras.update(var_aleatoric=var_a, var_epistemic=var_e)
        return rec

    def loss_and_grad(self, x, y, alpha, eps, prior):
        """Negative ELBO and its gradient w.r.t. the interleaved (mu, rho) vector.

        ``eps`` holds the standard-normal draws for the KL estimate, shape
        (n_samples, store size).
        """
        rec = self.record_predict(x)
        tape = rec.tape
        y = np.asarray(y, dtype=np.float64)
        nll = tape.apply(gaussian_nll_rule, rec.mean, rec.var_total, y)
        kl = record_kl(tape, rec.mu, rec.extras["sigma"], eps, prior)
        total = tape.apply(ag.linear_combination, kl, nll, weights=(alpha, 1.0))
        g_mu, g_rho = tape.grad(total, [rec.mu, rec.rho])
        grad = np.empty(2 * self.store.size)
        grad[0::2] = g_mu
        grad[1::2] = g_rho
        breakdown = LossBreakdown(
            nll=float(nll.value), kl=float(kl.value), alpha=float(alpha),
            total=float(total.value),
        )
        return breakdown, grad, tape


def _as_input(x):
    if isinstance(x, MomentTensor):
        return x
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    return MomentTensor.deterministic(x)


def build_layers(arch: Architecture):
    layers = []
    width = arch.input_dim
    for h in arch.hidden_sizes:
        layers.append(LinearLayer(width, h))
        layers.append(LeakyReluLayer(arch.slope))
        width = h
    layers.append(LinearLayer(width, arch.n_outputs))
    return layers


def build_network(arch: Architecture, rng=None) -> Network:
    """Build the MLP for ``arch``; initialize parameters from ``rng`` if given."""
    net = Network(build_layers(arch), arch.head_mode, architecture=arch)
    if rng is not None:
        net.store.initialize(rng)
    return net


def count_parameters(arch: Architecture) -> int:
    """Number of learnable reals: two (mean and spread) per Gaussian parameter."""
    total = 0
    width = arch.input_dim
    for h in (*arch.hidden_sizes, arch.n_outputs):
        total += width * h + h
        width = h
    return 2 * total


def predict(network: Network, x) -> PredictiveDistribution:
    return network.predict(x)
