"""Closed-form layer moments against Monte Carlo sampling.

Each ``check_*`` draws one random configuration, computes the layer's
closed-form output moments and a sampled estimate, and returns an
:class:`OracleResult` with deviations in standard errors.  One output
element per configuration is designated up front for the 3-SE test; the
rest feed a calibration check, since with dozens of elements per
configuration a 3-SE excursion somewhere is expected by chance alone.
The sampled forward passes are written independently of the library.
"""

import math
from dataclasses import dataclass

import numpy as np

from mc import mc_moments
from momentbnn.layers import AvgPool2dLayer, Conv2dLayer, LeakyReluLayer, LinearLayer
from momentbnn.moments import MomentTensor
from momentbnn.variational import ParameterStore

N_SAMPLES = 10**6


@dataclass
class OracleResult:
    z_mean: np.ndarray
    z_var: np.ndarray
    designated: int

    @property
    def z_designated(self):
        return max(self.z_mean[self.designated], self.z_var[self.designated])

    @property
    def z_all(self):
        return np.concatenate([self.z_mean, self.z_var])


def _compare(rng, closed_mean, closed_var, draw, n, chunk=100_000):
    designated = int(rng.integers(closed_mean.size))
    mean, var, se_m, se_v = mc_moments(draw, n, closed_mean, chunk=chunk)
    return OracleResult(
        (np.abs(closed_mean - mean) / se_m).ravel(),
        (np.abs(closed_var - var) / se_v).ravel(),
        designated,
    )


def _bind(layer, rng, lo=0.1, hi=2.0):
    """Attach a store with means and variances drawn from [lo, hi]."""
    store = ParameterStore.for_layers([layer])
    store.mu[:] = rng.uniform(lo, hi, store.size)
    var = rng.uniform(lo, hi, store.size)
    # invert softplus: rho = log(expm1(sigma))
    store.rho[:] = np.log(np.expm1(np.sqrt(var)))
    w, b = layer.params["weight"], layer.params["bias"]
    return (w.mu.copy(), np.sqrt(w.variance)), (b.mu.copy(), np.sqrt(b.variance))


def _gauss(rng, mean, std, k):
    return mean + std * rng.standard_normal((k,) + np.shape(mean))


def check_linear(rng, n=N_SAMPLES):
    layer = LinearLayer(4, 3)
    (wm, ws), (bm, bs) = _bind(layer, rng)
    am, av = rng.uniform(0.1, 2.0, (2, 1, 4))
    out = layer.forward(MomentTensor(am, av))

    def draw(k):
        a = _gauss(rng, am[0], np.sqrt(av[0]), k)
        w = _gauss(rng, wm, ws, k)
        b = _gauss(rng, bm, bs, k)
        return np.einsum("ki,koi->ko", a, w) + b

    return _compare(rng, out.mean[0], out.var[0], draw, n, chunk=50_000)


def _conv_naive(a, w, b, stride, padding):
    """Per-sample cross-correlation: a (k,C,H,W), w (k,O,C,kh,kw), b (k,O)."""
    if padding:
        a = np.pad(a, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    kh, kw = w.shape[-2:]
    ho = (a.shape[2] - kh) // stride + 1
    wo = (a.shape[3] - kw) // stride + 1
    out = np.empty((a.shape[0], w.shape[1], ho, wo))
    for i in range(ho):
        for j in range(wo):
            patch = a[:, :, i * stride:i * stride + kh, j * stride:j * stride + kw]
            out[:, :, i, j] = np.einsum("kchw,kochw->ko", patch, w) + b
    return out


def check_conv2d(rng, n=N_SAMPLES):
    stride = int(rng.integers(1, 3))
    padding = int(rng.integers(0, 2))
    layer = Conv2dLayer(2, 1, 3, stride=stride, padding=padding)
    (wm, ws), (bm, bs) = _bind(layer, rng)
    am, av = rng.uniform(0.1, 2.0, (2, 1, 2, 5, 5))
    out = layer.forward(MomentTensor(am, av))

    def draw(k):
        a = _gauss(rng, am[0], np.sqrt(av[0]), k)
        w = _gauss(rng, wm, ws, k)
        b = _gauss(rng, bm, bs, k)
        return _conv_naive(a, w, b, stride, padding)

    return _compare(rng, out.mean[0], out.var[0], draw, n, chunk=50_000)


def check_avgpool(rng, n=N_SAMPLES):
    ph, pw = (int(v) for v in rng.integers(1, 3, 2))
    layer = AvgPool2dLayer(ph, pw)
    am = rng.uniform(-2.0, 2.0, (1, 2, 4, 4))
    av = rng.uniform(0.1, 2.0, (1, 2, 4, 4))
    out = layer.forward(MomentTensor(am, av))

    def draw(k):
        a = _gauss(rng, am[0], np.sqrt(av[0]), k)
        blocks = a.reshape(k, 2, 4 // ph, ph, 4 // pw, pw)
        return blocks.mean(axis=(3, 5))

    return _compare(rng, out.mean[0], out.var[0], draw, n)


def check_leaky_relu(rng, n=N_SAMPLES):
    """Closed form is exact for Gaussian inputs while |alpha| <= 3."""
    var = rng.uniform(0.1, 2.0)
    mean = -rng.uniform(-2.9, 2.9) * math.sqrt(var)
    slope = rng.uniform(0.0, 0.5)
    out = LeakyReluLayer(slope).forward(MomentTensor(np.array([mean]), np.array([var])))

    def draw(k):
        a = mean + math.sqrt(var) * rng.standard_normal((k, 1))
        return np.where(a >= 0, a, slope * a)

    return _compare(rng, out.mean, out.var, draw, n)


def run_suite(check, n_configs, seed, n=N_SAMPLES):
    rng = np.random.default_rng(seed)
    return [check(rng, n) for _ in range(n_configs)]


def summarize(results, k=3.0):
    """(all designated elements within k SE, fraction of all elements beyond k SE)."""
    designated_ok = all(r.z_designated <= k for r in results)
    z = np.concatenate([r.z_all for r in results])
    return designated_ok, float(np.mean(z > k))


CHECKS = {
    "linear": check_linear,
    "conv2d": check_conv2d,
    "avgpool": check_avgpool,
    "leaky_relu": check_leaky_relu,
}
