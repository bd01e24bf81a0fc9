"""Heteroscedastic toy regression data and seeded random streams."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .errors import ConfigError

# Stream identifiers; a stream is (seed, purpose, index...).
TRAIN, VALIDATION, KL, INIT, EVAL, GENERATE = range(1, 7)


def stream(seed, purpose, *index):
    """Independent counter-based generator for one purpose (and e.g. epoch)."""
    entropy = [int(seed) & 0xFFFFFFFFFFFFFFFF, purpose, *(int(i) for i in index)]
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy)))


def noise_sigma_squared(x):
    """Aleatoric noise variance [0.1 + 0.2 sin(2 pi x - pi/2)]^2."""
    s = 0.1 + 0.2 * np.sin(2.0 * np.pi * np.asarray(x, dtype=np.float64) - np.pi / 2.0)
    return s * s


def true_mean(x):
    return np.asarray(x, dtype=np.float64) + 1.0


@dataclass(frozen=True)
class PolyDataConfig:
    """y = x + 1 + eps(x), eps ~ N(0, noise_sigma_squared(x)), x ~ U[x_low, x_high].

    ``noise_scale`` multiplies the noise draw; it is 1 except in tests.
    """

    x_low: float = -0.5
    x_high: float = 0.5
    noise_scale: float = 1.0

    def __post_init__(self):
        if not self.x_low < self.x_high:
            raise ConfigError(f"x_low ({self.x_low}) must be below x_high ({self.x_high})")

    def to_dict(self):
        return asdict(self)


def sample_targets(x, rng, noise_scale=1.0):
    x = np.asarray(x, dtype=np.float64)
    eps = rng.standard_normal(x.shape) * np.sqrt(noise_sigma_squared(x))
    return true_mean(x) + noise_scale * eps


def generate_batch(config: PolyDataConfig, n, rng):
    """Draw ``n`` (x, y) pairs."""
    x = rng.uniform(config.x_low, config.x_high, size=int(n))
    return x, sample_targets(x, rng, config.noise_scale)


class PolyDataSource:
    """Fresh training and validation batches keyed by (seed, epoch).

    Two sources with the same seed hand out identical batches for the same
    epoch, which is how networks in a sweep share their data.
    """

    def __init__(self, config: PolyDataConfig, seed):
        self.config = config
        self.seed = int(seed)

    def train_batch(self, epoch, n):
        return generate_batch(self.config, n, stream(self.seed, TRAIN, epoch))

    def validation_batch(self, epoch, n):
        return generate_batch(self.config, n, stream(self.seed, VALIDATION, epoch))
