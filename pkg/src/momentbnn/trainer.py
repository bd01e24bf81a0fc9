"""AdamW training loop with per-epoch fresh data and checkpointing."""

from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from .data import INIT, KL, PolyDataConfig, PolyDataSource, stream
from .errors import CheckpointError, ConfigError, DomainError, NumericalError, ShapeError
from .network import Architecture, build_network
from .objective import expected_nll, kl_decay_weight
from .variational import INIT_MU_STD, INIT_RHO, SpikeSlabPrior

logger = logging.getLogger(__name__)

CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 10000
    batch_size: int = 64
    learning_rate: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    adam_epsilon: float = 1e-8
    weight_decay: float = 0.01
    kl_samples: int = 1
    seed: int = 0
    validation_size: int = 256
    init_mu_std: float = INIT_MU_STD
    init_rho: float = INIT_RHO
    prior: SpikeSlabPrior = field(default_factory=SpikeSlabPrior)

    def __post_init__(self):
        for name in ("epochs", "batch_size", "kl_samples", "validation_size"):
            if int(getattr(self, name)) < 1:
                raise ConfigError(f"{name} must be a positive integer")
        if self.learning_rate <= 0 or self.adam_epsilon <= 0 or self.weight_decay < 0:
            raise ConfigError("learning_rate and adam_epsilon must be positive, weight_decay >= 0")
        if not (0 < self.beta1 < 1 and 0 < self.beta2 < 1):
            raise ConfigError("beta1 and beta2 must lie in (0, 1)")
        if isinstance(self.prior, dict):
            object.__setattr__(self, "prior", SpikeSlabPrior(**self.prior))

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        if "prior" in d:
            d["prior"] = SpikeSlabPrior(**d["prior"])
        return cls(**d)

    def replace(self, **changes):
        d = {f.name: getattr(self, f.name) for f in fields(self)}
        d.update(changes)
        return TrainConfig(**d)


@dataclass
class OptimizerState:
    m: np.ndarray
    v: np.ndarray
    step: int = 0

    @classmethod
    def zeros(cls, n):
        return cls(np.zeros(n), np.zeros(n), 0)


def adamw_step(state: OptimizerState, theta, grad, config: TrainConfig):
    """One AdamW update with decoupled weight decay, in place on ``theta``."""
    if not (theta.shape == grad.shape == state.m.shape):
        raise ShapeError(
            f"misaligned optimizer inputs: theta {theta.shape}, grad {grad.shape}, "
            f"state {state.m.shape}"
        )
    b1, b2, lr = config.beta1, config.beta2, config.learning_rate
    state.step += 1
    state.m *= b1
    state.m += (1.0 - b1) * grad
    state.v *= b2
    state.v += (1.0 - b2) * grad * grad
    m_hat = state.m / (1.0 - b1**state.step)
    v_hat = state.v / (1.0 - b2**state.step)
    update = m_hat / (np.sqrt(v_hat) + config.adam_epsilon)
    theta -= lr * update + lr * config.weight_decay * theta
    return state, theta


@dataclass
class Checkpoint:
    architecture: Architecture
    mu: np.ndarray
    rho: np.ndarray
    config: TrainConfig
    data: PolyDataConfig
    epoch: int
    best_val_nll: float
    format_version: int = CHECKPOINT_VERSION

    def to_network(self):
        net = build_network(self.architecture)
        if net.store.size != self.mu.size:
            raise CheckpointError(
                f"checkpoint holds {self.mu.size} parameters, architecture needs {net.store.size}"
            )
        net.store.mu[:] = self.mu
        net.store.rho[:] = self.rho
        return net

    def to_json(self):
        doc = {
            "format_version": self.format_version,
            "architecture": self.architecture.to_dict(),
            "config": self.config.to_dict(),
            "data": self.data.to_dict(),
            "epoch": self.epoch,
            "best_val_nll": self.best_val_nll,
            "mu": self.mu.tolist(),
            "rho": self.rho.tolist(),
        }
        # float repr round-trips exactly
        return json.dumps(doc, indent=1) + "\n"

    def save(self, path):
        with open(path, "w") as f:
            f.write(self.to_json())

    @classmethod
    def from_json(cls, text):
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise CheckpointError(f"checkpoint is not valid JSON: {exc}") from exc
        version = doc.get("format_version")
        if version != CHECKPOINT_VERSION:
            raise CheckpointError(
                f"unsupported checkpoint format_version {version!r} "
                f"(this library reads version {CHECKPOINT_VERSION})"
            )
        try:
            return cls(
                architecture=Architecture.from_dict(doc["architecture"]),
                mu=np.array(doc["mu"], dtype=np.float64),
                rho=np.array(doc["rho"], dtype=np.float64),
                config=TrainConfig.from_dict(doc["config"]),
                data=PolyDataConfig(**doc["data"]),
                epoch=int(doc["epoch"]),
                best_val_nll=float(doc["best_val_nll"]),
            )
        except (KeyError, TypeError) as exc:
            raise CheckpointError(f"malformed checkpoint: {exc}") from exc

    @classmethod
    def load(cls, path):
        with open(path) as f:
            return cls.from_json(f.read())


@dataclass
class FitResult:
    checkpoint: Checkpoint
    history: list
    initial_val_nll: float


def validation_nll(network, data_source, epoch, n):
    """Per-point reconstruction loss on the validation batch of ``epoch``."""
    x, y = data_source.validation_batch(epoch, n)
    return expected_nll(network.predict(x), y) / n


def fit(arch: Architecture, config: TrainConfig, data_source=None, data_config=None,
        callback=None) -> FitResult:
    """Train for ``config.epochs`` epochs and keep the best-validation parameters.

    Every epoch draws one fresh training batch (a single full-batch AdamW
    step) and one fresh validation batch.  The KL term is weighted by
    ``kl_decay_weight(epoch, epochs)``.
    """
    data_config = data_config or PolyDataConfig()
    data_source = data_source or PolyDataSource(data_config, config.seed)
    net = build_network(arch)
    store = net.store
    store.initialize(stream(config.seed, INIT), config.init_mu_std, config.init_rho)
    theta = store.as_vector()
    state = OptimizerState.zeros(theta.size)
    n_epochs = config.epochs

    initial_val = validation_nll(net, data_source, 0, config.validation_size)
    best = None
    history = []
    for epoch in range(1, n_epochs + 1):
        x, y = data_source.train_batch(epoch, config.batch_size)
        alpha = kl_decay_weight(epoch, n_epochs)
        eps = stream(config.seed, KL, epoch).standard_normal((config.kl_samples, store.size))
        loss, grad, _ = net.loss_and_grad(x, y, alpha, eps, config.prior)
        if not (math.isfinite(loss.total) and np.all(np.isfinite(grad))):
            raise NumericalError(
                f"non-finite loss at epoch {epoch}: {loss.as_dict()}",
                epoch=epoch, components=loss.as_dict(),
            )
        adamw_step(state, theta, grad, config)
        store.set_vector(theta)

        try:
            with np.errstate(over="ignore", invalid="ignore"):
                val = validation_nll(net, data_source, epoch, config.validation_size)
        except DomainError as exc:
            val = float("nan")
            logger.debug("validation forward failed at epoch %d: %s", epoch, exc)
        if not math.isfinite(val):
            raise NumericalError(
                f"non-finite validation loss at epoch {epoch} after the update; "
                f"last training loss {loss.as_dict()}",
                epoch=epoch, components=loss.as_dict(),
            )
        record = {
            "epoch": epoch,
            "alpha": alpha,
            "kl": loss.kl,
            "train_nll": loss.nll,
            "val_nll": val,
            "total": loss.total,
        }
        history.append(record)
        if callback is not None:
            callback(record)
        if best is None or val < best.best_val_nll:
            best = Checkpoint(
                architecture=arch, mu=store.mu.copy(), rho=store.rho.copy(),
                config=config, data=data_source.config, epoch=epoch, best_val_nll=val,
            )
        if epoch % 1000 == 0:
            logger.info("epoch %d: train_nll=%.4f val_nll=%.4f best=%.4f",
                        epoch, loss.nll, val, best.best_val_nll)
    return FitResult(best, history, initial_val)
