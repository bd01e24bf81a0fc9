"""TOML run configuration.

Example::

    [data]
    x_low = -0.5
    x_high = 0.5

    [architecture]
    hidden_sizes = [4]
    slope = 0.01
    head_mode = "embedded"      # or "split"

    [train]
    epochs = 2000
    seed = 0

    [prior]
    var_slab = 1.0
    var_spike = 6.14421235332821e-06

    [sweep]
    widths = [4, 128]
    modes = ["embedded", "split"]
    workers = 1

    [eval]
    grid = [-1.5, 1.5, 201]

Every section and key is optional; unknown ones are errors.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass, field

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .data import PolyDataConfig
from .errors import ConfigError
from .experiment import DEFAULT_GRID, DEFAULT_WIDTHS
from .network import Architecture, HeadMode
from .trainer import TrainConfig
from .variational import SpikeSlabPrior


@dataclass
class SweepSettings:
    widths: tuple = DEFAULT_WIDTHS
    modes: tuple = ("embedded", "split")
    workers: int = 1


@dataclass
class RunConfig:
    data: PolyDataConfig = field(default_factory=PolyDataConfig)
    architecture: Architecture = field(default_factory=Architecture)
    train: TrainConfig = field(default_factory=TrainConfig)
    sweep: SweepSettings = field(default_factory=SweepSettings)
    grid: tuple = DEFAULT_GRID

    def to_dict(self):
        train = self.train.to_dict()
        prior = train.pop("prior")
        return {
            "data": self.data.to_dict(),
            "architecture": self.architecture.to_dict(),
            "train": train,
            "prior": prior,
            "sweep": {
                "widths": list(self.sweep.widths),
                "modes": list(self.sweep.modes),
                "workers": self.sweep.workers,
            },
            "eval": {"grid": list(self.grid)},
        }


_INT = (int,)
_REAL = (int, float)

_SCHEMA = {
    "data": {"x_low": _REAL, "x_high": _REAL, "noise_scale": _REAL},
    "architecture": {
        "hidden_sizes": list, "slope": _REAL, "head_mode": str,
        "input_dim": _INT, "output_dim": _INT,
    },
    "train": {
        "epochs": _INT, "batch_size": _INT, "learning_rate": _REAL, "beta1": _REAL,
        "beta2": _REAL, "adam_epsilon": _REAL, "weight_decay": _REAL,
        "kl_samples": _INT, "seed": _INT, "validation_size": _INT,
        "init_mu_std": _REAL, "init_rho": _REAL,
    },
    "prior": {"var_slab": _REAL, "var_spike": _REAL, "mix": _REAL},
    "sweep": {"widths": list, "modes": list, "workers": _INT},
    "eval": {"grid": list},
}


def _check(doc):
    for section, body in doc.items():
        if section not in _SCHEMA:
            raise ConfigError(f"unknown section [{section}]")
        if not isinstance(body, dict):
            raise ConfigError(f"[{section}] must be a table")
        for key, value in body.items():
            if key not in _SCHEMA[section]:
                raise ConfigError(f"unknown key '{key}' in [{section}]")
            expected = _SCHEMA[section][key]
            if isinstance(value, bool) or not isinstance(value, expected):
                raise ConfigError(
                    f"{section}.{key}: expected {getattr(expected, '__name__', 'number')}, "
                    f"got {type(value).__name__} ({value!r})"
                )


def from_dict(doc) -> RunConfig:
    _check(doc)
    try:
        data = PolyDataConfig(**doc.get("data", {}))
        arch = Architecture(**doc.get("architecture", {}))
        prior = SpikeSlabPrior(**doc.get("prior", {}))
        train = TrainConfig(prior=prior, **doc.get("train", {}))
        sw = doc.get("sweep", {})
        sweep = SweepSettings(
            widths=tuple(int(w) for w in sw.get("widths", DEFAULT_WIDTHS)),
            modes=tuple(HeadMode.parse(m).value for m in sw.get("modes", ("embedded", "split"))),
            workers=int(sw.get("workers", 1)),
        )
        grid = doc.get("eval", {}).get("grid", DEFAULT_GRID)
        if len(grid) != 3:
            raise ConfigError("eval.grid must be [low, high, count]")
        grid = (float(grid[0]), float(grid[1]), int(grid[2]))
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc
    if any(w < 1 for w in sweep.widths) or sweep.workers < 1:
        raise ConfigError("sweep widths and workers must be positive")
    return RunConfig(data, arch, train, sweep, grid)


def loads(text) -> RunConfig:
    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"config parse error: {exc}") from exc
    return from_dict(doc)


def load(path) -> RunConfig:
    with open(path, encoding="utf-8") as f:
        text = f.read()
    try:
        return loads(text)
    except ConfigError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def with_overrides(cfg: RunConfig, **overrides) -> RunConfig:
    """Apply CLI overrides (seed, epochs, widths, modes, workers, grid); None means unset."""
    train_changes = {k: overrides[k] for k in ("seed", "epochs") if overrides.get(k) is not None}
    train = cfg.train.replace(**train_changes) if train_changes else cfg.train
    sweep = SweepSettings(
        widths=tuple(overrides["widths"]) if overrides.get("widths") else cfg.sweep.widths,
        modes=tuple(HeadMode.parse(m).value for m in overrides["modes"])
        if overrides.get("modes") else cfg.sweep.modes,
        workers=overrides["workers"] if overrides.get("workers") else cfg.sweep.workers,
    )
    grid = overrides["grid"] if overrides.get("grid") else cfg.grid
    return RunConfig(cfg.data, cfg.architecture, train, sweep, grid)
