"""Embedded vs split-head comparison on the heteroscedastic toy problem."""

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .data import (  # noqa: F401  (re-exported)
    EVAL,
    PolyDataConfig,
    PolyDataSource,
    generate_batch,
    noise_sigma_squared,
    sample_targets,
    stream,
)
from .network import Architecture, HeadMode, build_network, count_parameters, predict  # noqa: F401
from .objective import LOG_2PI
from .trainer import Checkpoint, TrainConfig, fit

logger = logging.getLogger(__name__)

DEFAULT_WIDTHS = (4, 8, 16, 32, 64, 128, 256)
DEFAULT_GRID = (-1.5, 1.5, 201)


def evaluation_grid(spec=DEFAULT_GRID):
    lo, hi, n = spec
    return np.linspace(float(lo), float(hi), int(n))


@dataclass
class GridEvaluation:
    x: np.ndarray
    y: np.ndarray
    mean: np.ndarray
    var_total: np.ndarray
    var_aleatoric: Optional[np.ndarray]
    var_epistemic: Optional[np.ndarray]
    in_dist: np.ndarray

    def pointwise_nll(self):
        r = self.y - self.mean
        return 0.5 * (LOG_2PI + np.log(self.var_total) + r * r / self.var_total)

    @property
    def in_dist_nll(self):
        return float(np.mean(self.pointwise_nll()[self.in_dist]))

    @property
    def out_dist_nll(self):
        mask = ~self.in_dist
        return float(np.mean(self.pointwise_nll()[mask])) if mask.any() else float("nan")


def evaluate_on_grid(network, grid_x, data_config: PolyDataConfig, seed):
    """Predict on ``grid_x`` and score against fresh noisy targets.

    Targets come from a dedicated stream so every model in a sweep is scored
    on identical data.  Points inside [x_low, x_high] count as in-distribution.
    """
    grid_x = np.asarray(grid_x, dtype=np.float64)
    y = sample_targets(grid_x, stream(seed, EVAL), data_config.noise_scale)
    pred = network.predict(grid_x)
    in_dist = (grid_x >= data_config.x_low) & (grid_x <= data_config.x_high)
    return GridEvaluation(
        grid_x, y, pred.mean, pred.var_total, pred.var_aleatoric, pred.var_epistemic, in_dist
    )


@dataclass
class SweepCell:
    width: int
    mode: str
    param_count: int
    best_val_nll: float = float("nan")
    in_dist_nll: float = float("nan")
    out_dist_nll: float = float("nan")
    best_epoch: int = 0
    error: Optional[str] = None
    checkpoint: Optional[Checkpoint] = None
    evaluation: Optional[GridEvaluation] = None
    history: list = field(default_factory=list, repr=False)

    @property
    def ok(self):
        return self.error is None


@dataclass
class SweepReport:
    cells: list

    def cell(self, width, mode):
        mode = HeadMode.parse(mode).value
        for c in self.cells:
            if c.width == width and c.mode == mode:
                return c
        raise KeyError((width, mode))

    def embedded_wins(self):
        """width -> True/False where both heads trained, None otherwise."""
        out = {}
        for w in sorted({c.width for c in self.cells}):
            try:
                e, s = self.cell(w, "embedded"), self.cell(w, "split")
            except KeyError:
                continue
            out[w] = (e.in_dist_nll < s.in_dist_nll) if (e.ok and s.ok) else None
        return out


def _run_cell(width, mode, config, data_config, grid, slope):
    arch = Architecture((width,), slope=slope, head_mode=mode)
    cell = SweepCell(width, arch.head_mode.value, count_parameters(arch))
    try:
        result = fit(arch, config, PolyDataSource(data_config, config.seed))
        ev = evaluate_on_grid(result.checkpoint.to_network(), grid, data_config, config.seed)
    except Exception as exc:  # recorded per cell; the sweep carries on
        logger.warning("cell width=%d mode=%s failed: %s", width, mode, exc)
        cell.error = f"{type(exc).__name__}: {exc}"
        return cell
    cell.best_val_nll = result.checkpoint.best_val_nll
    cell.best_epoch = result.checkpoint.epoch
    cell.in_dist_nll = ev.in_dist_nll
    cell.out_dist_nll = ev.out_dist_nll
    cell.checkpoint = result.checkpoint
    cell.evaluation = ev
    cell.history = result.history
    return cell


def run_sweep(widths, modes, config: TrainConfig, data_config=None, grid=DEFAULT_GRID,
              slope=0.01, workers=1) -> SweepReport:
    """Train every (width, mode) pair on shared per-epoch data and evaluate it."""
    widths, modes = list(widths), [HeadMode.parse(m).value for m in modes]
    if not widths or not modes:
        raise ValueError("run_sweep needs at least one width and one mode")
    data_config = data_config or PolyDataConfig()
    grid_x = evaluation_grid(grid)
    jobs = [(w, m, config, data_config, grid_x, slope) for w in widths for m in modes]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            cells = list(pool.map(_run_cell, *zip(*jobs)))
    else:
        cells = [_run_cell(*job) for job in jobs]
    return SweepReport(cells)
