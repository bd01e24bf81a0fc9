"""Sampling-free variational Bayesian neural networks via moment propagation."""

__version__ = "0.1.0"

from .moments import MomentTensor, TruncatedNormalStats, product_moments, truncated_stats
from .layers import AvgPool2dLayer, Conv2dLayer, LeakyReluLayer, LinearLayer
from .variational import (
    GaussianParameter,
    NormalPrior,
    ParameterStore,
    SpikeSlabPrior,
    kl_monte_carlo,
    log_posterior,
    log_prior,
    sample_weights,
)
from .objective import (
    LossBreakdown,
    PredictiveDistribution,
    expected_nll,
    kl_decay_weight,
    negative_elbo,
)
from .autograd import Tape
from .network import Architecture, HeadMode, Network, build_network, count_parameters, predict
from .data import PolyDataConfig, PolyDataSource, generate_batch, noise_sigma_squared
from .trainer import Checkpoint, OptimizerState, TrainConfig, adamw_step, fit
from .gradcheck import grad_check
from .experiment import run_sweep

__all__ = [
    "MomentTensor", "TruncatedNormalStats", "product_moments", "truncated_stats",
    "AvgPool2dLayer", "Conv2dLayer", "LeakyReluLayer", "LinearLayer",
    "GaussianParameter", "NormalPrior", "ParameterStore", "SpikeSlabPrior",
    "kl_monte_carlo", "log_posterior", "log_prior", "sample_weights",
    "LossBreakdown", "PredictiveDistribution", "expected_nll", "kl_decay_weight",
    "negative_elbo", "Tape", "Architecture", "HeadMode", "Network", "build_network",
    "count_parameters", "predict", "PolyDataConfig", "PolyDataSource", "generate_batch",
    "noise_sigma_squared", "Checkpoint", "OptimizerState", "TrainConfig", "adamw_step",
    "fit", "grad_check", "run_sweep",
]
