"""Empirical Bayes unfolding of indirectly observed Poisson point processes.

The intensity on the true space is expanded in clamped B-splines; the
smearing operator is discretized into a response matrix; the prior scale is
chosen by Monte Carlo EM; uncertainty comes from a parametric bootstrap.
"""

from .basis import PenaltyMatrix, SplineBasis, curvature_penalty, eval_intensity, make_uniform_basis
from .errors import ConfigError, ConvergenceError, NumericalError, UnfoldError
from .forward import (
    BinningScheme,
    CrystalBall,
    GaussianConvolution,
    ResponseMatrix,
    assemble_response,
    delta_kernel_response,
    full_kernel,
    uniform_binning,
)
from .mcem import McemConfig, McemResult, mcem_fit
from .posterior import PosteriorModel, nnls_init
from .sampler import SamplerConfig, autocorr_time_icse, chain_diagnostics, sample_posterior
from .scenarios import build_setup, preset
from .simulate import BinnedCounts, gmm_two_peaks, make_rng
from .uq import BootstrapConfig, UnfoldResult, basic_band, bias_correct, bootstrap_unfold, percentile_band

__version__ = "0.1.0"

__all__ = [
    "PenaltyMatrix",
    "SplineBasis",
    "curvature_penalty",
    "eval_intensity",
    "make_uniform_basis",
    "ConfigError",
    "ConvergenceError",
    "NumericalError",
    "UnfoldError",
    "BinningScheme",
    "CrystalBall",
    "GaussianConvolution",
    "ResponseMatrix",
    "assemble_response",
    "delta_kernel_response",
    "full_kernel",
    "uniform_binning",
    "McemConfig",
    "McemResult",
    "mcem_fit",
    "PosteriorModel",
    "nnls_init",
    "SamplerConfig",
    "autocorr_time_icse",
    "chain_diagnostics",
    "sample_posterior",
    "build_setup",
    "preset",
    "BinnedCounts",
    "gmm_two_peaks",
    "make_rng",
    "BootstrapConfig",
    "UnfoldResult",
    "basic_band",
    "bias_correct",
    "bootstrap_unfold",
    "percentile_band",
]
