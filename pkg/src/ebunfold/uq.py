"""Parametric bootstrap bands, bias correction and MISE studies."""

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
import logging
import math
import warnings

import numpy as np
from scipy.integrate import simpson

from .basis import eval_intensity
from .errors import ConfigError, UnfoldError
from .forward import smeared_means
from .mcem import mcem_fit
from .simulate import make_rng

__all__ = [
    "BootstrapConfig",
    "UnfoldResult",
    "BaseFit",
    "bootstrap_unfold",
    "percentile_band",
    "basic_band",
    "bias_correct",
    "integrated_squared_error",
    "mise_study",
]

log = logging.getLogger(__name__)

SCHEME_MODEL = 1  # resample from Poisson(K beta_hat)
SCHEME_DATA = 2  # resample from Poisson(y)

# stream tags so bootstrap draws never collide with MCEM streams
_RESAMPLE_STREAM = 101
_REFIT_STREAM = 102


@dataclass(frozen=True)
class BootstrapConfig:
    scheme: int = SCHEME_DATA
    R: int = 200
    alpha: float = 0.025
    grid: np.ndarray = None
    seed: int = 0
    workers: int = 1
    band: str = "percentile"
    clip_nonneg: bool = False

    def __post_init__(self):
        if self.scheme not in (SCHEME_MODEL, SCHEME_DATA):
            raise ConfigError(f"scheme must be 1 or 2, got {self.scheme}")
        if self.R < 2:
            raise ConfigError("need at least 2 bootstrap replicates")
        if not 0.0 < self.alpha < 0.5:
            raise ConfigError("alpha must lie in (0, 0.5)")
        if self.band not in ("percentile", "basic"):
            raise ConfigError("band must be 'percentile' or 'basic'")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")


@dataclass
class BaseFit:
    beta_hat: np.ndarray
    delta_hat: float


@dataclass
class UnfoldResult:
    beta_hat: np.ndarray
    delta_hat: float
    grid: np.ndarray
    f_hat: np.ndarray
    lower: np.ndarray = None
    upper: np.ndarray = None
    f_bc: np.ndarray = None
    band_kind: str = None
    scheme: int = None
    replicates: np.ndarray = None
    replicate_deltas: np.ndarray = None
    failures: list = field(default_factory=list)

    @property
    def R_effective(self):
        return 0 if self.replicates is None else self.replicates.shape[0]


def percentile_band(replicates, alpha):
    """Pointwise ``alpha`` and ``1 - alpha`` quantiles (linear interpolation of order statistics)."""
    reps = np.asarray(replicates, dtype=float)
    if reps.shape[0] < 2:
        raise ConfigError("need at least 2 replicates")
    lower = np.quantile(reps, alpha, axis=0, method="linear")
    upper = np.quantile(reps, 1.0 - alpha, axis=0, method="linear")
    return lower, upper


def basic_band(f_hat, replicates, alpha, clip_nonneg=False):
    """Reflected band ``[2 f_hat - q_{1-alpha}, 2 f_hat - q_alpha]``.

    Negative lower edges are kept unless ``clip_nonneg`` is set.
    """
    q_lo, q_hi = percentile_band(replicates, alpha)
    f_hat = np.asarray(f_hat, dtype=float)
    lower = 2.0 * f_hat - q_hi
    upper = 2.0 * f_hat - q_lo
    if clip_nonneg:
        lower = np.maximum(lower, 0.0)
        upper = np.maximum(upper, 0.0)
    return lower, upper


def bias_correct(f_hat, replicates, scheme=SCHEME_MODEL):
    """``2 f_hat - mean(f*)``; only meaningful for model-based resampling."""
    if scheme != SCHEME_MODEL:
        raise ConfigError("bias correction requires resampling scheme 1 (Poisson(K beta_hat))")
    reps = np.asarray(replicates, dtype=float)
    return 2.0 * np.asarray(f_hat, dtype=float) - reps.mean(axis=0)


def _resample_mean(scheme, y, K, beta_hat):
    if scheme == SCHEME_MODEL:
        return smeared_means(K, beta_hat)
    return np.asarray(getattr(y, "y", y), dtype=float)


def _replicate(args):
    r, mean, K, penalty, mcem_cfg, init_fn, bs_seed = args
    rng = make_rng(bs_seed, _RESAMPLE_STREAM, r)
    y_star = rng.poisson(mean)
    cfg = replace(mcem_cfg, seed=int(np.random.SeedSequence((bs_seed, _REFIT_STREAM, r)).generate_state(1)[0]))
    try:
        res = mcem_fit(y_star, K, penalty, cfg, init_fn(y_star))
    except (UnfoldError, ValueError, FloatingPointError) as exc:
        return r, None, None, f"{type(exc).__name__}: {exc}"
    return r, res.beta_hat, res.delta_hat, None


def bootstrap_unfold(y, K, penalty, mcem_cfg, bs_cfg, basis, init_fn, base=None):
    """Refit ``bs_cfg.R`` resampled histograms and build bands on ``bs_cfg.grid``.

    ``init_fn(y)`` returns the sampler starting point for a histogram ``y``.
    Each replicate reruns the full MCEM, warm-started at the base estimate of
    ``delta``; replicate ``r`` depends only on ``(bs_cfg.seed, r)``.
    """
    if base is None:
        fit = mcem_fit(y, K, penalty, mcem_cfg, init_fn(y))
        base = BaseFit(fit.beta_hat, fit.delta_hat)
    grid = bs_cfg.grid
    if grid is None:
        lo, hi = basis.domain
        grid = np.linspace(lo, hi, 200)
    grid = np.asarray(grid, dtype=float)
    f_hat = eval_intensity(basis, base.beta_hat, grid)
    mean = _resample_mean(bs_cfg.scheme, y, K, base.beta_hat)
    rep_cfg = replace(mcem_cfg, delta0=base.delta_hat)
    jobs = [(r, mean, K, penalty, rep_cfg, init_fn, bs_cfg.seed) for r in range(bs_cfg.R)]
    if bs_cfg.workers > 1:
        with ProcessPoolExecutor(max_workers=bs_cfg.workers) as pool:
            outcomes = list(pool.map(_replicate, jobs))
    else:
        outcomes = [_replicate(j) for j in jobs]
    outcomes.sort(key=lambda o: o[0])
    failures = [(r, msg) for r, _, _, msg in outcomes if msg is not None]
    ok = [(b, d) for _, b, d, msg in outcomes if msg is None]
    if len(failures) > 0.05 * bs_cfg.R:
        warnings.warn(f"{len(failures)} of {bs_cfg.R} bootstrap replicates failed", RuntimeWarning, stacklevel=2)
    if len(ok) < 2:
        raise UnfoldError(f"only {len(ok)} bootstrap replicates succeeded")
    betas = np.array([b for b, _ in ok])
    reps = np.array([eval_intensity(basis, b, grid) for b in betas])
    if bs_cfg.band == "percentile":
        lower, upper = percentile_band(reps, bs_cfg.alpha)
    else:
        lower, upper = basic_band(f_hat, reps, bs_cfg.alpha, clip_nonneg=bs_cfg.clip_nonneg)
    f_bc = bias_correct(f_hat, reps) if bs_cfg.scheme == SCHEME_MODEL else None
    return UnfoldResult(
        beta_hat=base.beta_hat,
        delta_hat=base.delta_hat,
        grid=grid,
        f_hat=f_hat,
        lower=lower,
        upper=upper,
        f_bc=f_bc,
        band_kind=bs_cfg.band,
        scheme=bs_cfg.scheme,
        replicates=reps,
        replicate_deltas=np.array([d for _, d in ok]),
        failures=failures,
    )


def integrated_squared_error(f_est, f_true, grid):
    """``int (f_est - f_true)^2`` by composite Simpson on an evenly spaced grid."""
    diff = np.asarray(f_est, dtype=float) - np.asarray(f_true, dtype=float)
    return float(simpson(diff * diff, x=np.asarray(grid, dtype=float)))


def mise_study(scenario, lambda_grid, reps, mcem_cfg, seed=0, grid_points=401):
    """MISE / lambda^2 with standard errors for each expected sample size.

    ``scenario(lam)`` returns an object with ``simulate(seed) -> y``,
    ``truth(grid)``, ``fit(y, mcem_cfg) -> beta_hat`` and ``basis``.
    """
    rows = []
    for li, lam in enumerate(lambda_grid):
        sc = scenario(lam)
        lo, hi = sc.basis.domain
        grid = np.linspace(lo, hi, grid_points)
        f_true = sc.truth(grid)
        ises = []
        for r in range(reps):
            y = sc.simulate((seed, li, r))
            cfg = replace(mcem_cfg, seed=int(np.random.SeedSequence((seed, li, r, 7)).generate_state(1)[0]))
            beta_hat = sc.fit(y, cfg)
            ises.append(integrated_squared_error(eval_intensity(sc.basis, beta_hat, grid), f_true, grid))
        ises = np.array(ises) / float(lam) ** 2
        se = float(ises.std(ddof=1) / math.sqrt(reps)) if reps > 1 else math.nan
        rows.append({"lambda": float(lam), "mise_over_lambda2": float(ises.mean()), "se": se, "reps": reps})
        log.info("lambda=%g MISE/lambda^2=%.4g +- %.2g", lam, ises.mean(), se)
    return rows
