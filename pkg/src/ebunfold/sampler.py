"""Metropolis-within-Gibbs posterior sampling and chain diagnostics."""

from dataclasses import dataclass, field
import math
import warnings

import numpy as np

from ._accel import backend_name
from ._sweep import run_sweeps
from .errors import ConfigError, NumericalError
from .posterior import log_posterior
from .simulate import make_rng

__all__ = [
    "SamplerConfig",
    "ChainSample",
    "sample_posterior",
    "autocorr_time_icse",
    "autocovariance",
    "chain_diagnostics",
]


@dataclass(frozen=True)
class SamplerConfig:
    """Chain length, burn-in, seed and starting point.

    ``seed`` is either an integer or a tuple ``(master_seed, *stream_keys)``.
    """

    n_samples: int
    beta_init: np.ndarray
    burn_in: int = 500
    seed: object = 0
    backend: str = None

    def __post_init__(self):
        if self.n_samples < 1:
            raise ConfigError("n_samples must be >= 1")
        if self.burn_in < 0:
            raise ConfigError("burn_in must be >= 0")
        beta = np.array(self.beta_init, dtype=float)
        if beta.ndim != 1 or np.any(beta < 0) or np.any(~np.isfinite(beta)):
            raise ConfigError("beta_init must be a finite non-negative vector")
        object.__setattr__(self, "beta_init", beta)


@dataclass(frozen=True, eq=False)
class ChainSample:
    """Recorded sweeps and per-coordinate mixing summaries."""

    draws: np.ndarray
    acceptance_rate: np.ndarray
    mean_accept_prob: np.ndarray
    kappa: np.ndarray = field(init=False)
    ess: np.ndarray = field(init=False)

    def __post_init__(self):
        kappa = np.array([autocorr_time_icse(self.draws[:, j]) for j in range(self.draws.shape[1])])
        object.__setattr__(self, "kappa", kappa)
        object.__setattr__(self, "ess", self.draws.shape[0] / kappa)

    @property
    def n_samples(self):
        return self.draws.shape[0]

    @property
    def mean(self):
        return self.draws.mean(axis=0)


def _uniforms(seed, n_sweeps, p):
    keys = seed if isinstance(seed, tuple) else (seed,)
    rng = make_rng(keys[0], *keys[1:])
    return rng.random((n_sweeps, p, 2))


def sample_posterior(model, cfg):
    """Draw ``cfg.n_samples`` sweeps from ``p(beta | y, delta)`` after burn-in."""
    beta0 = cfg.beta_init
    if beta0.shape != (model.p,):
        raise ConfigError(f"beta_init has shape {beta0.shape}, expected ({model.p},)")
    if not math.isfinite(log_posterior(model, beta0)):
        raise NumericalError("starting point has zero posterior density")
    n_sweeps = cfg.burn_in + cfg.n_samples
    u = _uniforms(cfg.seed, n_sweeps, model.p)
    try:
        draws, accepts, alpha_sum = run_sweeps(
            model.K_mat, model.y_vec, model.omega_a, model.delta, beta0, u, cfg.burn_in, cfg.backend
        )
    except ValueError as exc:
        raise NumericalError(str(exc)) from exc
    chain = ChainSample(
        draws=draws,
        acceptance_rate=accepts / cfg.n_samples,
        mean_accept_prob=alpha_sum / cfg.n_samples,
    )
    if np.any(accepts == 0):
        warnings.warn(
            f"coordinates {np.flatnonzero(accepts == 0).tolist()} rejected every proposal",
            RuntimeWarning,
            stacklevel=2,
        )
    return chain


def autocovariance(x):
    """Biased autocovariance ``gamma_k = (1/S) sum_t (x_t - xbar)(x_{t+k} - xbar)``."""
    x = np.asarray(x, dtype=float)
    n = x.size
    xc = x - x.mean()
    size = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(xc, size)
    return np.fft.irfft(f * np.conj(f), size)[:n] / n


def _convex_minorant(values):
    # greatest convex minorant of (i, values[i]) evaluated at the integers
    pts = list(enumerate(values))
    hull = []
    for x, y in pts:
        while len(hull) >= 2:
            (x1, y1), (x2, y2) = hull[-2], hull[-1]
            if (y2 - y1) * (x - x1) >= (y - y1) * (x2 - x1):
                hull.pop()
            else:
                break
        hull.append((x, y))
    hx, hy = zip(*hull)
    return np.interp(np.arange(len(values)), hx, hy)


def _icse(x):
    n = len(x)
    gamma = autocovariance(x)
    g0 = gamma[0]
    if not g0 > 0 or not np.isfinite(g0):
        return float(n), n, True
    m = n // 2
    big = gamma[0:2 * m:2] + gamma[1:2 * m:2]
    neg = np.flatnonzero(big < 0)
    cut = neg[0] if neg.size else m
    big = np.minimum.accumulate(big[:cut])
    if big.size == 0:
        return 1.0, 0, False
    # convex minorant of the positive pair sums with the sequence closed at 0
    big = _convex_minorant(np.append(big, 0.0))[:-1]
    var = -g0 + 2.0 * big.sum()
    return max(var / g0, 1.0), 2 * cut, False


def autocorr_time_icse(series):
    """Integrated autocorrelation time by the initial convex sequence rule.

    Pair sums of adjacent autocovariances are truncated at the first negative
    one, made monotone, and replaced by their greatest convex minorant.
    A constant series returns ``len(series)``.
    """
    x = np.asarray(series, dtype=float)
    if x.ndim != 1 or x.size < 10:
        raise ConfigError("autocorrelation time needs a 1-D series of length >= 10")
    return _icse(x)[0]


def chain_diagnostics(chain, acf_lags=50, hist_bins=30, include_series=True):
    """Per-coordinate mixing summaries for a recorded chain.

    Parameters
    ----------
    chain : ChainSample or array_like, shape (S, p)
    acf_lags : int
        Number of autocorrelation lags kept in the series output.
    hist_bins : int
        Histogram resolution for the series output.
    include_series : bool
        Attach the trace, histogram, ACF and cumulative-mean series per coordinate.

    Returns
    -------
    dict
        ``coordinates`` holds mean, sd, acceptance, kappa, ESS, lag-1
        autocorrelation and a ``degenerate`` flag per coefficient; summary
        keys give the mean acceptance, mean and max kappa and the minimum ESS.
    """
    draws = chain.draws if isinstance(chain, ChainSample) else np.asarray(chain, dtype=float)
    if draws.ndim != 2 or draws.shape[0] == 0:
        raise ConfigError("empty chain")
    S, p = draws.shape
    acc = getattr(chain, "acceptance_rate", np.full(p, np.nan))
    coords = []
    series = []
    for j in range(p):
        x = draws[:, j]
        kappa, trunc_lag, constant = _icse(x) if S >= 10 else (float(S), S, True)
        gamma = autocovariance(x)
        acf = gamma[: acf_lags + 1] / gamma[0] if gamma[0] > 0 else np.ones(min(acf_lags + 1, S))
        # a chain whose autocorrelation never dies out within a third of its length
        degenerate = bool(constant or trunc_lag > S / 3)
        coords.append(
            {
                "index": j,
                "mean": float(x.mean()),
                "sd": float(x.std(ddof=1)) if S > 1 else 0.0,
                "acceptance": float(acc[j]),
                "kappa": float(kappa),
                "ess": float(S / kappa),
                "lag1_autocorr": float(acf[1]) if acf.size > 1 else 1.0,
                "degenerate": degenerate,
            }
        )
        if not include_series:
            continue
        counts, edges = np.histogram(x, bins=hist_bins)
        series.append(
            {
                "index": j,
                "trace": x.tolist(),
                "histogram": {"counts": counts.tolist(), "edges": edges.tolist()},
                "acf": acf.tolist(),
                "cumulative_mean": (np.cumsum(x) / np.arange(1, S + 1)).tolist(),
            }
        )
    kap = np.array([c["kappa"] for c in coords])
    out = {
        "n_samples": S,
        "p": p,
        "backend": backend_name(),
        "mean_acceptance": float(np.nanmean(acc)) if np.any(np.isfinite(acc)) else None,
        "mean_kappa": float(kap.mean()),
        "max_kappa": float(kap.max()),
        "min_ess": float(S / kap.max()),
        "coordinates": coords,
    }
    if include_series:
        out["series"] = series
    return out
