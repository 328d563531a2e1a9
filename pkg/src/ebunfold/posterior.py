"""Poisson regression likelihood, smoothness prior and the NNLS starting point."""

from dataclasses import dataclass
import math

import numpy as np
from scipy.special import gammaln

from .basis import PenaltyMatrix
from .errors import ConfigError, ConvergenceError, NumericalError
from .forward import BinningScheme, ResponseMatrix

__all__ = [
    "PosteriorModel",
    "log_likelihood",
    "log_prior",
    "log_posterior",
    "grad_log_posterior",
    "curvature_log_posterior",
    "nnls",
    "nnls_init",
    "extend_counts",
]


def _as_matrix(K):
    return K.K if isinstance(K, ResponseMatrix) else np.asarray(K, dtype=float)


def _as_counts(y):
    return np.asarray(getattr(y, "y", y), dtype=float)


def _as_penalty(penalty):
    if isinstance(penalty, PenaltyMatrix):
        return penalty
    return PenaltyMatrix.from_matrix(penalty)


@dataclass(frozen=True, eq=False)
class PosteriorModel:
    """Data, response, penalty and prior scale ``delta``.

    ``K`` may be a :class:`ResponseMatrix` or a plain array; the arrays used
    by the sampler are exposed as ``K_mat``, ``y_vec`` and ``omega_a``.
    """

    y: object
    K: object
    penalty: object
    delta: float

    def __post_init__(self):
        K = np.array(_as_matrix(self.K), dtype=float)
        y = np.array(_as_counts(self.y), dtype=float)
        pen = _as_penalty(self.penalty)
        object.__setattr__(self, "penalty", pen)
        if K.ndim != 2 or y.shape != (K.shape[0],):
            raise ConfigError(f"{y.size} counts for a response with {K.shape[0]} rows")
        if pen.p != K.shape[1]:
            raise ConfigError(f"penalty is {pen.p}x{pen.p} but the response has {K.shape[1]} columns")
        if np.any(np.isnan(y)) or np.any(y < 0):
            raise ConfigError("counts must be non-negative")
        if np.any(K < 0) or not np.all(np.isfinite(K)):
            raise ConfigError("response entries must be finite and non-negative")
        if K.shape[0] and np.any(K.sum(axis=0) <= 0):
            bad = np.flatnonzero(K.sum(axis=0) <= 0)
            raise ConfigError(f"response columns {bad.tolist()} are identically zero")
        if not (self.delta > 0 and math.isfinite(self.delta)):
            raise ConfigError(f"delta must be positive, got {self.delta}")
        K.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "K_mat", K)
        object.__setattr__(self, "y_vec", y)

    @property
    def n(self):
        return self.K_mat.shape[0]

    @property
    def p(self):
        return self.K_mat.shape[1]

    @property
    def omega_a(self):
        return self.penalty.omega_a

    def with_delta(self, delta):
        return PosteriorModel(self.y_vec, self.K_mat, self.penalty, delta)


def _check_beta(model, beta):
    beta = np.asarray(beta, dtype=float)
    if beta.shape != (model.p,):
        raise ConfigError(f"beta has shape {beta.shape}, expected ({model.p},)")
    if np.any(np.isnan(beta)):
        raise ConfigError("beta contains NaN")
    if np.any(beta < 0):
        raise ConfigError("beta must be non-negative")
    return beta


def log_likelihood(model, beta):
    """``sum_i y_i log mu_i - mu_i - log y_i!`` with ``mu = K beta``."""
    beta = _check_beta(model, beta)
    y = model.y_vec
    mu = model.K_mat @ beta
    pos = y > 0
    if np.any(mu[pos] <= 0):
        return -math.inf
    return float(np.sum(y[pos] * np.log(mu[pos])) - mu.sum() - gammaln(y + 1.0).sum())


def log_prior(penalty, delta, beta):
    """``(p/2) log delta - delta beta' Omega_A beta``; delta-free constants dropped."""
    if not delta > 0:
        raise ConfigError(f"delta must be positive, got {delta}")
    pen = _as_penalty(penalty)
    beta = np.asarray(beta, dtype=float)
    if np.any(beta < 0):
        raise ConfigError("beta must be non-negative")
    return 0.5 * pen.p * math.log(delta) - delta * pen.quadratic_form(beta)


def log_posterior(model, beta):
    return log_likelihood(model, beta) + log_prior(model.penalty, model.delta, beta)


def grad_log_posterior(model, beta):
    """Gradient ``K'(y / mu - 1) - 2 delta Omega_A beta``."""
    beta = _check_beta(model, beta)
    y = model.y_vec
    mu = model.K_mat @ beta
    pos = y > 0
    if np.any(mu[pos] <= 0):
        raise NumericalError("gradient undefined: zero expected count in a bin with data")
    ratio = np.zeros_like(mu)
    ratio[pos] = y[pos] / mu[pos]
    return model.K_mat.T @ (ratio - 1.0) - 2.0 * model.delta * (model.omega_a @ beta)


def curvature_log_posterior(model, beta):
    """Diagonal of the Hessian, ``-sum_i K_ik^2 y_i / mu_i^2 - 2 delta Omega_A,kk``."""
    beta = _check_beta(model, beta)
    y = model.y_vec
    mu = model.K_mat @ beta
    pos = y > 0
    if np.any(mu[pos] <= 0):
        raise NumericalError("curvature undefined: zero expected count in a bin with data")
    w = np.zeros_like(mu)
    w[pos] = y[pos] / mu[pos] ** 2
    return -(model.K_mat ** 2).T @ w - 2.0 * model.delta * np.diag(model.omega_a)


def nnls(A, b, max_iter=None, tol=None):
    """Lawson-Hanson active set solution of ``min ||A x - b||_2, x >= 0``.

    Raises :class:`ConvergenceError` carrying the best iterate when the
    iteration cap is hit.
    """
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    m, n = A.shape
    max_iter = 3 * n if max_iter is None else max_iter
    w_scale = np.abs(A.T @ b).max() if b.size else 0.0
    tol = 10 * max(m, n) * np.finfo(float).eps * max(w_scale, 1.0) if tol is None else tol
    x = np.zeros(n)
    passive = np.zeros(n, dtype=bool)
    w = A.T @ (b - A @ x)
    it = 0
    while np.any(~passive) and np.max(np.where(passive, -np.inf, w)) > tol:
        it += 1
        if it > max_iter:
            raise ConvergenceError("NNLS iteration cap exceeded", best=x)
        passive[np.argmax(np.where(passive, -np.inf, w))] = True
        while True:
            z = np.zeros(n)
            z[passive] = np.linalg.lstsq(A[:, passive], b, rcond=None)[0]
            if np.all(z[passive] > 0):
                x = z
                break
            neg = np.flatnonzero(passive & (z <= 0))
            ratios = x[neg] / (x[neg] - z[neg])
            x = x + ratios.min() * (z - x)
            x[neg[np.argmin(ratios)]] = 0.0
            passive &= x > 1e-14 * np.abs(x).max()
            x[~passive] = 0.0
        w = A.T @ (b - A @ x)
    return x


def extend_counts(y, binning, domain):
    """Pad a histogram so that it covers ``domain`` by repeating the edge bins.

    New bins have the width of the outermost original bin (the last one
    clipped to the domain) and carry the outermost count scaled by width.
    """
    y = _as_counts(y)
    edges = list(binning.edges)
    counts = list(y)
    lo, hi = domain
    w_left = edges[1] - edges[0]
    w_right = edges[-1] - edges[-2]
    while edges[0] > lo + 1e-12 * w_left:
        new = max(edges[0] - w_left, lo)
        counts.insert(0, y[0] * (edges[0] - new) / w_left)
        edges.insert(0, new)
    while edges[-1] < hi - 1e-12 * w_right:
        new = min(edges[-1] + w_right, hi)
        counts.append(y[-1] * (new - edges[-1]) / w_right)
        edges.append(new)
    return np.asarray(counts, dtype=float), BinningScheme(np.asarray(edges))


def nnls_init(K_tilde, y):
    """Non-negative least-squares spline fit ``argmin_{beta>=0} ||K~ beta - y||``."""
    A = _as_matrix(K_tilde)
    b = _as_counts(y)
    if A.shape[0] != b.size:
        raise ConfigError(f"{b.size} counts for a design matrix with {A.shape[0]} rows")
    return nnls(A, b)
