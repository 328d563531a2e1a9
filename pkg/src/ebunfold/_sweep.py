"""Single-site Metropolis-Hastings sweeps over the spline coefficients.

Each coordinate update builds a Gaussian approximation of its full
conditional from a second-order Taylor expansion of the log-likelihood plus
the exact quadratic prior term. A non-negative approximate mean gives a
Gaussian proposal truncated to ``[0, inf)``; a negative mean gives an
exponential proposal whose rate is the slope of the approximation at zero.

Two interchangeable implementations consume the same uniforms ``u`` of shape
``(n_sweeps, p, 2)``: ``_sweeps_loop`` (explicit loops, compiled by numba
when available) and ``_sweeps_numpy`` (vectorized over bins).
"""

import math

import numpy as np

from ._accel import _HAS_NUMBA, jit

_SQRT2 = math.sqrt(2.0)
_SQRT_2PI = math.sqrt(2.0 * math.pi)
_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)


@jit
def norm_cdf(x):
    return 0.5 * math.erfc(-x / _SQRT2)


@jit
def ndtri(p):
    """Standard normal quantile (rational start plus one Halley step)."""
    if p <= 0.0:
        return -math.inf
    if p >= 1.0:
        return math.inf
    if p < 0.02425:
        q = math.sqrt(-2.0 * math.log(p))
        x = (((((-7.784894002430293e-03 * q - 3.223964580411365e-01) * q - 2.400758277161838e+00) * q
               - 2.549732539343734e+00) * q + 4.374664141464968e+00) * q + 2.938163982698783e+00) / \
            ((((7.784695709041462e-03 * q + 3.224671290700398e-01) * q + 2.445134137142996e+00) * q
              + 3.754408661907416e+00) * q + 1.0)
    elif p <= 1.0 - 0.02425:
        q = p - 0.5
        r = q * q
        x = (((((-3.969683028665376e+01 * r + 2.209460984245205e+02) * r - 2.759285104469687e+02) * r
               + 1.383577518672690e+02) * r - 3.066479806614716e+01) * r + 2.506628277459239e+00) * q / \
            (((((-5.447609879822406e+01 * r + 1.615858368580409e+02) * r - 1.556989798598866e+02) * r
               + 6.680131188771972e+01) * r - 1.328068155288572e+01) * r + 1.0)
    else:
        q = math.sqrt(-2.0 * math.log1p(-p))
        x = -(((((-7.784894002430293e-03 * q - 3.223964580411365e-01) * q - 2.400758277161838e+00) * q
                - 2.549732539343734e+00) * q + 4.374664141464968e+00) * q + 2.938163982698783e+00) / \
            ((((7.784695709041462e-03 * q + 3.224671290700398e-01) * q + 2.445134137142996e+00) * q
              + 3.754408661907416e+00) * q + 1.0)
    e = norm_cdf(x) - p
    u = e * _SQRT_2PI * math.exp(0.5 * x * x)
    return x - u / (1.0 + 0.5 * x * u)


@jit
def proposal_params(b0, d1, d2, a, c, delta):
    """Mean and precision of the Gaussian approximation at ``b0``."""
    prec = -d2 + 2.0 * delta * a
    mean = (d1 - d2 * b0 - 2.0 * delta * c) / prec
    return mean, prec


@jit
def proposal_draw(mean, prec, u):
    if mean >= 0.0:
        sd = 1.0 / math.sqrt(prec)
        w = ndtri((1.0 - u) * norm_cdf(mean / sd))
        return max(mean - sd * w, 0.0)
    rate = -prec * mean
    return -math.log1p(-u) / rate


@jit
def proposal_logpdf(b, mean, prec):
    if mean >= 0.0:
        sd = 1.0 / math.sqrt(prec)
        z = (b - mean) / sd
        return -0.5 * z * z - math.log(sd) - _LOG_SQRT_2PI - math.log(norm_cdf(mean / sd))
    rate = -prec * mean
    return math.log(rate) - rate * b


@jit
def _sweeps_loop(Kt, y, omega_a, delta, beta, u, n_burn, draws, accepts, alpha_sum):
    p, n = Kt.shape
    n_sweeps = u.shape[0]
    mu = np.zeros(n)
    g = np.zeros(p)
    for j in range(p):
        for i in range(n):
            mu[i] += Kt[j, i] * beta[j]
        for l in range(p):
            g[l] += omega_a[l, j] * beta[j]
    for sw in range(n_sweeps):
        for k in range(p):
            b0 = beta[k]
            a = omega_a[k, k]
            c = g[k] - a * b0
            d1 = 0.0
            d2 = 0.0
            for i in range(n):
                kik = Kt[k, i]
                if kik == 0.0:
                    continue
                if y[i] > 0.0:
                    r = y[i] / mu[i]
                    d1 += kik * (r - 1.0)
                    d2 -= kik * kik * r / mu[i]
                else:
                    d1 -= kik
            mean, prec = proposal_params(b0, d1, d2, a, c, delta)
            if not prec > 0.0:
                raise ValueError("non-positive proposal precision")
            b1 = proposal_draw(mean, prec, u[sw, k, 0])
            step = b1 - b0
            feasible = True
            dll = 0.0
            e1 = 0.0
            e2 = 0.0
            for i in range(n):
                kik = Kt[k, i]
                if kik == 0.0:
                    continue
                m1 = mu[i] + kik * step
                if y[i] > 0.0:
                    if m1 <= 0.0:
                        feasible = False
                        break
                    r = y[i] / m1
                    dll += y[i] * math.log1p(kik * step / mu[i]) - kik * step
                    e1 += kik * (r - 1.0)
                    e2 -= kik * kik * r / m1
                else:
                    dll -= kik * step
                    e1 -= kik
            alpha = 0.0
            if feasible:
                mean_r, prec_r = proposal_params(b1, e1, e2, a, c, delta)
                log_alpha = (dll - delta * (a * (b1 * b1 - b0 * b0) + 2.0 * c * step)
                             + proposal_logpdf(b0, mean_r, prec_r) - proposal_logpdf(b1, mean, prec))
                alpha = 1.0 if log_alpha >= 0.0 else math.exp(log_alpha)
                if u[sw, k, 1] < alpha:
                    beta[k] = b1
                    for i in range(n):
                        mu[i] += Kt[k, i] * step
                    for l in range(p):
                        g[l] += omega_a[l, k] * step
                    if sw >= n_burn:
                        accepts[k] += 1
            if sw >= n_burn:
                alpha_sum[k] += alpha
        # refresh running sums against drift
        for i in range(n):
            mu[i] = 0.0
        for l in range(p):
            g[l] = 0.0
        for j in range(p):
            for i in range(n):
                mu[i] += Kt[j, i] * beta[j]
            for l in range(p):
                g[l] += omega_a[l, j] * beta[j]
        if sw >= n_burn:
            for j in range(p):
                draws[sw - n_burn, j] = beta[j]


def _py(func):
    return getattr(func, "py_func", func)


def _sweeps_numpy(Kt, y, omega_a, delta, beta, u, n_burn, draws, accepts, alpha_sum):
    params = _py(proposal_params)
    draw = _py(proposal_draw)
    logpdf = _py(proposal_logpdf)
    p, n = Kt.shape
    support = [np.flatnonzero(Kt[k]) for k in range(p)]
    cols = [Kt[k, idx] for k, idx in enumerate(support)]
    ys = [y[idx] for idx in support]
    mu = Kt.T @ beta
    g = omega_a @ beta
    for sw in range(u.shape[0]):
        for k in range(p):
            idx, col, yk = support[k], cols[k], ys[k]
            pos = yk > 0
            b0 = beta[k]
            a = omega_a[k, k]
            c = g[k] - a * b0
            mk = mu[idx]
            r = np.where(pos, yk / np.where(pos, mk, 1.0), 0.0)
            d1 = float(np.sum(col * (r - 1.0)))
            d2 = -float(np.sum(col * col * r / np.where(pos, mk, 1.0)))
            mean, prec = params(b0, d1, d2, a, c, delta)
            if not prec > 0.0:
                raise ValueError("non-positive proposal precision")
            b1 = draw(mean, prec, u[sw, k, 0])
            step = b1 - b0
            m1 = mk + col * step
            alpha = 0.0
            if not np.any(m1[pos] <= 0.0):
                r1 = np.where(pos, yk / np.where(pos, m1, 1.0), 0.0)
                e1 = float(np.sum(col * (r1 - 1.0)))
                e2 = -float(np.sum(col * col * r1 / np.where(pos, m1, 1.0)))
                ratio = np.where(pos, col * step / np.where(pos, mk, 1.0), 0.0)
                dll = float(np.sum(yk * np.log1p(ratio)) - step * col.sum())
                mean_r, prec_r = params(b1, e1, e2, a, c, delta)
                log_alpha = (dll - delta * (a * (b1 * b1 - b0 * b0) + 2.0 * c * step)
                             + logpdf(b0, mean_r, prec_r) - logpdf(b1, mean, prec))
                alpha = 1.0 if log_alpha >= 0.0 else math.exp(log_alpha)
                if u[sw, k, 1] < alpha:
                    beta[k] = b1
                    mu[idx] = m1
                    g += omega_a[:, k] * step
                    if sw >= n_burn:
                        accepts[k] += 1
            if sw >= n_burn:
                alpha_sum[k] += alpha
        mu = Kt.T @ beta
        g = omega_a @ beta
        if sw >= n_burn:
            draws[sw - n_burn] = beta


def run_sweeps(K, y, omega_a, delta, beta0, u, n_burn, backend=None):
    """Run ``u.shape[0]`` sweeps from ``beta0``; record those after ``n_burn``.

    Returns ``(draws, accepts, alpha_sum)``.
    """
    if backend is None:
        backend = "numba" if _HAS_NUMBA else "numpy"
    if backend not in ("numba", "numpy"):
        raise ValueError(f"unknown backend {backend!r}")
    if backend == "numba" and not _HAS_NUMBA:
        raise RuntimeError("numba backend requested but numba is disabled or missing")
    Kt = np.ascontiguousarray(np.asarray(K, dtype=float).T)
    p = Kt.shape[0]
    y = np.ascontiguousarray(y, dtype=float)
    omega_a = np.ascontiguousarray(omega_a, dtype=float)
    beta = np.array(beta0, dtype=float)
    u = np.ascontiguousarray(u, dtype=float)
    n_rec = u.shape[0] - n_burn
    draws = np.empty((n_rec, p))
    accepts = np.zeros(p, dtype=np.int64)
    alpha_sum = np.zeros(p)
    kernel = _sweeps_loop if backend == "numba" else _sweeps_numpy
    kernel(Kt, y, omega_a, float(delta), beta, u, int(n_burn), draws, accepts, alpha_sum)
    return draws, accepts, alpha_sum
