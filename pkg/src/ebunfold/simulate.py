"""Synthetic Poisson point process data and the two reference intensities."""

from dataclasses import dataclass
import math

import numpy as np
from scipy import special

from .basis import SplineBasis, eval_intensity
from .errors import ConfigError
from .forward import BinningScheme

__all__ = [
    "make_rng",
    "GaussianMixture",
    "BreitWigner",
    "SplineIntensity",
    "BinnedCounts",
    "sample_process",
    "thin_and_smear",
    "bin_points",
    "binomial_split",
    "gmm_two_peaks",
]


def make_rng(seed, *keys):
    """Independent generator for the stream identified by ``(seed, *keys)``.

    ``seed`` may itself be a tuple ``(master, *keys)``.
    """
    if isinstance(seed, np.random.Generator):
        return seed
    if isinstance(seed, (tuple, list)):
        seed, keys = seed[0], tuple(seed[1:]) + keys
    spawn_key = tuple(int(k) for k in keys)
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=spawn_key))


@dataclass(frozen=True)
class GaussianMixture:
    """``lambda_tot * (sum_k pi_k N(s | mean_k, var_k) + pi_u / |E|)`` on ``E``.

    Gaussian components are not renormalized to ``E``; the process is the
    restriction to ``E`` of the mixture on the real line.
    """

    lambda_tot: float
    components: tuple
    uniform_weight: float
    domain: tuple

    def __post_init__(self):
        w = sum(c[0] for c in self.components) + self.uniform_weight
        if abs(w - 1.0) > 1e-12:
            raise ConfigError(f"mixture weights sum to {w}, not 1")
        if self.lambda_tot < 0:
            raise ConfigError("lambda_tot must be non-negative")
        if any(c[2] <= 0 for c in self.components):
            raise ConfigError("component variances must be positive")
        lo, hi = self.domain
        if hi <= lo:
            raise ConfigError("degenerate domain")
        object.__setattr__(self, "components", tuple(tuple(float(v) for v in c) for c in self.components))
        object.__setattr__(self, "domain", (float(lo), float(hi)))

    @property
    def weights(self):
        return np.array([c[0] for c in self.components] + [self.uniform_weight])

    def intensity(self, s):
        s = np.asarray(s, dtype=float)
        lo, hi = self.domain
        out = np.full(s.shape, self.uniform_weight / (hi - lo))
        for w, mean, var in self.components:
            sd = math.sqrt(var)
            out = out + w * np.exp(-0.5 * ((s - mean) / sd) ** 2) / (sd * math.sqrt(2 * math.pi))
        return self.lambda_tot * out

    def expected_count(self):
        """``int_E f``, slightly below ``lambda_tot`` by the Gaussian tail mass outside ``E``."""
        lo, hi = self.domain
        mass = self.uniform_weight
        for w, mean, var in self.components:
            sd = math.sqrt(var)
            mass += w * (special.ndtr((hi - mean) / sd) - special.ndtr((lo - mean) / sd))
        return self.lambda_tot * mass

    def sample_labeled(self, rng, size):
        """Draw ``size`` mixture points on the real line with component labels.

        The label ``len(components)`` marks the uniform background.
        """
        lo, hi = self.domain
        labels = rng.choice(len(self.components) + 1, size=size, p=self.weights)
        x = np.empty(size)
        bg = labels == len(self.components)
        x[bg] = rng.uniform(lo, hi, bg.sum())
        for k, (_, mean, var) in enumerate(self.components):
            sel = labels == k
            x[sel] = mean + math.sqrt(var) * rng.standard_normal(sel.sum())
        return x, labels

    def sample_points(self, rng):
        # Poisson(lambda_tot) on the line restricted to E is the process with
        # intensity f on E
        tau = rng.poisson(self.lambda_tot)
        x, _ = self.sample_labeled(rng, tau)
        lo, hi = self.domain
        return x[(x >= lo) & (x <= hi)]


@dataclass(frozen=True)
class BreitWigner:
    """Cauchy line shape truncated to ``E`` with ``lambda_tot`` expected points in ``E``."""

    lambda_tot: float
    m_z: float = 91.1876
    width: float = 2.4952
    domain: tuple = (81.5, 98.5)

    def __post_init__(self):
        if self.lambda_tot < 0 or self.width <= 0:
            raise ConfigError("need lambda_tot >= 0 and width > 0")
        lo, hi = self.domain
        if hi <= lo:
            raise ConfigError("degenerate domain")

    def _cdf(self, m):
        return 0.5 + np.arctan((np.asarray(m) - self.m_z) / (0.5 * self.width)) / math.pi

    def mass_in_domain(self):
        lo, hi = self.domain
        return float(self._cdf(hi) - self._cdf(lo))

    def intensity(self, s):
        s = np.asarray(s, dtype=float)
        g = self.width
        dens = g / (2 * math.pi) / ((s - self.m_z) ** 2 + 0.25 * g * g)
        return self.lambda_tot * dens / self.mass_in_domain()

    def expected_count(self):
        return float(self.lambda_tot)

    def sample_points(self, rng):
        tau = rng.poisson(self.lambda_tot)
        lo, hi = self.domain
        u = rng.uniform(self._cdf(lo), self._cdf(hi), tau)
        return self.m_z + 0.5 * self.width * np.tan(math.pi * (u - 0.5))


@dataclass(frozen=True)
class SplineIntensity:
    basis: SplineBasis
    beta: np.ndarray

    def __post_init__(self):
        beta = np.asarray(self.beta, dtype=float)
        if beta.shape != (self.basis.p,) or np.any(beta < 0):
            raise ConfigError("spline intensity needs p non-negative coefficients")
        object.__setattr__(self, "beta", beta)

    @property
    def domain(self):
        return self.basis.domain

    def intensity(self, s):
        return eval_intensity(self.basis, self.beta, s)

    def expected_count(self):
        return float(self.basis.integrals() @ self.beta)

    def sample_points(self, rng):
        tau = rng.poisson(self.expected_count())
        lo, hi = self.domain
        bound = self.beta.max() if self.beta.size else 0.0
        out = []
        n_left = tau
        while n_left > 0:
            cand = rng.uniform(lo, hi, 2 * n_left + 16)
            keep = rng.uniform(0.0, bound, cand.size) < self.intensity(cand)
            acc = cand[keep][:n_left]
            out.append(acc)
            n_left -= acc.size
        return np.concatenate(out) if out else np.empty(0)


def gmm_two_peaks(lambda_tot, domain=(-7.0, 7.0)):
    """Two Gaussian peaks on a uniform background."""
    return GaussianMixture(
        lambda_tot=float(lambda_tot),
        components=((0.2, -2.0, 1.0), (0.5, 2.0, 1.0)),
        uniform_weight=0.3,
        domain=tuple(domain),
    )


@dataclass(frozen=True, eq=False)
class BinnedCounts:
    y: np.ndarray
    binning: BinningScheme

    def __post_init__(self):
        y = np.asarray(self.y)
        if y.shape != (self.binning.n,):
            raise ConfigError(f"{y.size} counts for {self.binning.n} bins")
        if np.any(y < 0) or np.any(y != np.round(y)):
            raise ConfigError("counts must be non-negative integers")
        y = y.astype(np.int64)
        y.setflags(write=False)
        object.__setattr__(self, "y", y)

    @property
    def total(self):
        return int(self.y.sum())


def sample_process(model, rng_seed):
    """True points ``X_1..X_tau`` of the Poisson process with intensity ``model``."""
    rng = make_rng(rng_seed)
    if model.expected_count() <= 0:
        return np.empty(0)
    return np.asarray(model.sample_points(rng), dtype=float)


def thin_and_smear(points, eff, kern, F, rng_seed):
    """Thin by ``eff``, smear survivors with ``kern`` and drop those outside ``F``."""
    rng = make_rng(rng_seed)
    x = np.asarray(points, dtype=float)
    keep = rng.random(x.shape) < eff(x)
    y = kern.sample(x[keep], rng)
    lo, hi = F
    return y[(y >= lo) & (y <= hi)]


def bin_points(points, binning):
    """Histogram on half-open bins ``[t_{i-1}, t_i)``, the last bin closed."""
    pts = np.asarray(points, dtype=float)
    lo, hi = binning.span
    if pts.size and (pts.min() < lo or pts.max() > hi or np.isnan(pts).any()):
        raise ConfigError("points outside the binning range; filter them first")
    idx = np.searchsorted(binning.edges, pts, side="right") - 1
    idx = np.minimum(idx, binning.n - 1)
    return BinnedCounts(np.bincount(idx, minlength=binning.n), binning)


def binomial_split(y, keep_prob, rng_seed):
    """Split each bin count as ``Binomial(y_i, keep_prob)`` plus remainder."""
    if not 0.0 <= keep_prob <= 1.0:
        raise ConfigError("keep_prob must lie in [0, 1]")
    rng = make_rng(rng_seed)
    first = rng.binomial(y.y, keep_prob)
    return BinnedCounts(first, y.binning), BinnedCounts(y.y - first, y.binning)
