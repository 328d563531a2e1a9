"""Smearing kernels, efficiencies and discretization of the folding operator."""

from dataclasses import dataclass, field
import json
import math

import numpy as np
from scipy import special
from scipy.interpolate import RegularGridInterpolator

from .basis import SplineBasis, basis_matrix, gauss_legendre
from .errors import ConfigError, NumericalError

__all__ = [
    "GaussianConvolution",
    "CrystalBall",
    "TabulatedKernel",
    "IdentityKernel",
    "ConstantEfficiency",
    "TabulatedEfficiency",
    "CallableEfficiency",
    "BinningScheme",
    "ResponseMatrix",
    "FullKernel",
    "full_kernel",
    "crystal_ball_pdf",
    "crystal_ball_norm",
    "assemble_response",
    "delta_kernel_response",
    "smeared_means",
    "uniform_binning",
]

_SQRT2 = math.sqrt(2.0)
_SQRT_HALF_PI = math.sqrt(0.5 * math.pi)


# --------------------------------------------------------------------------
# Smearing kernels k_resp(t | s)
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class GaussianConvolution:
    """Additive Gaussian noise, ``k_resp(t|s) = N(t - s | 0, sigma^2)``."""

    sigma: float

    def __post_init__(self):
        if not self.sigma > 0:
            raise ConfigError("Gaussian smearing needs sigma > 0")

    def pdf(self, t, s):
        z = (np.asarray(t) - np.asarray(s)) / self.sigma
        return np.exp(-0.5 * z * z) / (self.sigma * math.sqrt(2.0 * math.pi))

    kinks = ()

    def offset_cdf(self, x):
        return special.ndtr(np.asarray(x) / self.sigma)

    def sample(self, x, rng):
        x = np.asarray(x, dtype=float)
        return x + self.sigma * rng.standard_normal(x.shape)

    def to_dict(self):
        return {"type": "gaussian", "sigma": self.sigma}


def crystal_ball_norm(sigma, alpha, gamma):
    """Normalization constant ``C`` of the Crystal Ball density."""
    if not sigma > 0 or not alpha > 0:
        raise ConfigError("Crystal Ball needs sigma > 0 and alpha > 0")
    if not gamma > 1:
        raise ConfigError("Crystal Ball needs gamma > 1 (power-law tail not normalizable)")
    tail = (gamma / alpha) / (gamma - 1.0) * math.exp(-0.5 * alpha * alpha)
    core = _SQRT_HALF_PI * (1.0 + math.erf(alpha / _SQRT2))
    return 1.0 / (sigma * (tail + core))


def crystal_ball_pdf(x, delta_m, sigma, alpha, gamma):
    """Crystal Ball density: Gaussian core with a power-law left tail."""
    c = crystal_ball_norm(sigma, alpha, gamma)
    z = (np.asarray(x, dtype=float) - delta_m) / sigma
    core = np.exp(-0.5 * z * z)
    a = (gamma / alpha) ** gamma * math.exp(-0.5 * alpha * alpha)
    b = gamma / alpha - alpha
    in_tail = z <= -alpha
    # clip keeps the unused branch finite
    tail = a * np.power(np.where(in_tail, b - z, gamma / alpha), -gamma)
    out = c * np.where(in_tail, tail, core)
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class CrystalBall:
    """Crystal Ball response in the offset ``t - s``."""

    delta_m: float
    sigma: float
    alpha: float
    gamma: float

    def __post_init__(self):
        crystal_ball_norm(self.sigma, self.alpha, self.gamma)

    def pdf(self, t, s):
        return crystal_ball_pdf(np.asarray(t) - np.asarray(s), self.delta_m, self.sigma, self.alpha, self.gamma)

    @property
    def kinks(self):
        return (self.delta_m - self.alpha * self.sigma,)

    def _tail_constants(self):
        sig, al, ga = self.sigma, self.alpha, self.gamma
        c = crystal_ball_norm(sig, al, ga)
        a = (ga / al) ** ga * math.exp(-0.5 * al * al)
        b = ga / al - al
        tail_mass = c * sig * a * (b + al) ** (1.0 - ga) / (ga - 1.0)
        return c, a, b, tail_mass

    def offset_cdf(self, x):
        """Distribution function of the offset ``t - s``."""
        sig, al, ga = self.sigma, self.alpha, self.gamma
        c, a, b, tail_mass = self._tail_constants()
        z = (np.asarray(x, dtype=float) - self.delta_m) / sig
        in_tail = z <= -al
        zt = np.where(in_tail, z, -al)
        tail = c * sig * a * np.power(b - zt, 1.0 - ga) / (ga - 1.0)
        core = tail_mass + c * sig * math.sqrt(2.0 * math.pi) * (special.ndtr(z) - special.ndtr(-al))
        return np.where(in_tail, tail, core)

    def _ppf(self, u):
        sig, al, ga = self.sigma, self.alpha, self.gamma
        c, a, b, tail_mass = self._tail_constants()
        u = np.asarray(u, dtype=float)
        z = np.empty_like(u)
        lo = u <= tail_mass
        # tail: F(z) = C sigma A (B - z)^(1 - gamma) / (gamma - 1)
        z[lo] = b - (u[lo] * (ga - 1.0) / (c * sig * a)) ** (1.0 / (1.0 - ga))
        # core: F(z) = tail_mass + C sigma sqrt(2 pi) (Phi(z) - Phi(-alpha))
        rest = (u[~lo] - tail_mass) / (c * sig * math.sqrt(2.0 * math.pi))
        z[~lo] = special.ndtri(np.clip(special.ndtr(-al) + rest, 0.0, 1.0))
        return self.delta_m + sig * z

    def sample(self, x, rng):
        x = np.asarray(x, dtype=float)
        return x + self._ppf(rng.random(x.shape))

    def to_dict(self):
        return {
            "type": "crystal_ball",
            "delta_m": self.delta_m,
            "sigma": self.sigma,
            "alpha": self.alpha,
            "gamma": self.gamma,
        }


@dataclass(frozen=True, eq=False)
class TabulatedKernel:
    """Density ``k_resp(t|s)`` tabulated on a ``(t, s)`` grid.

    Interpolated bilinearly; zero outside the table.
    """

    t_grid: np.ndarray
    s_grid: np.ndarray
    values: np.ndarray
    _interp: object = field(init=False, repr=False)

    def __post_init__(self):
        t = np.asarray(self.t_grid, dtype=float)
        s = np.asarray(self.s_grid, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if v.shape != (t.size, s.size):
            raise ConfigError("tabulated kernel values must have shape (len(t_grid), len(s_grid))")
        if np.any(v < 0):
            raise ConfigError("tabulated kernel must be non-negative")
        object.__setattr__(self, "t_grid", t)
        object.__setattr__(self, "s_grid", s)
        object.__setattr__(self, "values", v)
        object.__setattr__(
            self,
            "_interp",
            RegularGridInterpolator((t, s), v, method="linear", bounds_error=False, fill_value=0.0),
        )

    def pdf(self, t, s):
        t, s = np.broadcast_arrays(np.asarray(t, dtype=float), np.asarray(s, dtype=float))
        pts = np.stack([t.ravel(), s.ravel()], axis=-1)
        return self._interp(pts).reshape(t.shape)

    def sample(self, x, rng):
        x = np.asarray(x, dtype=float)
        out = np.empty_like(x)
        u = rng.random(x.shape)
        fine_t = np.linspace(self.t_grid[0], self.t_grid[-1], 20 * self.t_grid.size)
        for i, (xi, ui) in enumerate(zip(x, u)):
            dens = self.pdf(fine_t, xi)
            cdf = np.concatenate([[0.0], np.cumsum(0.5 * (dens[1:] + dens[:-1]) * np.diff(fine_t))])
            if cdf[-1] <= 0:
                out[i] = np.nan
                continue
            out[i] = np.interp(ui * cdf[-1], cdf, fine_t)
        return out

    def to_dict(self):
        return {
            "type": "tabulated",
            "t_grid": self.t_grid.tolist(),
            "s_grid": self.s_grid.tolist(),
            "values": self.values.tolist(),
        }


class IdentityKernel:
    """The no-smearing kernel ``delta_0(t - s)``."""

    def sample(self, x, rng):
        return np.array(x, dtype=float)

    def to_dict(self):
        return {"type": "identity"}


# --------------------------------------------------------------------------
# Efficiency
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class ConstantEfficiency:
    value: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.value <= 1.0:
            raise ConfigError("efficiency must lie in [0, 1]")

    def __call__(self, s):
        return np.full(np.shape(s), self.value, dtype=float)

    def to_dict(self):
        return {"type": "constant", "value": self.value}


@dataclass(frozen=True, eq=False)
class TabulatedEfficiency:
    """Efficiency on a grid, linearly interpolated (held constant past the ends)."""

    grid: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        g = np.asarray(self.grid, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if g.shape != v.shape or g.ndim != 1 or not np.all(np.diff(g) > 0):
            raise ConfigError("efficiency grid must be increasing and match values")
        if np.any(v < 0) or np.any(v > 1):
            raise ConfigError("efficiency must lie in [0, 1]")
        object.__setattr__(self, "grid", g)
        object.__setattr__(self, "values", v)

    def __call__(self, s):
        return np.interp(s, self.grid, self.values)

    def to_dict(self):
        return {"type": "tabulated", "grid": self.grid.tolist(), "values": self.values.tolist()}


class CallableEfficiency:
    """Wraps an analytic ``eps(s)``; values are checked to lie in ``[0, 1]``."""

    def __init__(self, func):
        self.func = func

    def __call__(self, s):
        v = np.asarray(self.func(np.asarray(s, dtype=float)), dtype=float)
        if np.any(v < 0) or np.any(v > 1):
            raise ConfigError("efficiency callback returned values outside [0, 1]")
        return np.broadcast_to(v, np.shape(s)).astype(float)

    def to_dict(self):
        return {"type": "callable", "name": getattr(self.func, "__name__", "anonymous")}


# --------------------------------------------------------------------------
# Full kernel k(t, s) = k_resp(t|s) eps(s)
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class FullKernel:
    response: object
    efficiency: object

    @property
    def is_identity(self):
        return isinstance(self.response, IdentityKernel)

    def __call__(self, t, s):
        if self.is_identity:
            raise NumericalError("the identity kernel is a distribution; it cannot be evaluated pointwise")
        return self.response.pdf(t, s) * self.efficiency(s)


def full_kernel(kern, eff=None):
    """Combine a response density and an efficiency into ``k(t, s)``."""
    return FullKernel(kern, ConstantEfficiency(1.0) if eff is None else eff)


# --------------------------------------------------------------------------
# Binning and response matrices
# --------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class BinningScheme:
    edges: np.ndarray

    def __post_init__(self):
        e = np.asarray(self.edges, dtype=float)
        if e.ndim != 1 or e.size < 2 or not np.all(np.diff(e) > 0):
            raise ConfigError("bin edges must be strictly increasing with at least one bin")
        e.setflags(write=False)
        object.__setattr__(self, "edges", e)

    @property
    def n(self):
        return self.edges.size - 1

    @property
    def lower(self):
        return self.edges[:-1]

    @property
    def upper(self):
        return self.edges[1:]

    @property
    def widths(self):
        return np.diff(self.edges)

    @property
    def centers(self):
        return 0.5 * (self.edges[1:] + self.edges[:-1])

    @property
    def span(self):
        return float(self.edges[0]), float(self.edges[-1])

    def __eq__(self, other):
        return isinstance(other, BinningScheme) and np.array_equal(self.edges, other.edges)


def uniform_binning(interval, n):
    lo, hi = interval
    return BinningScheme(np.linspace(float(lo), float(hi), int(n) + 1))


@dataclass(frozen=True, eq=False)
class ResponseMatrix:
    """The ``n x p`` matrix mapping spline coefficients to expected bin counts."""

    K: np.ndarray
    basis: SplineBasis
    binning: BinningScheme
    cond: float = field(init=False)

    def __post_init__(self):
        K = np.array(self.K, dtype=float)
        if K.shape != (self.binning.n, self.basis.p):
            raise ConfigError(f"response shape {K.shape} != ({self.binning.n}, {self.basis.p})")
        K.setflags(write=False)
        object.__setattr__(self, "K", K)
        sv = np.linalg.svd(K, compute_uv=False)
        cond = float(sv[0] / sv[-1]) if sv[-1] > 0 else math.inf
        object.__setattr__(self, "cond", cond)

    @property
    def shape(self):
        return self.K.shape

    def metadata(self):
        return {
            "n": self.binning.n,
            "p": self.basis.p,
            "order": self.basis.order,
            "true_domain": list(self.basis.domain),
            "smeared_domain": list(self.binning.span),
            "breakpoints": self.basis.breakpoints.tolist(),
            "bin_edges": self.binning.edges.tolist(),
            "condition_number": self.cond,
        }

    def to_csv(self, path, meta_path=None):
        """Write ``K`` as CSV and the metadata as a JSON sidecar."""
        np.savetxt(path, self.K, delimiter=",", fmt="%.17g")
        meta_path = meta_path or str(path) + ".json"
        with open(meta_path, "w") as fh:
            json.dump(self.metadata(), fh, indent=2)
        return meta_path

    @classmethod
    def from_csv(cls, path, meta_path=None):
        meta_path = meta_path or str(path) + ".json"
        with open(meta_path) as fh:
            meta = json.load(fh)
        K = np.atleast_2d(np.loadtxt(path, delimiter=","))
        basis = SplineBasis(order=meta["order"], breakpoints=np.asarray(meta["breakpoints"]))
        binning = BinningScheme(np.asarray(meta["bin_edges"]))
        return cls(K.reshape(meta["n"], meta["p"]), basis, binning)


def _refine_check(coarse, fine, rtol):
    scale = np.abs(fine).max() if fine.size else 0.0
    bad = np.abs(coarse - fine) > rtol * np.abs(fine) + 1e-14 * scale
    if np.any(bad):
        i, j = np.argwhere(bad)[0]
        raise NumericalError(
            f"response quadrature not converged at entry ({i}, {j}): "
            f"{coarse[i, j]!r} vs {fine[i, j]!r} after doubling nodes"
        )


def _assemble(basis, binning, kernel, nodes):
    bp = basis.breakpoints
    s_nodes, s_w = gauss_legendre(bp[:-1], bp[1:], nodes)
    t_nodes, t_w = gauss_legendre(binning.lower, binning.upper, nodes)
    B = basis_matrix(basis, s_nodes) * s_w[:, None]
    kts = kernel(t_nodes[:, None], s_nodes[None, :])
    inner = kts @ B
    return (inner * t_w[:, None]).reshape(binning.n, nodes, basis.p).sum(axis=1)


def _assemble_by_cdf(basis, binning, kernel, nodes):
    # t-integral in closed form; s split at knots and wherever a bin edge
    # meets a non-smooth point of the offset density
    resp, eff = kernel.response, kernel.efficiency
    lo, hi = basis.domain
    extra = np.array([e - k for e in binning.edges for k in resp.kinks], dtype=float)
    cuts = np.unique(np.concatenate([basis.breakpoints, extra[(extra > lo) & (extra < hi)]]))
    s, w = gauss_legendre(cuts[:-1], cuts[1:], nodes)
    B = basis_matrix(basis, s) * (w * eff(s))[:, None]
    upper = resp.offset_cdf(binning.upper[:, None] - s[None, :])
    lower = resp.offset_cdf(binning.lower[:, None] - s[None, :])
    return (upper - lower) @ B


def assemble_response(basis, binning, kernel, nodes=16, rtol=1e-6):
    """Discretize ``K_ij = int_{F_i} int_E k(t, s) B_j(s) ds dt``.

    Gauss-Legendre with ``nodes`` points per bin in ``t`` and per knot span
    in ``s``. Translation-invariant responses with a closed-form
    distribution function (Gaussian, Crystal Ball) get the ``t`` integral
    exactly instead. The result is recomputed with twice the nodes and the
    refined matrix is returned once the two agree to ``rtol``.
    """
    if isinstance(kernel, IdentityKernel) or getattr(kernel, "is_identity", False):
        eff = getattr(kernel, "efficiency", None)
        return delta_kernel_response(basis, binning, efficiency=eff)
    if not isinstance(kernel, FullKernel):
        kernel = FullKernel(kernel, ConstantEfficiency(1.0)) if hasattr(kernel, "pdf") else kernel
    if isinstance(kernel, FullKernel) and hasattr(kernel.response, "offset_cdf"):
        build = _assemble_by_cdf
    else:
        build = _assemble
    coarse = build(basis, binning, kernel, nodes)
    fine = build(basis, binning, kernel, 2 * nodes)
    _refine_check(coarse, fine, rtol)
    if np.any(fine < 0):
        fine = np.maximum(fine, 0.0)
    return ResponseMatrix(fine, basis, binning)


def delta_kernel_response(basis, binning, efficiency=None):
    """No-smearing design matrix ``K~_ij = int_{F_i cap E} eps(t) B_j(t) dt``.

    Bins are clipped to the true space. Integration is split at bin edges and
    knots; without an efficiency the integrand is a polynomial of degree
    ``m - 1`` on each piece and the rule is exact.
    """
    lo, hi = basis.domain
    edges = np.clip(binning.edges, lo, hi)
    cuts = np.unique(np.concatenate([edges, basis.breakpoints[(basis.breakpoints > edges[0]) & (basis.breakpoints < edges[-1])]]))
    a, b = cuts[:-1], cuts[1:]
    keep = b > a
    a, b = a[keep], b[keep]
    nodes = max(basis.order, 1) if efficiency is None else 16
    x, w = gauss_legendre(a, b, nodes)
    vals = basis_matrix(basis, x) * w[:, None]
    if efficiency is not None:
        vals *= efficiency(x)[:, None]
    piece_bin = np.searchsorted(edges, 0.5 * (a + b), side="right") - 1
    K = np.zeros((binning.n, basis.p))
    np.add.at(K, np.repeat(piece_bin, nodes), vals)
    return ResponseMatrix(K, basis, binning)


def smeared_means(K, beta):
    """Expected bin counts ``mu = K beta``."""
    Km = K.K if isinstance(K, ResponseMatrix) else np.asarray(K, dtype=float)
    beta = np.asarray(beta, dtype=float)
    if beta.shape != (Km.shape[1],):
        raise ConfigError(f"beta has shape {beta.shape}, expected ({Km.shape[1]},)")
    if np.any(beta < 0):
        raise ConfigError("spline coefficients must be non-negative")
    return Km @ beta
