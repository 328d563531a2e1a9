"""B-spline bases on the true space and their curvature penalties."""

from dataclasses import dataclass, field
import math

import numpy as np

from .errors import ConfigError

__all__ = [
    "SplineBasis",
    "PenaltyMatrix",
    "make_uniform_basis",
    "eval_basis",
    "basis_matrix",
    "curvature_penalty",
    "eval_intensity",
    "gauss_legendre",
]


def gauss_legendre(a, b, n):
    """Gauss-Legendre nodes and weights for each interval ``[a[i], b[i]]``.

    Returns flat arrays of nodes and weights with ``n`` entries per interval,
    ordered interval by interval.
    """
    x, w = np.polynomial.legendre.leggauss(n)
    a = np.atleast_1d(np.asarray(a, dtype=float))
    b = np.atleast_1d(np.asarray(b, dtype=float))
    half = 0.5 * (b - a)
    mid = 0.5 * (b + a)
    nodes = mid[:, None] + half[:, None] * x[None, :]
    weights = half[:, None] * w[None, :]
    return nodes.ravel(), weights.ravel()


@dataclass(frozen=True)
class SplineBasis:
    """Clamped order-``m`` B-spline basis with ``L`` interior knots.

    Attributes
    ----------
    order : int
        Spline order ``m`` (polynomial degree ``m - 1``).
    breakpoints : numpy.ndarray
        Distinct knots ``s_0 < s_1 < ... < s_{L+1}``; the first and last are
        the domain endpoints.
    """

    order: int
    breakpoints: np.ndarray
    knots: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        bp = np.asarray(self.breakpoints, dtype=float)
        if self.order < 1:
            raise ConfigError(f"spline order must be >= 1, got {self.order}")
        if bp.ndim != 1 or bp.size < 2 or not np.all(np.diff(bp) > 0):
            raise ConfigError("breakpoints must be strictly increasing with at least two entries")
        bp.setflags(write=False)
        object.__setattr__(self, "breakpoints", bp)
        knots = np.concatenate(
            [np.full(self.order - 1, bp[0]), bp, np.full(self.order - 1, bp[-1])]
        )
        knots.setflags(write=False)
        object.__setattr__(self, "knots", knots)

    @property
    def n_interior(self):
        return self.breakpoints.size - 2

    @property
    def p(self):
        return self.n_interior + self.order

    @property
    def domain(self):
        return float(self.breakpoints[0]), float(self.breakpoints[-1])

    def integrals(self):
        """Exact integrals of each basis function over the domain."""
        # standard identity: int B_j = (t_{j+m} - t_j) / m
        t = self.knots
        m = self.order
        return (t[m:] - t[:-m]) / m

    def __eq__(self, other):
        return (
            isinstance(other, SplineBasis)
            and self.order == other.order
            and np.array_equal(self.breakpoints, other.breakpoints)
        )

    def __hash__(self):
        return hash((self.order, self.breakpoints.tobytes()))


def make_uniform_basis(domain, L, m=4):
    """Clamped B-spline basis with ``L`` uniformly spaced interior knots."""
    lo, hi = (float(v) for v in domain)
    if not (math.isfinite(lo) and math.isfinite(hi)) or hi <= lo:
        raise ConfigError(f"degenerate domain [{lo}, {hi}]")
    if L < 0:
        raise ConfigError(f"number of interior knots must be >= 0, got {L}")
    if m < 1:
        raise ConfigError(f"spline order must be >= 1, got {m}")
    return SplineBasis(order=int(m), breakpoints=np.linspace(lo, hi, int(L) + 2))


def _divide(num, den):
    # 0/0 terms of the recursion are defined as 0 (repeated knots)
    out = np.zeros(np.broadcast_shapes(np.shape(num), np.shape(den)))
    np.divide(num, den, out=out, where=np.broadcast_to(den, out.shape) != 0)
    return out


def _order_tables(knots, m, x):
    """Cox-de Boor tables of all orders ``1..m`` at points ``x``."""
    t = knots
    nt = t.size
    n_pts = x.size
    span = np.searchsorted(t, x, side="right") - 1
    span = np.clip(span, m - 1, nt - m - 1)
    b = np.zeros((n_pts, nt - 1))
    b[np.arange(n_pts), span] = 1.0
    tables = {1: b}
    xc = x[:, None]
    for k in range(2, m + 1):
        nb = nt - k
        prev = tables[k - 1]
        left = _divide(xc - t[:nb], t[k - 1:k - 1 + nb] - t[:nb]) * prev[:, :nb]
        right = _divide(t[k:k + nb] - xc, t[k:k + nb] - t[1:1 + nb]) * prev[:, 1:nb + 1]
        tables[k] = left + right
    return tables


def _derivative(tables, knots, order, deriv):
    """Derivative of order ``deriv`` of the order-``order`` basis functions."""
    if deriv == 0:
        return tables[order]
    if order == 1:
        return np.zeros_like(tables[1])
    t = knots
    nb = t.size - order
    lower = _derivative(tables, knots, order - 1, deriv - 1)
    left = _divide(lower[:, :nb], t[order - 1:order - 1 + nb] - t[:nb])
    right = _divide(lower[:, 1:nb + 1], t[order:order + nb] - t[1:1 + nb])
    return (order - 1) * (left - right)


def basis_matrix(basis, s, deriv=0):
    """Matrix of shape ``(len(s), p)`` with ``B_j^{(deriv)}(s_i)``."""
    s = np.atleast_1d(np.asarray(s, dtype=float))
    if deriv not in (0, 1, 2):
        raise ConfigError(f"deriv must be 0, 1 or 2, got {deriv}")
    lo, hi = basis.domain
    if s.size and (np.any(s < lo) or np.any(s > hi) or np.any(np.isnan(s))):
        raise ConfigError(f"evaluation points outside the domain [{lo}, {hi}]")
    tables = _order_tables(basis.knots, basis.order, s)
    return _derivative(tables, basis.knots, basis.order, deriv)


def eval_basis(basis, s, deriv=0):
    """Values ``(B_1^{(deriv)}(s), ..., B_p^{(deriv)}(s))`` at a single point."""
    return basis_matrix(basis, np.array([float(s)]), deriv)[0]


@dataclass(frozen=True)
class PenaltyMatrix:
    """Curvature penalty ``omega`` and its boundary-augmented version ``omega_a``."""

    omega: np.ndarray
    omega_a: np.ndarray
    gamma_l: float
    gamma_r: float

    @property
    def p(self):
        return self.omega_a.shape[0]

    def quadratic_form(self, beta):
        beta = np.asarray(beta, dtype=float)
        return float(beta @ self.omega_a @ beta)

    @classmethod
    def from_matrix(cls, omega_a):
        """Wrap an explicit positive definite matrix (no boundary split)."""
        omega_a = np.array(omega_a, dtype=float)
        if omega_a.ndim != 2 or omega_a.shape[0] != omega_a.shape[1]:
            raise ConfigError("penalty must be a square matrix")
        if not np.allclose(omega_a, omega_a.T):
            raise ConfigError("penalty must be symmetric")
        if np.linalg.eigvalsh(omega_a)[0] <= 0:
            raise ConfigError("penalty must be positive definite")
        omega_a.setflags(write=False)
        return cls(omega=omega_a, omega_a=omega_a, gamma_l=0.0, gamma_r=0.0)


def _penalty_omega(basis, nodes_per_span):
    bp = basis.breakpoints
    s, w = gauss_legendre(bp[:-1], bp[1:], nodes_per_span)
    d2 = basis_matrix(basis, s, deriv=2)
    omega = (d2 * w[:, None]).T @ d2
    return 0.5 * (omega + omega.T)


def curvature_penalty(basis, gamma_l, gamma_r, nodes_per_span=None):
    """Exact ``Omega_ij = int B_i'' B_j''`` plus boundary terms on the corners.

    The integrand is a polynomial of degree ``2m - 6`` on each knot span, so
    ``ceil((2m - 5) / 2) + 1`` Gauss-Legendre nodes per span integrate it
    exactly.
    """
    m = basis.order
    if m < 3:
        raise ConfigError("penalty undefined for order < 3")
    if not (gamma_l > 0 and gamma_r > 0):
        raise ConfigError("gamma_l and gamma_r must be positive")
    if nodes_per_span is None:
        nodes_per_span = math.ceil((2 * m - 5) / 2) + 1
    omega = _penalty_omega(basis, nodes_per_span)
    omega_a = omega.copy()
    omega_a[0, 0] += gamma_l
    omega_a[-1, -1] += gamma_r
    omega.setflags(write=False)
    omega_a.setflags(write=False)
    return PenaltyMatrix(omega=omega, omega_a=omega_a, gamma_l=float(gamma_l), gamma_r=float(gamma_r))


def eval_intensity(basis, beta, grid):
    """Evaluate ``f(s) = sum_j beta_j B_j(s)`` on ``grid``."""
    beta = np.asarray(beta, dtype=float)
    if beta.shape != (basis.p,):
        raise ConfigError(f"beta has shape {beta.shape}, expected ({basis.p},)")
    return basis_matrix(basis, grid) @ beta
