import numpy as np
import pytest
from scipy import integrate

from ebunfold.basis import (
    SplineBasis,
    basis_matrix,
    curvature_penalty,
    eval_basis,
    eval_intensity,
    make_uniform_basis,
)
from ebunfold.errors import ConfigError

from oracles import clamped_knots, cox_de_boor


@pytest.mark.parametrize(
    "domain, L, m, p",
    [((-7, 7), 26, 4, 30), ((81.5, 98.5), 34, 4, 38), ((0, 1), 0, 1, 1)],
)
def test_dimension(domain, L, m, p):
    assert make_uniform_basis(domain, L, m).p == p


def test_order_one_single_bin_is_constant():
    b = make_uniform_basis((0, 1), 0, 1)
    s = np.linspace(0, 1, 11)
    np.testing.assert_array_equal(basis_matrix(b, s), np.ones((11, 1)))


@pytest.mark.parametrize("bad", [dict(domain=(1, 1), L=3, m=4), dict(domain=(0, 1), L=3, m=0), dict(domain=(0, 1), L=-1, m=4)])
def test_rejects_bad_construction(bad):
    with pytest.raises(ConfigError):
        make_uniform_basis(**bad)


def test_rejects_out_of_domain_and_bad_derivative():
    b = make_uniform_basis((0, 4), 3, 4)
    with pytest.raises(ConfigError):
        eval_basis(b, 4.0 + 1e-9)
    with pytest.raises(ConfigError):
        eval_basis(b, 1.0, deriv=3)


def test_partition_of_unity_and_zero_derivative_sum():
    b = make_uniform_basis((-7, 7), 26, 4)
    s = np.linspace(-7, 7, 1000)
    assert np.max(np.abs(basis_matrix(b, s).sum(axis=1) - 1.0)) < 1e-12
    assert np.max(np.abs(basis_matrix(b, s, deriv=1).sum(axis=1))) < 1e-10


def test_matches_brute_force_recursion():
    b = make_uniform_basis((0, 4), 3, 4)
    knots = clamped_knots(b.breakpoints, 4)
    for s in [0.0, 0.37, 1.0, 2.0, 2.5, 3.999, 4.0]:
        ref = [cox_de_boor(knots, j, 4, s) for j in range(b.p)]
        np.testing.assert_allclose(eval_basis(b, s), ref, atol=1e-12)


def test_local_support():
    b = make_uniform_basis((0, 10), 9, 4)
    s = np.linspace(0, 10, 2001)
    B = basis_matrix(b, s)
    t = b.knots
    for j in range(b.p):
        outside = (s < t[j]) | (s > t[j + 4])
        assert np.all(B[outside, j] == 0.0)
        assert np.all(B[:, j] >= 0.0)


def test_derivatives_match_finite_differences():
    b = make_uniform_basis((0, 4), 3, 4)
    s = np.array([0.3, 1.4, 2.7, 3.6])
    h = 1e-5
    d1 = (basis_matrix(b, s + h) - basis_matrix(b, s - h)) / (2 * h)
    d2 = (basis_matrix(b, s + h) - 2 * basis_matrix(b, s) + basis_matrix(b, s - h)) / h**2
    np.testing.assert_allclose(basis_matrix(b, s, 1), d1, atol=1e-8)
    np.testing.assert_allclose(basis_matrix(b, s, 2), d2, atol=1e-4)


def _coefficients_of(b, f):
    # interpolate f at Greville abscissae; exact for polynomials of degree < m
    t = b.knots
    m = b.order
    grev = np.array([t[j + 1:j + m].mean() for j in range(b.p)])
    return np.linalg.solve(basis_matrix(b, grev), f(grev))


def test_penalty_null_space_contains_affine_functions():
    b = make_uniform_basis((-7, 7), 26, 4)
    pen = curvature_penalty(b, 5, 5)
    for f in (lambda s: np.ones_like(s), lambda s: s):
        beta = _coefficients_of(b, f)
        assert abs(beta @ pen.omega @ beta) < 1e-10 * np.abs(pen.omega).max() * beta @ beta


def test_penalty_matches_adaptive_quadrature():
    b = make_uniform_basis((0, 3), 2, 4)
    assert b.p == 6
    pen = curvature_penalty(b, 1, 1)
    bp = b.breakpoints

    def d2(j, s):
        return basis_matrix(b, np.array([s]), 2)[0, j]

    for i in range(b.p):
        for j in range(i, b.p):
            ref = sum(
                integrate.quad(lambda s: d2(i, s) * d2(j, s), lo, hi, epsabs=1e-13, epsrel=1e-13)[0]
                for lo, hi in zip(bp[:-1], bp[1:])
            )
            assert abs(pen.omega[i, j] - ref) < 1e-10


def test_penalty_structure():
    b = make_uniform_basis((-7, 7), 26, 4)
    pen = curvature_penalty(b, 5, 5)
    ev = np.linalg.eigvalsh(pen.omega)
    assert np.sum(ev < 1e-9 * ev.max()) == 2
    assert np.linalg.eigvalsh(pen.omega_a)[0] > 0
    np.testing.assert_array_equal(pen.omega, pen.omega.T)
    i, j = np.indices(pen.omega.shape)
    assert np.all(pen.omega[np.abs(i - j) >= 4] == 0)
    assert pen.omega_a[0, 0] - pen.omega[0, 0] == pytest.approx(5)
    assert pen.omega_a[-1, -1] - pen.omega[-1, -1] == pytest.approx(5)


def test_penalty_invariant_under_node_doubling():
    b = make_uniform_basis((81.5, 98.5), 34, 4)
    a = curvature_penalty(b, 70, 70)
    c = curvature_penalty(b, 70, 70, nodes_per_span=8)
    scale = np.abs(a.omega).max()
    assert np.max(np.abs(a.omega - c.omega)) < 1e-12 * scale


def test_omega_a_positive_definite_for_small_gammas():
    b = make_uniform_basis((0, 1), 10, 4)
    for g in (1e-6, 1e-2, 1.0, 100.0):
        assert np.linalg.eigvalsh(curvature_penalty(b, g, g).omega_a)[0] > 0


def test_penalty_rejects_low_order():
    with pytest.raises(ConfigError, match="penalty undefined for order < 3"):
        curvature_penalty(make_uniform_basis((0, 1), 3, 2), 1, 1)


def test_eval_intensity(rng):
    b = make_uniform_basis((-7, 7), 26, 4)
    grid = np.linspace(-7, 7, 57)
    assert np.all(eval_intensity(b, np.zeros(b.p), grid) == 0)
    np.testing.assert_allclose(eval_intensity(b, np.full(b.p, 3.5), grid), 3.5, rtol=1e-13)
    beta = rng.uniform(0, 10, b.p)
    mids = 0.5 * (b.breakpoints[1:] + b.breakpoints[:-1])
    direct = np.array([sum(beta[j] * eval_basis(b, s)[j] for j in range(b.p)) for s in mids])
    np.testing.assert_allclose(eval_intensity(b, beta, mids), direct, rtol=1e-13)
    with pytest.raises(ConfigError):
        eval_intensity(b, beta[:-1], grid)


def test_integrals_match_quadrature():
    b = make_uniform_basis((0, 5), 4, 4)
    for j in range(b.p):
        ref = integrate.quad(lambda s: eval_basis(b, s)[j], 0, 5, points=list(b.breakpoints), epsabs=1e-13)[0]
        assert b.integrals()[j] == pytest.approx(ref, abs=1e-12)


def test_basis_is_hashable_and_immutable():
    b = make_uniform_basis((0, 1), 3, 4)
    assert b == SplineBasis(4, np.linspace(0, 1, 5))
    assert len({b, make_uniform_basis((0, 1), 3, 4)}) == 1
    with pytest.raises(ValueError):
        b.knots[0] = 1.0
