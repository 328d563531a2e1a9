import csv
import math

import numpy as np
import pytest
from scipy import integrate

from ebunfold.basis import PenaltyMatrix
from ebunfold.errors import ConfigError, NumericalError
from ebunfold.mcem import McemConfig, m_step, mcem_fit, q_tilde
from ebunfold.posterior import PosteriorModel, log_prior
from ebunfold.sampler import SamplerConfig, sample_posterior

from oracles import golden_section_max, q_tilde_extended

TOY_Y = np.array([5.0, 7.0])
TOY_OMEGA = np.array([[1.0, -0.4], [-0.4, 1.0]])


def toy_log_marginal(delta, upper=60.0, n=1201):
    """``log p(y | delta)`` up to a delta-free constant, by 2-D Simpson."""
    g = np.linspace(0.0, upper, n)
    b1, b2 = np.meshgrid(g, g, indexing="ij")
    with np.errstate(divide="ignore"):
        ll = TOY_Y[0] * np.log(b1) - b1 + TOY_Y[1] * np.log(b2) - b2
    q = TOY_OMEGA[0, 0] * b1**2 + 2 * TOY_OMEGA[0, 1] * b1 * b2 + TOY_OMEGA[1, 1] * b2**2
    f = np.exp(ll - delta * q)
    f[~np.isfinite(ll)] = 0.0
    # the prior normalizer on the positive quadrant scales as delta^(p/2)
    return math.log(integrate.simpson(integrate.simpson(f, x=g, axis=1), x=g)) + math.log(delta)


def _random_penalty(rng, p):
    A = rng.normal(size=(p, p))
    return A @ A.T + p * np.eye(p)


def test_single_draw_closed_form():
    om = np.diag([1.0, 2.0, 3.0])
    beta = np.array([1.0, 1.0, 2.0])
    q = beta @ om @ beta
    assert m_step(beta[None, :], om) == pytest.approx(3 / (2 * q), rel=1e-15)


def test_m_step_matches_golden_section(rng):
    for _ in range(10):
        p = int(rng.integers(2, 8))
        om = _random_penalty(rng, p)
        draws = rng.uniform(0, 100, (int(rng.integers(1, 50)), p))
        d = m_step(draws, om)
        x = golden_section_max(lambda ld: q_tilde_extended(ld, draws, om), math.log(d) - 10, math.log(d) + 10, tol=1e-15)
        assert math.exp(x) == pytest.approx(d, rel=1e-8)


def test_m_step_homogeneity(rng):
    om = _random_penalty(rng, 4)
    draws = rng.uniform(0, 5, (20, 4))
    assert m_step(3.0 * draws, om) == pytest.approx(m_step(draws, om) / 9.0, rel=1e-13)


def test_q_tilde_composition_and_optimality(rng):
    om = _random_penalty(rng, 5)
    draws = rng.uniform(0, 10, (30, 5))
    d = m_step(draws, om)
    ref = sum(0.5 * 5 * math.log(0.3) - 0.3 * b @ om @ b for b in draws) / 30
    assert q_tilde(0.3, draws, om) == pytest.approx(ref, rel=1e-13)
    assert q_tilde(0.3, draws, om) == pytest.approx(np.mean([log_prior(om, 0.3, b) for b in draws]), rel=1e-13)
    best = q_tilde(d, draws, om)
    for ld in rng.uniform(-4, 4, 100):
        assert best >= q_tilde(d * 10.0**ld, draws, om)
    # concave in log delta: second difference is negative
    h = 1e-3
    f = lambda t: q_tilde(d * math.exp(t), draws, om)
    assert (f(h) - 2 * f(0) + f(-h)) / h**2 == pytest.approx(-5 / 2, rel=1e-4)


def test_m_step_errors():
    with pytest.raises(NumericalError):
        m_step(np.zeros((3, 2)), np.eye(2))
    with pytest.raises(ConfigError):
        m_step(np.zeros((0, 2)), np.eye(2))


def test_config_validation():
    for bad in (dict(delta0=0.0), dict(T=0), dict(S_em=0), dict(burn_in=-1)):
        with pytest.raises(ConfigError):
            McemConfig(**bad)


def test_toy_fixed_point_self_consistency():
    # locate the maximizer of the exact marginal likelihood
    ld = golden_section_max(lambda t: toy_log_marginal(math.exp(t)), math.log(1e-3), math.log(1.0), tol=1e-8)
    d_star = math.exp(ld)
    model = PosteriorModel(TOY_Y, np.eye(2), PenaltyMatrix.from_matrix(TOY_OMEGA), d_star)
    chain = sample_posterior(model, SamplerConfig(40000, TOY_Y, burn_in=500, seed=8))
    q = np.einsum("si,ij,sj->s", chain.draws, TOY_OMEGA, chain.draws)
    from ebunfold.sampler import autocorr_time_icse

    se = q.std() * math.sqrt(autocorr_time_icse(q) / q.size)
    assert abs(q.mean() - 2 / (2 * d_star)) < 4 * se


def test_toy_marginal_likelihood_increases_during_ascent():
    pen = PenaltyMatrix.from_matrix(TOY_OMEGA)
    ups = 0
    steps = 0
    # from delta0 = 1 the path needs more than five steps to reach the
    # optimum; once it sits there the steps are pure Monte Carlo noise
    for delta0 in (1.0,):
        for seed in range(20):
            cfg = McemConfig(delta0=delta0, T=5, S_em=10000, S_final=10, burn_in=100, burn_in_first=200, seed=seed)
            path = mcem_fit(TOY_Y, np.eye(2), pen, cfg, TOY_Y).trace.delta_path
            vals = [toy_log_marginal(d) for d in path]
            ups += int(np.sum(np.diff(vals) >= 0))
            steps += len(vals) - 1
    assert ups >= 0.95 * steps


def test_path_positive_and_trace_csv(tmp_path, gmm_setup):
    y = gmm_setup.simulate(20000, 2).y
    cfg = McemConfig(T=3, S_em=100, S_final=100, burn_in=20, burn_in_first=100, burn_in_final=50, seed=4)
    res = mcem_fit(y, gmm_setup.K, gmm_setup.penalty, cfg, gmm_setup.start(y))
    path = res.trace.delta_path
    assert len(path) == 4 and all(d > 0 for d in path)
    assert res.delta_hat == path[-1]
    np.testing.assert_allclose(res.beta_hat, res.chain.mean)
    out = tmp_path / "trace.csv"
    res.trace.to_csv(out)
    with open(out) as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["iteration", "delta", "mean_kappa", "acceptance"]
    assert len(rows) == 5
    assert float(rows[-1][1]) == res.delta_hat
    assert math.isnan(float(rows[1][2]))
    # same seed, same path
    again = mcem_fit(y, gmm_setup.K, gmm_setup.penalty, cfg, gmm_setup.start(y))
    assert again.trace.delta_path == path


def test_stop_tolerance_ends_early():
    pen = PenaltyMatrix.from_matrix(TOY_OMEGA)
    cfg = McemConfig(delta0=0.02, T=50, S_em=2000, S_final=10, seed=1, stop_tol=0.5)
    res = mcem_fit(TOY_Y, np.eye(2), pen, cfg, TOY_Y)
    assert len(res.trace.delta_path) < 51
