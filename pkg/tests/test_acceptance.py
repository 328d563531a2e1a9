"""Acceptance criteria 1 to 12.

Each test records one PASS/FAIL line through the ``criterion`` fixture; the
lines are repeated in the terminal summary. Stochastic criteria use fixed
seeds so that a run is repeatable.
"""

import filecmp
import math
import os
import time

import numpy as np
import pytest

from ebunfold.basis import PenaltyMatrix, curvature_penalty, make_uniform_basis
from ebunfold.cli import main
from ebunfold.mcem import McemConfig, m_step, mcem_fit
from ebunfold.posterior import PosteriorModel, grad_log_posterior
from ebunfold.sampler import SamplerConfig, autocorr_time_icse, sample_posterior
from ebunfold.scenarios import build_setup, preset
from ebunfold.uq import BootstrapConfig, basic_band, bootstrap_unfold, integrated_squared_error, mise_study, percentile_band

from oracles import ar1, golden_section_max, log_posterior_extended, q_tilde_extended, toy_posterior_moments

GMM_CFG = McemConfig(delta0=1e-5, T=20, S_em=500, S_final=1000)
# small-sample settings: 30 iterations of 1000 draws
GMM_SMALL_CFG = McemConfig(delta0=1e-5, T=30, S_em=1000, S_final=1000)


def test_criterion_01_penalty_structure(criterion):
    t0 = time.perf_counter()
    b = make_uniform_basis((-7, 7), 26, 4)
    pen = curvature_penalty(b, 5.0, 5.0)
    ev = np.linalg.eigvalsh(pen.omega)
    n_null = int(np.sum(ev < 1e-9 * ev.max()))
    min_a = float(np.linalg.eigvalsh(pen.omega_a)[0])
    elapsed = time.perf_counter() - t0
    ok = n_null == 2 and min_a > 0 and elapsed < 1.0
    criterion(1, ok, f"near-null eigenvalues {n_null}, min eig(Omega_A) {min_a:.3g}, {elapsed:.3f} s")
    assert ok


def test_criterion_02_response_conditioning(criterion):
    details = []
    ok = True
    for name, lo, hi in (("gmm", 5e7, 1.3e9), ("z", 2e3, 4.5e4)):
        t0 = time.perf_counter()
        setup = build_setup(preset(name))
        elapsed = time.perf_counter() - t0
        c = setup.K.cond
        ok &= lo <= c <= hi and elapsed < 30
        details.append(f"{name} cond {c:.3g} in [{lo:g}, {hi:g}] ({elapsed:.2f} s)")
    criterion(2, ok, "; ".join(details))
    assert ok


def test_criterion_03_gradient(criterion, gmm_setup):
    rng = np.random.default_rng(3)
    y = gmm_setup.simulate(20000, 1).y
    model = gmm_setup.model(y, 2.5e-7)
    centre = gmm_setup.start(y) + 10.0
    worst = 0.0
    for _ in range(20):
        beta = centre * rng.uniform(0.5, 1.5, model.p)
        g = grad_log_posterior(model, beta)
        fd = np.empty(model.p)
        for k in range(model.p):
            h = np.longdouble(1e-4 * beta[k])
            e = np.zeros(model.p, dtype=np.longdouble)
            e[k] = h
            up = log_posterior_extended(y, model.K_mat, model.omega_a, model.delta, beta + e)
            down = log_posterior_extended(y, model.K_mat, model.omega_a, model.delta, beta - e)
            fd[k] = float((up - down) / (2 * h))
        # relative to the size of the gradient at that point
        worst = max(worst, np.max(np.abs(fd - g)) / np.max(np.abs(g)))
    ok = worst < 1e-6
    criterion(3, ok, f"max relative error {worst:.2e} over 20 points")
    assert ok


def test_criterion_04_m_step_oracle(criterion):
    rng = np.random.default_rng(4)
    worst = 0.0
    for _ in range(50):
        p = int(rng.integers(2, 31))
        A = rng.normal(size=(p, p))
        om = A @ A.T + p * np.eye(p)
        draws = rng.gamma(2.0, 50.0, (int(rng.integers(1, 200)), p))
        d = m_step(draws, om)
        x = golden_section_max(lambda ld: q_tilde_extended(ld, draws, om), math.log(d) - 15, math.log(d) + 15, tol=1e-15)
        worst = max(worst, abs(math.exp(x) - d) / d)
    ok = worst < 1e-8
    criterion(4, ok, f"max relative gap to golden-section argmax {worst:.2e} over 50 draw sets")
    assert ok


def test_criterion_05_sampler_oracle(criterion):
    om = np.array([[1.0, -0.4], [-0.4, 1.0]])
    model = PosteriorModel(np.array([5.0, 7.0]), np.eye(2), PenaltyMatrix.from_matrix(om), 0.01)
    chain = sample_posterior(model, SamplerConfig(20000, np.array([5.0, 7.0]), burn_in=500, seed=0))
    mean_ref, var_ref = toy_posterior_moments(model.y_vec, model.K_mat, om, model.delta, 40.0)
    se = np.sqrt(var_ref * chain.kappa / chain.n_samples)
    z = np.abs(chain.mean - mean_ref) / se
    # prior-only target: tridiagonal penalty with non-positive off-diagonals
    p = 6
    om6 = 2.0 * np.eye(p) - 0.9 * (np.eye(p, k=1) + np.eye(p, k=-1))
    prior_only = PosteriorModel(np.zeros(0), np.zeros((0, p)), PenaltyMatrix.from_matrix(om6), 0.5)
    pc = sample_posterior(prior_only, SamplerConfig(5000, np.ones(p), burn_in=10, seed=1))
    acc = float(pc.acceptance_rate.min())
    ok = bool(np.all(z < 3)) and acc >= 1 - 1e-9
    criterion(5, ok, f"toy mean error {z.max():.2f} MC standard errors; prior-only acceptance {acc:.12f}")
    assert ok


def test_criterion_06_icse_oracle(criterion):
    rng = np.random.default_rng(6)
    k_iid = autocorr_time_icse(rng.standard_normal(100000))
    k_ar = autocorr_time_icse(ar1(0.8, 100000, rng))
    ok = abs(k_iid - 1) <= 0.05 and abs(k_ar - 9) <= 0.2 * 9
    criterion(6, ok, f"iid kappa {k_iid:.4f}; AR(1) rho=0.8 kappa {k_ar:.3f} (target 9)")
    assert ok


@pytest.mark.slow
def test_criterion_07_mcem_reproduction(criterion, gmm_setup):
    t0 = time.perf_counter()
    y = gmm_setup.simulate(20000, 1).y
    res = mcem_fit(y, gmm_setup.K, gmm_setup.penalty, GMM_CFG, gmm_setup.start(y))
    elapsed = time.perf_counter() - t0
    logs = np.log(res.trace.delta_path[-5:])
    spread = float(logs.max() - logs.min())
    y_small = gmm_setup.simulate(1000, 1).y
    small = mcem_fit(y_small, gmm_setup.K, gmm_setup.penalty, GMM_SMALL_CFG, gmm_setup.start(y_small))
    decades = abs(math.log10(small.delta_hat / 1.8e-4))
    ok = 5e-8 <= res.delta_hat <= 1.2e-6 and spread < 0.2 and elapsed < 900 and decades <= 1
    criterion(
        7,
        ok,
        f"lambda=20000 delta_hat {res.delta_hat:.3g}, last-5 log-delta spread {spread:.3f}, {elapsed:.1f} s; "
        f"lambda=1000 delta_hat {small.delta_hat:.3g} ({decades:.2f} decades from 1.8e-4)",
    )
    assert ok


def test_criterion_08_band_identities(criterion):
    rng = np.random.default_rng(8)
    reps = rng.gamma(2.0, 3.0, (200, 100))
    f_hat = rng.uniform(1, 10, 100)
    p_lo, p_hi = percentile_band(reps, 0.025)
    b_lo, b_hi = basic_band(f_hat, reps, 0.025)
    reflect = np.array_equal(b_lo, 2 * f_hat - p_hi) and np.array_equal(b_hi, 2 * f_hat - p_lo)
    nested = True
    alphas = [0.005, 0.025, 0.05, 0.1, 0.25, 0.4]
    for a1, a2 in zip(alphas[:-1], alphas[1:]):
        for band in (lambda a: percentile_band(reps, a), lambda a: basic_band(f_hat, reps, a)):
            lo1, hi1 = band(a1)
            lo2, hi2 = band(a2)
            nested &= bool(np.all(lo1 <= lo2) and np.all(hi2 <= hi1))
    dup = np.tile(f_hat, (50, 1))
    d_lo, d_hi = percentile_band(dup, 0.025)
    e_lo, e_hi = basic_band(f_hat, dup, 0.025)
    zero = np.array_equal(d_lo, d_hi) and np.array_equal(e_lo, e_hi)
    ok = reflect and nested and zero
    criterion(8, ok, f"reflection exact {reflect}, nested in alpha {nested}, zero width on duplicates {zero}")
    assert ok


@pytest.mark.slow
def test_criterion_09_coverage(criterion, gmm_setup):
    y = gmm_setup.simulate(20000, 9).y
    grid = np.linspace(-7, 7, 200)
    bs = BootstrapConfig(scheme=2, R=50, alpha=0.025, grid=grid, seed=9)
    res = bootstrap_unfold(y, gmm_setup.K, gmm_setup.penalty, GMM_CFG, bs, gmm_setup.basis, gmm_setup.start)
    truth = gmm_setup.truth(20000).intensity(grid)
    covered = float(np.mean((res.lower <= truth) & (truth <= res.upper)))
    ok = covered >= 0.9 and res.R_effective == 50
    criterion(9, ok, f"95% percentile band covers truth at {100 * covered:.1f}% of 200 points (R={res.R_effective})")
    assert ok


@pytest.mark.slow
def test_criterion_10_bias_correction(criterion, gmm_setup):
    grid = np.linspace(-7, 7, 1401)
    windows = [(grid >= -3.5 - 1e-9) & (grid <= -0.5 + 1e-9), (grid >= 0.5 - 1e-9) & (grid <= 3.5 + 1e-9)]
    truth = gmm_setup.truth(1000).intensity(grid)

    def window_ise(f):
        return sum(integrated_squared_error(f[w], truth[w], grid[w]) for w in windows)

    wins = 0
    ratios = []
    for r in range(10):
        y = gmm_setup.simulate(1000, (10, r)).y
        cfg = McemConfig(delta0=1e-5, T=30, S_em=1000, S_final=1000, seed=r)
        bs = BootstrapConfig(scheme=1, R=50, grid=grid, seed=r, band="basic")
        res = bootstrap_unfold(y, gmm_setup.K, gmm_setup.penalty, cfg, bs, gmm_setup.basis, gmm_setup.start)
        ise_bc, ise_hat = window_ise(res.f_bc), window_ise(res.f_hat)
        ratios.append(ise_bc / ise_hat)
        wins += ise_bc < ise_hat
    ok = wins >= 7
    criterion(
        10,
        ok,
        f"bias-corrected ISE lower in {wins}/10 repetitions; ISE ratios {', '.join(f'{x:.2f}' for x in ratios)}",
    )
    assert ok


class _Study:
    def __init__(self, setup, lam):
        self.setup = setup
        self.lam = lam
        self.basis = setup.basis
        self._truth = setup.truth(lam)

    def simulate(self, seed):
        return self.setup.simulate(self.lam, seed).y

    def truth(self, grid):
        return self._truth.intensity(grid)

    def fit(self, y, cfg):
        return mcem_fit(y, self.setup.K, self.setup.penalty, cfg, self.setup.start(y)).beta_hat


@pytest.mark.slow
def test_criterion_11_mise_trend(criterion, gmm_setup):
    rows = mise_study(lambda lam: _Study(gmm_setup, lam), [1000, 4000, 16000], 20, GMM_CFG, seed=11)
    vals = [r["mise_over_lambda2"] for r in rows]
    ok = vals[0] > vals[1] > vals[2]
    desc = ", ".join(f"{r['lambda']:g}: {r['mise_over_lambda2']:.3e} +- {r['se']:.1e}" for r in rows)
    criterion(11, ok, f"MISE/lambda^2 {desc}")
    assert ok


def test_criterion_12_determinism(criterion, tmp_path, monkeypatch):
    args = [
        "unfold", "--scenario", "gmm", "--seed", "12", "--out", "run",
        "--T", "4", "--S-em", "200", "--S-final", "300", "--R", "4", "--grid-points", "60",
    ]
    dirs = []
    for workers in ("1", "2"):
        home = tmp_path / f"w{workers}"
        home.mkdir()
        monkeypatch.chdir(home)
        assert main(args + ["--workers", workers]) == 0
        dirs.append(home / "run")
    names = sorted(os.listdir(dirs[0]))
    compared = [n for n in names if n != "timings.json"]
    same_set = names == sorted(os.listdir(dirs[1]))
    _, mismatch, errors = filecmp.cmpfiles(dirs[0], dirs[1], compared, shallow=False)
    ok = same_set and not mismatch and not errors
    criterion(
        12,
        ok,
        f"{len(compared)} output files byte-identical across 1 and 2 workers"
        + (f"; differing: {mismatch + errors}" if not ok else "")
        + " (timings.json holds wall-clock times only)",
    )
    assert ok
