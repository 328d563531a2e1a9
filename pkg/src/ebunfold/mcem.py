"""Monte Carlo EM for the marginal maximum likelihood prior scale."""

from dataclasses import dataclass, field, replace
import csv
import math

import numpy as np

from .errors import ConfigError, NumericalError
from .posterior import PosteriorModel, log_prior
from .sampler import SamplerConfig, sample_posterior

__all__ = ["McemConfig", "McemTrace", "McemResult", "mcem_fit", "m_step", "q_tilde"]


@dataclass(frozen=True)
class McemConfig:
    """Settings for the EM loop and the final posterior run.

    The first E-step starts cold from the initializer and uses
    ``burn_in_first``; later E-steps warm-start from the previous posterior
    mean and use ``burn_in``.
    """

    delta0: float = 1e-5
    T: int = 20
    S_em: int = 500
    S_final: int = 1000
    burn_in: int = 100
    burn_in_first: int = 500
    burn_in_final: int = 500
    seed: int = 0
    stop_tol: float = None
    backend: str = None

    def __post_init__(self):
        if not (self.delta0 > 0 and math.isfinite(self.delta0)):
            raise ConfigError("delta0 must be positive")
        if self.T < 1 or self.S_em < 1 or self.S_final < 1:
            raise ConfigError("T, S_em and S_final must be >= 1")
        if min(self.burn_in, self.burn_in_first, self.burn_in_final) < 0:
            raise ConfigError("burn-in lengths must be >= 0")

    def to_dict(self):
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


@dataclass
class McemTrace:
    delta_path: list = field(default_factory=list)
    mean_kappa: list = field(default_factory=list)
    acceptance: list = field(default_factory=list)

    def rows(self):
        """``(iteration, delta, mean kappa, acceptance)``; iteration 0 has no chain."""
        out = [(0, self.delta_path[0], math.nan, math.nan)]
        for t in range(1, len(self.delta_path)):
            out.append((t, self.delta_path[t], self.mean_kappa[t - 1], self.acceptance[t - 1]))
        return out

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["iteration", "delta", "mean_kappa", "acceptance"])
            for it, d, k, a in self.rows():
                w.writerow([it, repr(float(d)), repr(float(k)), repr(float(a))])


@dataclass
class McemResult:
    delta_hat: float
    beta_hat: np.ndarray
    trace: McemTrace
    chain: object


def q_tilde(delta, draws, penalty):
    """Monte Carlo E-step objective ``(1/S) sum_s log p(beta^(s) | delta)``."""
    draws = np.atleast_2d(np.asarray(draws, dtype=float))
    return float(np.mean([log_prior(penalty, delta, b) for b in draws]))


def m_step(draws, penalty):
    """Closed-form maximizer ``delta = p S / (2 sum_s beta' Omega_A beta)``."""
    draws = np.atleast_2d(np.asarray(draws, dtype=float))
    if draws.shape[0] < 1:
        raise ConfigError("m_step needs at least one draw")
    omega_a = getattr(penalty, "omega_a", penalty)
    quad = np.einsum("si,ij,sj->", draws, omega_a, draws)
    if not quad > 0:
        raise NumericalError("quadratic form of the draws is zero; M-step undefined")
    S, p = draws.shape
    return p * S / (2.0 * quad)


def mcem_fit(y, K, penalty, cfg, beta_init):
    """Run ``cfg.T`` MCEM iterations from ``cfg.delta0`` and a final posterior run.

    Returns an :class:`McemResult` with the estimate of ``delta``, the posterior
    mean coefficients at that value, the iteration trace and the final chain.
    """
    model = PosteriorModel(y, K, penalty, cfg.delta0)
    trace = McemTrace(delta_path=[cfg.delta0])
    start = np.asarray(beta_init, dtype=float)
    delta = cfg.delta0
    for t in range(1, cfg.T + 1):
        scfg = SamplerConfig(
            n_samples=cfg.S_em,
            beta_init=start,
            burn_in=cfg.burn_in_first if t == 1 else cfg.burn_in,
            seed=(cfg.seed, t),
            backend=cfg.backend,
        )
        chain = sample_posterior(model, scfg)
        try:
            delta = m_step(chain.draws, model.penalty)
        except NumericalError as exc:
            raise NumericalError(f"M-step failed at iteration {t}: {exc}; path {trace.delta_path}") from exc
        if not (math.isfinite(delta) and delta > 0):
            raise NumericalError(f"non-finite delta at iteration {t}; path {trace.delta_path}")
        trace.delta_path.append(delta)
        trace.mean_kappa.append(float(chain.kappa.mean()))
        trace.acceptance.append(float(chain.acceptance_rate.mean()))
        start = chain.mean
        model = model.with_delta(delta)
        if cfg.stop_tol is not None and t >= 3:
            recent = np.log(trace.delta_path[-4:])
            if np.all(np.abs(np.diff(recent)) < cfg.stop_tol):
                break
    final = sample_posterior(
        model,
        SamplerConfig(
            n_samples=cfg.S_final,
            beta_init=start,
            burn_in=cfg.burn_in_final,
            seed=(cfg.seed, cfg.T + 1),
            backend=cfg.backend,
        ),
    )
    return McemResult(delta_hat=delta, beta_hat=final.mean, trace=trace, chain=final)


def with_overrides(cfg, **kwargs):
    return replace(cfg, **{k: v for k, v in kwargs.items() if v is not None})
