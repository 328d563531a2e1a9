"""Problem setups: basis, binning, penalty, response and starting point.

Two presets are provided. ``gmm`` is the two-peak Gaussian mixture on
``[-7, 7]`` smeared by unit Gaussian noise; ``z`` is the Z boson line shape
smeared by a Crystal Ball response. Any other setup can be described by the
same dictionary keys and built with :func:`build_setup`.
"""

from dataclasses import dataclass
from importlib import resources
import copy
import logging

import numpy as np

from .basis import curvature_penalty, make_uniform_basis
from .errors import ConfigError
from .forward import (
    BinningScheme,
    ConstantEfficiency,
    CrystalBall,
    GaussianConvolution,
    IdentityKernel,
    TabulatedEfficiency,
    assemble_response,
    delta_kernel_response,
    full_kernel,
    uniform_binning,
)
from .posterior import PosteriorModel, extend_counts, nnls
from .simulate import (
    BinnedCounts,
    BreitWigner,
    bin_points,
    binomial_split,
    gmm_two_peaks,
    make_rng,
    sample_process,
    thin_and_smear,
)

__all__ = [
    "PRESETS",
    "Setup",
    "NnlsStart",
    "build_setup",
    "preset",
    "make_kernel",
    "make_efficiency",
    "leakage_fraction",
    "synthetic_z_histogram",
    "bundled_z_histogram",
    "z_truth_lambda",
]

log = logging.getLogger(__name__)

# Crystal Ball parameters (delta_m, sigma, alpha, gamma) of the Z setup
Z_CRYSTAL_BALL = {"type": "crystal_ball", "delta_m": 0.58, "sigma": 0.99, "alpha": 1.81, "gamma": 1.60}
Z_FULL_RANGE = (65.0, 115.0)
Z_FULL_EVENTS = 67778
Z_KEEP_PROB = 0.7

PRESETS = {
    "gmm": {
        "true_domain": [-7.0, 7.0],
        "smeared_domain": [-7.0, 7.0],
        "n_bins": 40,
        "n_interior": 26,
        "order": 4,
        "gamma_l": 5.0,
        "gamma_r": 5.0,
        "kernel": {"type": "gaussian", "sigma": 1.0},
        "efficiency": {"type": "constant", "value": 1.0},
        "truth": {"type": "gmm", "lambda": 20000.0},
        "mcem": {"delta0": 1e-5, "T": 20, "S_em": 500, "S_final": 1000},
        "bootstrap": {"scheme": 2, "band": "percentile"},
    },
    "z": {
        "true_domain": [81.5, 98.5],
        "smeared_domain": [82.5, 97.5],
        "n_bins": 30,
        "n_interior": 34,
        "order": 4,
        "gamma_l": 70.0,
        "gamma_r": 70.0,
        "kernel": dict(Z_CRYSTAL_BALL),
        "efficiency": {"type": "constant", "value": 1.0},
        "truth": {"type": "breit_wigner", "lambda": None},
        "mcem": {"delta0": 1e-6, "T": 20, "S_em": 500, "S_final": 5000},
        "bootstrap": {"scheme": 1, "band": "basic"},
    },
}


def preset(name):
    """Deep copy of a preset configuration dictionary."""
    try:
        return copy.deepcopy(PRESETS[name])
    except KeyError:
        raise ConfigError(f"unknown scenario {name!r}; choose from {sorted(PRESETS)}") from None


def make_kernel(spec):
    kind = spec.get("type")
    if kind == "gaussian":
        return GaussianConvolution(float(spec["sigma"]))
    if kind == "crystal_ball":
        return CrystalBall(float(spec["delta_m"]), float(spec["sigma"]), float(spec["alpha"]), float(spec["gamma"]))
    if kind == "identity":
        return IdentityKernel()
    raise ConfigError(f"unknown kernel type {kind!r}")


def make_efficiency(spec):
    spec = spec or {"type": "constant", "value": 1.0}
    kind = spec.get("type")
    if kind == "constant":
        return ConstantEfficiency(float(spec.get("value", 1.0)))
    if kind == "tabulated":
        return TabulatedEfficiency(np.asarray(spec["grid"], dtype=float), np.asarray(spec["values"], dtype=float))
    raise ConfigError(f"unknown efficiency type {kind!r}")


def leakage_fraction(kernel, true_domain, smeared_domain):
    """Share of the flux into ``F`` that starts outside ``E`` for a flat spectrum.

    Only defined for translation-invariant responses with a distribution
    function; returns 0 for other kernels.
    """
    cdf = getattr(kernel, "offset_cdf", None)
    if cdf is None:
        return 0.0
    (e_lo, e_hi), (f_lo, f_hi) = true_domain, smeared_domain
    width = f_hi - f_lo
    reach = 40.0 * max(width, e_hi - e_lo)
    s = np.linspace(e_lo - reach, e_hi + reach, 200001)
    prob = cdf(f_hi - s) - cdf(f_lo - s)
    ds = s[1] - s[0]
    inside = (s >= e_lo) & (s <= e_hi)
    total = prob.sum() * ds
    return float(prob[~inside].sum() * ds / total) if total > 0 else 0.0


class NnlsStart:
    """Sampler starting point from the unsmeared NNLS spline fit.

    The histogram is padded to the true space by repeating its edge bins,
    then fitted with the no-smearing design. If a bin with data would get a
    zero mean, all coefficients are lifted by a tiny floor so that the
    posterior density is positive at the start.
    """

    def __init__(self, setup):
        self.K = setup.K.K
        self.binning = setup.binning
        self.domain = setup.basis.domain
        _, ext = extend_counts(np.zeros(setup.binning.n), setup.binning, self.domain)
        self.K_tilde = delta_kernel_response(setup.basis, ext).K

    def __call__(self, y):
        y = np.asarray(getattr(y, "y", y), dtype=float)
        y_ext, _ = extend_counts(y, self.binning, self.domain)
        beta = nnls(self.K_tilde, y_ext)
        mu = self.K @ beta
        if np.any((y > 0) & (mu <= 0)):
            beta = beta + 1e-6 * max(float(beta.max()), 1.0)
        return beta


@dataclass(frozen=True, eq=False)
class Setup:
    """Everything needed to unfold a histogram on a fixed discretization."""

    config: dict
    basis: object
    binning: BinningScheme
    penalty: object
    kernel: object
    K: object
    K_tilde: object
    leakage: float

    @property
    def start(self):
        return NnlsStart(self)

    def model(self, y, delta):
        return PosteriorModel(y, self.K, self.penalty, delta)

    def truth(self, lambda_tot=None):
        """Intensity object of the configured truth, or ``None``."""
        spec = self.config.get("truth") or {}
        lam = spec.get("lambda") if lambda_tot is None else lambda_tot
        if spec.get("type") == "gmm":
            return gmm_two_peaks(lam, tuple(self.basis.domain))
        if spec.get("type") == "breit_wigner":
            if lam is None:
                lam = z_truth_lambda()
            return BreitWigner(lam, domain=tuple(self.basis.domain))
        return None

    def simulate(self, lambda_tot, seed):
        """Smeared histogram of a fresh realization of the truth."""
        model = self.truth(lambda_tot)
        if model is None:
            raise ConfigError("setup has no known truth to simulate from")
        eff = make_efficiency(self.config.get("efficiency"))
        x = sample_process(model, make_rng(seed, 0))
        t = thin_and_smear(x, eff, self.kernel, self.binning.span, make_rng(seed, 1))
        return bin_points(t, self.binning)


def build_setup(config):
    """Assemble basis, binning, penalty and both response matrices."""
    try:
        E = tuple(float(v) for v in config["true_domain"])
        F = tuple(float(v) for v in config["smeared_domain"])
        if "bin_edges" in config and config["bin_edges"] is not None:
            binning = BinningScheme(np.asarray(config["bin_edges"], dtype=float))
        else:
            binning = uniform_binning(F, int(config["n_bins"]))
        basis = make_uniform_basis(E, int(config["n_interior"]), int(config.get("order", 4)))
        penalty = curvature_penalty(basis, float(config["gamma_l"]), float(config["gamma_r"]))
        kernel = make_kernel(config["kernel"])
    except KeyError as exc:
        raise ConfigError(f"missing configuration key {exc}") from None
    eff = make_efficiency(config.get("efficiency"))
    K = assemble_response(basis, binning, full_kernel(kernel, eff))
    _, ext = extend_counts(np.zeros(binning.n), binning, E)
    K_tilde = delta_kernel_response(basis, ext)
    leak = leakage_fraction(kernel, E, F)
    if leak > 0.01:
        log.warning("%.1f%% of a flat spectrum's flux into F starts outside E", 100 * leak)
    return Setup(dict(config), basis, binning, penalty, kernel, K, K_tilde, leak)


# --------------------------------------------------------------------------
# Synthetic stand-in for the Z boson histogram
# --------------------------------------------------------------------------


def _bw_mass(domain):
    return BreitWigner(1.0, domain=domain).mass_in_domain()


def z_truth_lambda():
    """Expected true events in ``E`` behind the bundled 70% histogram."""
    e = tuple(PRESETS["z"]["true_domain"])
    return Z_KEEP_PROB * Z_FULL_EVENTS * _bw_mass(e) / _bw_mass(Z_FULL_RANGE)


def synthetic_z_histogram(seed=2011):
    """Breit-Wigner truth on 65-115 GeV smeared by the Crystal Ball response.

    Mirrors the construction of the real dataset: about 67 778 events in a
    100-bin histogram on 65-115 GeV, a binomial 70/30 split per bin, and the
    30 bins of the 70% sample inside ``[82.5, 97.5]``.
    """
    truth = BreitWigner(Z_FULL_EVENTS, domain=Z_FULL_RANGE)
    kern = make_kernel(Z_CRYSTAL_BALL)
    x = sample_process(truth, make_rng(seed, 0))
    t = thin_and_smear(x, ConstantEfficiency(1.0), kern, Z_FULL_RANGE, make_rng(seed, 1))
    full = bin_points(t, uniform_binning(Z_FULL_RANGE, 100))
    y, _ = binomial_split(full, Z_KEEP_PROB, make_rng(seed, 2))
    lo, hi = PRESETS["z"]["smeared_domain"]
    first = int(round((lo - Z_FULL_RANGE[0]) / 0.5))
    last = int(round((hi - Z_FULL_RANGE[0]) / 0.5))
    return BinnedCounts(y.y[first:last], BinningScheme(full.binning.edges[first:last + 1]))


def bundled_z_histogram():
    """The 30-bin synthetic Z histogram shipped with the package."""
    from .io import read_histogram

    ref = resources.files("ebunfold").joinpath("data/z_synthetic.csv")
    with resources.as_file(ref) as path:
        return read_histogram(path)
