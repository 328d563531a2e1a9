"""Command-line front end: ``ebunfold {simulate,unfold,diagnose,mise}``.

Every subcommand reads an optional JSON configuration file and applies flag
overrides on top of it. Output directories contain only deterministic files
plus ``timings.json``, which holds wall-clock times and the worker count.
"""

import argparse
import copy
import importlib.metadata
import logging
import os
import platform
import sys
import time

import numpy as np

from ._accel import backend_name
from .basis import eval_intensity
from .errors import ConfigError, UnfoldError
from .io import read_histogram, read_json, read_table, write_histogram, write_json, write_table
from .mcem import McemConfig, McemResult, McemTrace, mcem_fit
from .sampler import SamplerConfig, chain_diagnostics, sample_posterior
from .scenarios import build_setup, bundled_z_histogram, preset
from .uq import BaseFit, BootstrapConfig, bootstrap_unfold, mise_study

__all__ = ["main", "build_parser", "resolve_config", "ESS_FLOOR", "ACCEPTANCE_FLOOR"]

log = logging.getLogger("ebunfold")

ESS_FLOOR = 50.0
ACCEPTANCE_FLOOR = 0.5

_SETUP_KEYS = (
    "true_domain",
    "smeared_domain",
    "n_bins",
    "bin_edges",
    "n_interior",
    "order",
    "gamma_l",
    "gamma_r",
    "kernel",
    "efficiency",
    "truth",
)

DEFAULTS = {
    "scenario": None,
    "setup": {},
    "input": None,
    "lambda": None,
    "seed": 0,
    "out": None,
    "fixed_delta": None,
    "mcem": {},
    "bootstrap": {
        "enabled": True,
        "scheme": 2,
        "R": 200,
        "alpha": 0.025,
        "band": "percentile",
        "grid_points": 200,
        "clip_nonneg": False,
    },
    "mise": {"lambdas": [1000, 4000, 16000], "reps": 20},
}


def _merge(base, extra):
    out = copy.deepcopy(base)
    for k, v in (extra or {}).items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def resolve_config(args):
    """Defaults, then the preset, then the JSON file, then command-line flags."""
    cfg = copy.deepcopy(DEFAULTS)
    file_cfg = read_json(args.config) if getattr(args, "config", None) else {}
    if not isinstance(file_cfg, dict):
        raise ConfigError("configuration file must hold a JSON object")
    scenario = getattr(args, "scenario", None) or file_cfg.get("scenario")
    if scenario:
        p = preset(scenario)
        cfg["mcem"] = _merge(cfg["mcem"], p.pop("mcem"))
        cfg["bootstrap"] = _merge(cfg["bootstrap"], p.pop("bootstrap"))
        cfg["setup"] = p
        cfg["scenario"] = scenario
        if p["truth"].get("lambda") is not None:
            cfg["lambda"] = p["truth"]["lambda"]
    cfg = _merge(cfg, {k: v for k, v in file_cfg.items() if k != "scenario"})
    unknown = set(cfg) - set(DEFAULTS)
    if unknown:
        raise ConfigError(f"unknown configuration keys {sorted(unknown)}")
    bad = set(cfg["setup"]) - set(_SETUP_KEYS)
    if bad:
        raise ConfigError(f"unknown setup keys {sorted(bad)}")
    flag_map = {
        "lam": ("lambda",),
        "seed": ("seed",),
        "out": ("out",),
        "input": ("input",),
        "fixed_delta": ("fixed_delta",),
        "delta0": ("mcem", "delta0"),
        "T": ("mcem", "T"),
        "S_em": ("mcem", "S_em"),
        "S_final": ("mcem", "S_final"),
        "burn_in": ("mcem", "burn_in"),
        "backend": ("mcem", "backend"),
        "scheme": ("bootstrap", "scheme"),
        "R": ("bootstrap", "R"),
        "alpha": ("bootstrap", "alpha"),
        "band": ("bootstrap", "band"),
        "grid_points": ("bootstrap", "grid_points"),
        "reps": ("mise", "reps"),
        "lambdas": ("mise", "lambdas"),
    }
    for attr, path in flag_map.items():
        v = getattr(args, attr, None)
        if v is None:
            continue
        node = cfg
        for key in path[:-1]:
            node = node[key]
        node[path[-1]] = v
    if getattr(args, "no_bootstrap", False):
        cfg["bootstrap"]["enabled"] = False
    if getattr(args, "clip_nonneg", False):
        cfg["bootstrap"]["clip_nonneg"] = True
    if not cfg["setup"]:
        raise ConfigError("no problem setup: pass --scenario or a config file with a 'setup' section")
    return cfg


def _mcem_config(cfg):
    try:
        return McemConfig(seed=int(cfg["seed"]), **cfg["mcem"])
    except TypeError as exc:
        raise ConfigError(f"bad mcem settings: {exc}") from None


def _versions():
    out = {"python": platform.python_version()}
    for pkg in ("artifact", "numpy", "scipy", "numba"):
        try:
            out[pkg] = importlib.metadata.version(pkg)
        except importlib.metadata.PackageNotFoundError:
            out[pkg] = None
    return out


def _out_dir(cfg, default):
    path = cfg["out"] or default
    os.makedirs(path, exist_ok=True)
    return path


def _grid(setup, n):
    lo, hi = setup.basis.domain
    return np.linspace(lo, hi, int(n))


def cmd_simulate(args):
    cfg = resolve_config(args)
    setup = build_setup(cfg["setup"])
    lam = cfg["lambda"]
    if lam is None:
        raise ConfigError("simulate needs --lambda")
    t0 = time.perf_counter()
    counts = setup.simulate(float(lam), int(cfg["seed"]))
    out = _out_dir(cfg, f"sim_{cfg['scenario'] or 'custom'}_{int(cfg['seed'])}")
    write_histogram(os.path.join(out, "histogram.csv"), counts)
    truth = setup.truth(float(lam))
    grid = _grid(setup, cfg["bootstrap"]["grid_points"])
    write_table(os.path.join(out, "truth.csv"), ["grid", "intensity"], [grid, truth.intensity(grid)])
    write_json(
        os.path.join(out, "manifest.json"),
        {"command": "simulate", "config": cfg, "total_count": counts.total, "versions": _versions()},
    )
    write_json(os.path.join(out, "timings.json"), {"simulate_seconds": time.perf_counter() - t0})
    print(f"wrote {counts.binning.n}-bin histogram with {counts.total} events to {out}")
    return 0


def _load_counts(cfg, setup):
    if cfg["input"]:
        counts = read_histogram(cfg["input"])
    elif cfg["scenario"] == "z":
        counts = bundled_z_histogram()
    elif cfg["lambda"] is not None and setup.truth() is not None:
        counts = setup.simulate(float(cfg["lambda"]), int(cfg["seed"]))
    else:
        raise ConfigError("no input histogram: pass --input")
    if not np.allclose(counts.binning.edges, setup.binning.edges, rtol=0, atol=1e-9 * np.ptp(setup.binning.edges)):
        raise ConfigError("histogram bins do not match the configured binning")
    return counts


def _fixed_delta_fit(counts, setup, mcem_cfg, delta):
    model = setup.model(counts.y, float(delta))
    chain = sample_posterior(
        model,
        SamplerConfig(
            n_samples=mcem_cfg.S_final,
            beta_init=setup.start(counts.y),
            burn_in=mcem_cfg.burn_in_final,
            seed=(mcem_cfg.seed, mcem_cfg.T + 1),
            backend=mcem_cfg.backend,
        ),
    )
    trace = McemTrace(delta_path=[float(delta)])
    return McemResult(delta_hat=float(delta), beta_hat=chain.mean, trace=trace, chain=chain)


def cmd_unfold(args):
    cfg = resolve_config(args)
    workers = int(args.workers or 1)
    timings = {}
    t0 = time.perf_counter()
    setup = build_setup(cfg["setup"])
    counts = _load_counts(cfg, setup)
    mcem_cfg = _mcem_config(cfg)
    bs = cfg["bootstrap"]
    if cfg["fixed_delta"] is not None and bs["enabled"]:
        raise ConfigError("--fixed-delta is a diagnostic run; combine it with --no-bootstrap")
    timings["setup_seconds"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    if cfg["fixed_delta"] is not None:
        fit = _fixed_delta_fit(counts, setup, mcem_cfg, cfg["fixed_delta"])
    else:
        fit = mcem_fit(counts.y, setup.K, setup.penalty, mcem_cfg, setup.start(counts.y))
    timings["mcem_seconds"] = time.perf_counter() - t0
    log.info("delta_hat = %.6g", fit.delta_hat)

    out = _out_dir(cfg, f"unfold_{cfg['scenario'] or 'custom'}_{int(cfg['seed'])}")
    grid = _grid(setup, bs["grid_points"])
    f_hat = eval_intensity(setup.basis, fit.beta_hat, grid)
    f_bc = lower = upper = None
    manifest = {
        "command": "unfold",
        "config": cfg,
        "delta_hat": fit.delta_hat,
        "condition_number": setup.K.cond,
        "leakage_fraction": setup.leakage,
        "backend": backend_name(),
        "versions": _versions(),
    }
    if bs["enabled"]:
        t0 = time.perf_counter()
        bs_cfg = BootstrapConfig(
            scheme=int(bs["scheme"]),
            R=int(bs["R"]),
            alpha=float(bs["alpha"]),
            grid=grid,
            seed=int(cfg["seed"]),
            workers=workers,
            band=bs["band"],
            clip_nonneg=bool(bs["clip_nonneg"]),
        )
        res = bootstrap_unfold(
            counts.y,
            setup.K,
            setup.penalty,
            mcem_cfg,
            bs_cfg,
            setup.basis,
            setup.start,
            base=BaseFit(fit.beta_hat, fit.delta_hat),
        )
        timings["bootstrap_seconds"] = time.perf_counter() - t0
        f_bc, lower, upper = res.f_bc, res.lower, res.upper
        d = res.replicate_deltas
        manifest["bootstrap"] = {
            "scheme": res.scheme,
            "band": res.band_kind,
            "alpha": bs_cfg.alpha,
            "R": bs_cfg.R,
            "R_effective": res.R_effective,
            "failures": [{"replicate": r, "error": m} for r, m in res.failures],
            "replicate_seed_rule": "replicate r uses streams (seed, 101, r) for resampling and (seed, 102, r) for MCEM",
            "replicate_chain_settings": "same as the base fit, delta0 set to the base delta_hat",
            "delta_hat_quantiles": dict(zip(["min", "q05", "median", "q95", "max"], np.quantile(d, [0, 0.05, 0.5, 0.95, 1]))),
            "negative_lower_points": int(np.sum(lower < 0)),
        }
        write_table(
            os.path.join(out, "bootstrap.csv"),
            ["replicate", "delta_hat"],
            [np.arange(d.size), d],
        )
    truth = setup.truth(None if cfg["input"] or cfg["scenario"] == "z" else cfg["lambda"])
    f_true = truth.intensity(grid) if truth is not None and not cfg["input"] else None
    write_table(
        os.path.join(out, "curves.csv"),
        ["grid", "f_hat", "f_bc", "lower", "upper", "f_true"],
        [grid, f_hat, f_bc, lower, upper, f_true],
    )
    write_histogram(os.path.join(out, "histogram.csv"), counts)
    write_table(os.path.join(out, "beta.csv"), ["index", "beta_hat"], [np.arange(fit.beta_hat.size), fit.beta_hat])
    fit.trace.to_csv(os.path.join(out, "trace.csv"))
    setup.K.to_csv(os.path.join(out, "response.csv"))
    draws = fit.chain.draws
    write_table(os.path.join(out, "chain.csv"), [f"beta_{j}" for j in range(draws.shape[1])], list(draws.T))
    write_json(os.path.join(out, "diagnostics.json"), chain_diagnostics(fit.chain, include_series=False))
    write_json(os.path.join(out, "manifest.json"), manifest)
    timings["workers"] = workers
    write_json(os.path.join(out, "timings.json"), timings)
    print(f"delta_hat = {fit.delta_hat:.6g}; outputs in {out}")
    return 0


def diagnose_report(run_dir):
    """Summarize a finished run; raises ConfigError when artifacts are missing."""
    if not os.path.isdir(run_dir):
        raise ConfigError(f"{run_dir} is not a directory")
    needed = ["diagnostics.json", "trace.csv"]
    missing = [f for f in needed if not os.path.exists(os.path.join(run_dir, f))]
    if missing:
        raise ConfigError(f"{run_dir} is not a completed unfold run (missing {', '.join(missing)})")
    diag = read_json(os.path.join(run_dir, "diagnostics.json"))
    trace = read_table(os.path.join(run_dir, "trace.csv"))
    flags = []
    for c in diag["coordinates"]:
        if c["ess"] < ESS_FLOOR:
            flags.append(f"beta_{c['index']}: ESS {c['ess']:.1f} < {ESS_FLOOR:g}")
        acc = c["acceptance"]
        if acc is not None and acc < ACCEPTANCE_FLOOR:
            flags.append(f"beta_{c['index']}: acceptance {acc:.3f} < {ACCEPTANCE_FLOOR:g}")
        if c["degenerate"]:
            flags.append(f"beta_{c['index']}: autocorrelation does not decay within a third of the chain")
    return {
        "run": os.path.abspath(run_dir),
        "n_samples": diag["n_samples"],
        "p": diag["p"],
        "mean_acceptance": diag["mean_acceptance"],
        "mean_kappa": diag["mean_kappa"],
        "max_kappa": diag["max_kappa"],
        "min_ess": diag["min_ess"],
        "delta_path": trace["delta"].tolist(),
        "flags": flags,
        "healthy": not flags,
    }


def cmd_diagnose(args):
    rep = diagnose_report(args.run_dir)
    if args.json:
        import json

        print(json.dumps(rep, indent=2))
        return 0
    print(f"run: {rep['run']}")
    print(f"samples: {rep['n_samples']}  coefficients: {rep['p']}")
    print(f"mean acceptance: {rep['mean_acceptance']:.4f}")
    print(f"autocorrelation time: mean {rep['mean_kappa']:.2f}, max {rep['max_kappa']:.2f}")
    print(f"minimum ESS: {rep['min_ess']:.1f}")
    path = rep["delta_path"]
    print(f"delta path: {path[0]:.3g} -> {path[-1]:.3g} over {len(path) - 1} iterations")
    if rep["flags"]:
        print(f"{len(rep['flags'])} flag(s):")
        for f in rep["flags"]:
            print(f"  {f}")
    else:
        print("no flags")
    return 0


class _StudyScenario:
    def __init__(self, setup, lam):
        self.setup = setup
        self.lam = lam
        self.basis = setup.basis
        self._truth = setup.truth(lam)

    def simulate(self, seed):
        return self.setup.simulate(self.lam, seed).y

    def truth(self, grid):
        return self._truth.intensity(grid)

    def fit(self, y, mcem_cfg):
        return mcem_fit(y, self.setup.K, self.setup.penalty, mcem_cfg, self.setup.start(y)).beta_hat


def cmd_mise(args):
    cfg = resolve_config(args)
    setup = build_setup(cfg["setup"])
    if setup.truth(1.0) is None:
        raise ConfigError("MISE needs a scenario with a known truth")
    t0 = time.perf_counter()
    rows = mise_study(
        lambda lam: _StudyScenario(setup, lam),
        [float(v) for v in cfg["mise"]["lambdas"]],
        int(cfg["mise"]["reps"]),
        _mcem_config(cfg),
        seed=int(cfg["seed"]),
    )
    out = _out_dir(cfg, f"mise_{cfg['scenario'] or 'custom'}_{int(cfg['seed'])}")
    write_table(
        os.path.join(out, "mise.csv"),
        ["lambda", "mise_over_lambda2", "se", "reps"],
        [[r[k] for r in rows] for k in ("lambda", "mise_over_lambda2", "se", "reps")],
    )
    write_json(os.path.join(out, "manifest.json"), {"command": "mise", "config": cfg, "versions": _versions()})
    write_json(os.path.join(out, "timings.json"), {"mise_seconds": time.perf_counter() - t0})
    for r in rows:
        print(f"lambda {r['lambda']:>9g}  MISE/lambda^2 {r['mise_over_lambda2']:.4e} +- {r['se']:.1e}")
    return 0


def _common(p):
    p.add_argument("--config", help="JSON configuration file")
    p.add_argument("--scenario", choices=["gmm", "z"], help="problem preset")
    p.add_argument("--seed", type=int, help="master seed")
    p.add_argument("--out", help="output directory")
    p.add_argument("--lambda", dest="lam", type=float, help="expected number of true events")


def _mcem_flags(p):
    p.add_argument("--delta0", type=float, help="starting prior scale")
    p.add_argument("--T", type=int, help="MCEM iterations")
    p.add_argument("--S-em", dest="S_em", type=int, help="draws per E-step")
    p.add_argument("--S-final", dest="S_final", type=int, help="draws in the final run")
    p.add_argument("--burn-in", dest="burn_in", type=int, help="burn-in sweeps per warm-started E-step")
    p.add_argument("--backend", choices=["numba", "numpy"], help="sampler implementation")


def build_parser():
    parser = argparse.ArgumentParser(prog="ebunfold", description="Empirical Bayes unfolding of Poisson point processes.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="draw a synthetic smeared histogram")
    _common(p)
    p.add_argument("--grid-points", dest="grid_points", type=int, help="truth grid size")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("unfold", help="estimate the intensity with bootstrap bands")
    _common(p)
    _mcem_flags(p)
    p.add_argument("--input", help="histogram CSV (bin_lower, bin_upper, count)")
    p.add_argument("--fixed-delta", dest="fixed_delta", type=float, help="skip MCEM and sample at this prior scale")
    p.add_argument("--no-bootstrap", action="store_true", help="point estimate only")
    p.add_argument("--scheme", type=int, choices=[1, 2], help="1: Poisson(K beta_hat), 2: Poisson(y)")
    p.add_argument("--R", type=int, help="bootstrap replicates")
    p.add_argument("--alpha", type=float, help="one-sided level of the pointwise band")
    p.add_argument("--band", choices=["percentile", "basic"])
    p.add_argument("--clip-nonneg", action="store_true", help="clip negative band edges at zero")
    p.add_argument("--grid-points", dest="grid_points", type=int, help="evaluation grid size")
    p.add_argument("--workers", type=int, help="bootstrap worker processes")
    p.set_defaults(func=cmd_unfold)

    p = sub.add_parser("diagnose", help="summarize mixing of a finished run")
    p.add_argument("run_dir")
    p.add_argument("--json", action="store_true", help="print the report as JSON")
    p.set_defaults(func=cmd_diagnose)

    p = sub.add_parser("mise", help="mean integrated squared error study")
    _common(p)
    _mcem_flags(p)
    p.add_argument("--lambdas", type=float, nargs="+", help="expected sample sizes")
    p.add_argument("--reps", type=int, help="datasets per sample size")
    p.set_defaults(func=cmd_mise)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UnfoldError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return ConfigError.exit_code


if __name__ == "__main__":
    sys.exit(main())
