"""Time the sampler sweep kernel under the numba and pure-numpy backends.

Usage::

    python3 benchmarks/bench_sampler.py [--sweeps 2000] [--repeat 3] [--scenario gmm]

Both backends consume the same pre-drawn uniforms, so their chains must agree
to rounding; the script checks that before printing timings.
"""

import argparse
import logging
import time

import numpy as np

from ebunfold import _accel
from ebunfold._sweep import run_sweeps
from ebunfold.scenarios import build_setup, preset
from ebunfold.simulate import make_rng


def best_time(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--scenario", choices=["gmm", "z"], default="gmm")
    ap.add_argument("--sweeps", type=int, default=2000)
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--delta", type=float, default=None, help="prior scale (defaults to a typical estimate)")
    args = ap.parse_args(argv)
    logging.getLogger("ebunfold.scenarios").setLevel(logging.ERROR)

    setup = build_setup(preset(args.scenario))
    lam = 20000.0 if args.scenario == "gmm" else None
    y = setup.simulate(lam, 1).y
    delta = args.delta or (2.5e-7 if args.scenario == "gmm" else 7.4e-8)
    beta0 = setup.start(y)
    K, p = setup.K.K, setup.basis.p
    u = make_rng(0, 99).random((args.sweeps, p, 2))

    def run(backend):
        return run_sweeps(K, y, setup.penalty.omega_a, delta, beta0, u, 0, backend=backend)

    print(f"scenario {args.scenario}: n={K.shape[0]} bins, p={p} coefficients, {args.sweeps} sweeps")
    t_np, out_np = best_time(lambda: run("numpy"), args.repeat)
    print(f"numpy : {t_np:8.3f} s  ({args.sweeps / t_np:10.0f} sweeps/s)")
    if not _accel._HAS_NUMBA:
        print("numba : not active (set EBUNFOLD_PURE_NUMPY=0 and install numba)")
        return 0
    t0 = time.perf_counter()
    run_sweeps(K, y, setup.penalty.omega_a, delta, beta0, u[:2], 0, backend="numba")
    print(f"numba compile / cache load: {time.perf_counter() - t0:.2f} s")
    t_nb, out_nb = best_time(lambda: run("numba"), args.repeat)
    print(f"numba : {t_nb:8.3f} s  ({args.sweeps / t_nb:10.0f} sweeps/s)")
    print(f"speedup: {t_np / t_nb:.1f}x")
    same_accepts = np.array_equal(out_np[1], out_nb[1])
    max_rel = float(np.max(np.abs(out_np[0] - out_nb[0])) / np.max(np.abs(out_np[0])))
    print(f"identical accept decisions: {same_accepts}; max relative draw difference {max_rel:.1e}")
    return 0 if same_accepts and max_rel < 1e-10 else 1


if __name__ == "__main__":
    raise SystemExit(main())
