"""Time the numba kernels against their pure-numpy twins.

    python benchmarks/bench_kernels.py            # full workloads
    python benchmarks/bench_kernels.py --quick    # small smoke run
    python benchmarks/bench_kernels.py --json out.json

Both backends run in one process: the kernel tables in
``welfareid.kernels`` hold each implementation directly, so the
``WELFAREID_DISABLE_NUMBA`` switch is not needed here.  Numba kernels are
called once before timing so compilation is excluded.
"""
import argparse
import json
import platform
import timeit

import numpy as np

from welfareid import kernels
from welfareid.kernels import NUMBA_KERNELS, NUMPY_KERNELS


def workloads(scale):
    """Argument tuples per kernel; ``scale`` multiplies the problem sizes."""
    rng = np.random.default_rng(0)
    n_pts = int(20_000 * scale)
    n_agents = int(100_000 * scale)
    n_obs = int(2_000 * scale)

    prices = np.ascontiguousarray(rng.uniform(0.1, 5.0, (n_pts, 1)))
    incomes = rng.uniform(1.0, 20.0, n_pts)
    nodes, weights = np.polynomial.hermite_e.hermegauss(16)
    probs = (prices, incomes, np.array([0.0, 0.5]), np.array([1.0, 1.0]),
             np.array([kernels.LOG1P, kernels.LOG1P], dtype=np.int64),
             np.exp(0.5 + 0.1 * nodes), weights / weights.sum(), kernels.LOGIT, 0.3)

    ic = rng.gumbel(size=(n_agents, 3))
    sl = np.exp(rng.normal(0, 0.3, (n_agents, 1))) * np.array([[1.0, 0.8, 1.1]])
    kinds = np.array([kernels.LOG1P, kernels.LINEAR, kernels.LINEAR], dtype=np.int64)
    welfare = (ic, sl, kinds, np.array([1.0, 2.5]), 10.0, 10.0, 1e-12)
    cv = (ic[: n_agents // 10], sl[: n_agents // 10], kinds, np.array([1.0, 2.0]),
          np.array([1.5, 2.5]), 10.0, 10.0, 1e-12)

    r = np.ascontiguousarray(rng.uniform(0, 3, (n_obs, 2)))
    bounds = (r, rng.uniform(5, 15, n_obs), rng.uniform(0, 1, n_obs), np.array([1.0, 2.0]), 10.0,
              np.linspace(9, 14, 200), 1e-12)

    t = np.concatenate([np.zeros(3), np.linspace(0, 1, 9), np.ones(3)])
    spline = (rng.uniform(0, 1, n_pts * 5), t, 3)
    return {"choice_probs": probs, "agent_welfare": welfare, "agent_cv": cv,
            "cdf_bounds_scan": bounds, "bspline_basis": spline}


def best_time(fn, args, repeat):
    timer = timeit.Timer(lambda: fn(*args))
    number, _ = timer.autorange()
    return min(timer.repeat(repeat=repeat, number=number)) / number


def run(scale=1.0, repeat=5):
    rows = []
    for name, args in workloads(scale).items():
        NUMBA_KERNELS[name](*args)  # compile
        fast = best_time(NUMBA_KERNELS[name], args, repeat)
        slow = best_time(NUMPY_KERNELS[name], args, repeat)
        rows.append({"kernel": name, "numba_s": fast, "numpy_s": slow, "speedup": slow / fast})
    return rows


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--quick", action="store_true", help="1%% problem sizes, 2 repeats")
    ap.add_argument("--json", help="write results to this file")
    args = ap.parse_args(argv)
    rows = run(0.01, 2) if args.quick else run()
    print(f"{'kernel':<16} {'numba [ms]':>11} {'numpy [ms]':>11} {'speedup':>8}")
    for r in rows:
        print(f"{r['kernel']:<16} {1e3 * r['numba_s']:>11.3f} {1e3 * r['numpy_s']:>11.3f} "
              f"{r['speedup']:>7.1f}x")
    if args.json:
        meta = {"python": platform.python_version(), "machine": platform.machine(),
                "numpy": np.__version__}
        with open(args.json, "w", encoding="utf-8") as fh:
            json.dump({"meta": meta, "results": rows}, fh, indent=2)
    return rows


if __name__ == "__main__":
    main()
