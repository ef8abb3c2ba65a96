"""Compiled versus pure-Python kernel timings on identical inputs.

Usage: python3 benchmarks/bench_kernels.py [--n 1000000] [--repeat 3]
"""

import argparse
import time

import numpy as np

from ng911sim import kernels
from ng911sim.dispatch import TravelModel
from ng911sim.validation import asymmetric_triple
from ng911sim.oracles import vehicle_preferences


def best_of(fn, repeat):
    times = []
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n", type=int, default=1_000_000)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    rng = np.random.default_rng(0)
    n = args.n
    ia = rng.exponential(1 / 5.0, n)
    work = rng.standard_exponential(n)
    stations, atoms, mu = asymmetric_triple()
    pref = vehicle_preferences(stations, atoms, TravelModel())
    lam = sum(a.rate for a in atoms)
    atom = rng.choice(len(atoms), size=n, p=[a.rate / lam for a in atoms])
    ia2 = rng.exponential(1 / lam, n)

    cases = {
        "mmc_waits c=8": lambda b: kernels.mmc_waits(ia, work, 1.0, 8, None, backend=b),
        "mmc_waits c=5 loss": lambda b: kernels.mmc_waits(ia, work, 1.0, 5, 0, backend=b),
        "hypercube_loss N=3": lambda b: kernels.hypercube_loss(ia2, atom, work, pref, mu, backend=b),
    }
    try:
        kernels._backend("cython")
        have_c = True
    except ImportError:
        have_c = False
    print(f"n={n}  compiled extension available: {have_c}")
    print(f"{'kernel':<22}{'python s':>10}{'cython s':>10}{'speedup':>9}  identical")
    for name, fn in cases.items():
        tp, op = best_of(lambda: fn("python"), args.repeat)
        if not have_c:
            print(f"{name:<22}{tp:>10.3f}{'-':>10}{'-':>9}  -")
            continue
        tc, oc = best_of(lambda: fn("cython"), args.repeat)
        same = all(np.array_equal(np.asarray(a), np.asarray(b)) for a, b in zip(op, oc))
        print(f"{name:<22}{tp:>10.3f}{tc:>10.3f}{tp / tc:>8.1f}x  {same}")


if __name__ == "__main__":
    main()
