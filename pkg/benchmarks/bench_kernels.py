"""Compare the compiled and pure-Python kernels.

Run with ``python3 benchmarks/bench_kernels.py``. Each case is timed on both
backends from identical inputs; the outputs are checked to agree.
"""

import argparse
import time

import numpy as np

from treerobust import _kernels
from treerobust.lp import BLAND_AFTER, PIV_TOL, TOL
from treerobust.generators import gen_bachelier, gen_remark_example
from treerobust.optimizer import constraint_system


def phase_one_tableau(m, n, rng):
    """Tableau of a random feasible LP with all-artificial starting basis."""
    A = rng.normal(size=(m, n))
    A[rng.random((m, n)) < 0.6] = 0.0
    b = A @ rng.random(n)
    sign = np.where(b < 0, -1.0, 1.0)
    A *= sign[:, None]
    b *= sign
    T = np.zeros((m + 1, n + m + 1))
    T[:m, :n] = A
    T[:m, n:n + m] = np.eye(m)
    T[:m, -1] = b
    T[m] = -T[:m].sum(axis=0)
    T[m, n:n + m] = 0.0
    return T, n + np.arange(m)


def time_call(fn, repeat):
    best = np.inf
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def bench_pivot(m, n, repeat, rng):
    T0, basis0 = phase_one_tableau(m, n, rng)
    results = {}
    for name, mod in (("python", _kernels.python_backend), ("compiled", _kernels.compiled_backend)):
        if mod is None:
            continue

        def run():
            T, basis = T0.copy(), basis0.copy()
            status, iters = mod.pivot_loop(T, basis, n + m, 100_000, TOL, PIV_TOL, BLAND_AFTER)
            return T, basis, status, iters

        results[name] = time_call(run, repeat)
    return results


def bench_dykstra(family, w0, repeat, rng):
    cons = constraint_system(family, w0, "intermediate")
    x0 = rng.normal(size=family.strategy_size) * 2.0
    results = {}
    for name, mod in (("python", _kernels.python_backend), ("compiled", _kernels.compiled_backend)):
        if mod is None:
            continue
        results[name] = time_call(lambda: mod.dykstra(cons.A, cons.b, x0.copy(), 200, 1e-10), repeat)
    return results


def report(label, results, same):
    py = results["python"][0]
    line = f"{label:<38s} python {py * 1e3:9.2f} ms"
    if "compiled" in results:
        c = results["compiled"][0]
        line += f"   compiled {c * 1e3:9.2f} ms   speed-up {py / c:6.1f}x   outputs agree: {same}"
    print(line)


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=3)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()
    rng = np.random.default_rng(args.seed)
    print(f"default backend: {_kernels.BACKEND}")
    if _kernels.compiled_backend is None:
        print("compiled extension not built; only the Python backend is timed")
    for m, n in ((20, 40), (60, 120), (150, 300)):
        res = bench_pivot(m, n, args.repeat, rng)
        same = "compiled" not in res or (
            np.array_equal(res["python"][1][1], res["compiled"][1][1])
            and np.allclose(res["python"][1][0], res["compiled"][1][0], atol=1e-9))
        report(f"simplex pivots {m}x{n} ({res['python'][1][3]} pivots)", res, same)
    for label, fam in (("Dykstra, binary tree T=6", gen_bachelier(6, 0.5, 0.0, [(1.0, 0.2), (1.0, -0.3)])),
                       ("Dykstra, remark family n=41", gen_remark_example(10.0, 41))):
        res = bench_dykstra(fam, 1.0, args.repeat, rng)
        same = "compiled" not in res or np.allclose(res["python"][1][0], res["compiled"][1][0], atol=1e-9)
        report(label, res, same)


if __name__ == "__main__":
    main()
