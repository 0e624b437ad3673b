"""Compare the compiled and pure-Python integration kernels.

    python benchmarks/bench_kernels.py [--points 200] [--repeat 3]

Times one period of the seasonal competition model for a batch of points
with each available backend and reports the speed-up and the largest
disagreement between backends.
"""
import argparse
import json
import time

import numpy as np

from carrying_simplex import _backend
from carrying_simplex.flow import flow_many
from carrying_simplex.model import lv_seasonal, lv_smooth


def cases():
    A = [[1.0, 0.5], [0.5, 1.0]]
    yield "seasonal d=2", lv_seasonal([1.0, 1.0], 0.5, [3.0, 3.0], A)
    yield "forced LV d=3", lv_smooth([[1.0, 0.5, 0.0], [1.0, 0.0, 0.3], [1.0, 0.2, 0.2]],
                                     [[1.0, 0.4, 0.3], [0.2, 1.0, 0.5], [0.6, 0.1, 1.0]])


def best_time(fn, repeat):
    best = float("inf")
    out = None
    for _ in range(repeat):
        t = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t)
    return best, out


def run(points=200, repeat=3, seed=0):
    rng = np.random.default_rng(seed)
    rows = []
    for name, spec in cases():
        X = rng.uniform(0.0, 2.0, size=(points, spec.d))
        res = {}
        for backend in sorted(_backend.BACKENDS):
            res[backend] = best_time(
                lambda: flow_many(spec, 0.0, spec.T, X, backend=backend), repeat)
        row = {"case": name, "points": points}
        row.update({f"{b}_s": t for b, (t, _) in res.items()})
        if "cython" in res:
            row["speedup"] = res["python"][0] / res["cython"][0]
            row["max_abs_diff"] = float(np.max(np.abs(res["python"][1] - res["cython"][1])))
        rows.append(row)
    return rows


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--points", type=int, default=200)
    p.add_argument("--repeat", type=int, default=3)
    p.add_argument("--json", action="store_true", help="print JSON rows")
    a = p.parse_args(argv)
    rows = run(a.points, a.repeat)
    if a.json:
        print(json.dumps(rows, indent=2))
        return
    if "cython" not in _backend.BACKENDS:
        print("compiled kernel not available; timing the Python kernel only")
    for r in rows:
        line = f"{r['case']:<16} n={r['points']:<5} python {r['python_s'] * 1e3:9.2f} ms"
        if "cython_s" in r:
            line += (f"   cython {r['cython_s'] * 1e3:8.3f} ms   x{r['speedup']:7.1f}"
                     f"   max|diff| {r['max_abs_diff']:.1e}")
        print(line)


if __name__ == "__main__":
    main()
