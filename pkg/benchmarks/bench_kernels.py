"""Time the numba kernels against their numpy fallbacks.

    python3 benchmarks/bench_kernels.py [--repeat 3] [--json out.json]

The backend is chosen per call from ``ACCELCUT_NUMBA`` (``0`` selects
numpy), so both paths run in one process.  The first numba call of each
kernel is a warm-up and is not timed.
"""

from __future__ import annotations

import argparse
import json
import os
import time

import numpy as np

from accelcut import kernels, problems
from accelcut.problems import jssp as jssp_mod


def _cases():
    rng = np.random.default_rng(0)
    tsp = problems.generate("tsp", {"n": 9}, 1).payload
    cw = problems.generate("cwlp", {"customers": 9, "warehouses": 4}, 1).payload
    # the kernels are called directly since these sizes exceed the oracle guards
    _, _, p, job_arcs, pairs = jssp_mod._arrays(problems.generate("jssp", {"jobs": 3, "machines": 5}, 1).payload)
    nrows, nvars, npts = 400, 200, 2000
    dense = (rng.random((nrows, nvars)) < 0.05) * rng.normal(size=(nrows, nvars))
    indptr = np.concatenate([[0], np.cumsum((dense != 0).sum(axis=1))])
    indices = np.nonzero(dense)[1]
    data = dense[dense != 0]
    rhs = rng.normal(size=nrows)
    sense = rng.integers(0, 3, size=nrows)
    pts = rng.random((npts, nvars))
    return {
        "tsp_n9": lambda: kernels.tsp_best_tour(tsp.cost_array()),
        "cwlp_9x4": lambda: kernels.cwlp_best_assignment(cw.d, cw.u, cw.f, cw.c),
        "jssp_3x5": lambda: kernels.jssp_best_schedule(p, job_arcs, pairs),
        "max_violation_400x2000": lambda: kernels.max_violation(indptr, indices, data, rhs, sense, pts),
    }


def _time(fn, repeat):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def run(repeat: int = 3) -> list:
    rows = []
    saved = os.environ.get("ACCELCUT_NUMBA")
    try:
        for name, fn in _cases().items():
            os.environ["ACCELCUT_NUMBA"] = "1"
            fn()  # compile
            t_nb = _time(fn, repeat) if kernels.HAS_NUMBA else float("nan")
            os.environ["ACCELCUT_NUMBA"] = "0"
            t_np = _time(fn, repeat)
            rows.append({"kernel": name, "numba_s": t_nb, "numpy_s": t_np, "speedup": t_np / t_nb})
    finally:
        if saved is None:
            os.environ.pop("ACCELCUT_NUMBA", None)
        else:
            os.environ["ACCELCUT_NUMBA"] = saved
    return rows


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--json")
    args = ap.parse_args(argv)
    rows = run(args.repeat)
    print(f"{'kernel':<26}{'numba [s]':>12}{'numpy [s]':>12}{'speedup':>10}")
    for r in rows:
        print(f"{r['kernel']:<26}{r['numba_s']:>12.4f}{r['numpy_s']:>12.4f}{r['speedup']:>10.1f}")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(rows, fh, indent=1)


if __name__ == "__main__":
    main()
