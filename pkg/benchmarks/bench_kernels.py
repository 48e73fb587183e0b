"""Time the hot kernels under the numba and pure-numpy backends.

Each backend runs in its own interpreter (the backend is fixed at import
time by ``EFLOTTERY_NUMBA``). Compilation is timed separately from the
steady-state runs.

    python3 benchmarks/bench_kernels.py [--repeat 3]
"""

from __future__ import annotations

import argparse
import json
import os
import subprocess
import sys
import time

import numpy as np


def _random_instance(rng, n, m):
    from eflottery.valuations import Instance, ValuationFn

    rows = []
    for _ in range(n):
        row = []
        for _ in range(m):
            kind = rng.integers(3)
            if kind == 0:
                row.append(ValuationFn.linear(float(rng.uniform(0.5, 1.5))))
            elif kind == 1:
                row.append(ValuationFn.power(float(rng.uniform(1, 3))))
            else:
                row.append(ValuationFn.inverted_power(float(rng.uniform(1, 3))))
        rows.append(row)
    return Instance(rows)


def workloads():
    from fractions import Fraction

    from eflottery._kernels import dominator_search
    from eflottery.flow import SolverConfig, solve_ef_lottery
    from eflottery.lp import LinearProgram, solve_lp
    from eflottery.verification import grid_outcomes

    rng = np.random.default_rng(7)
    flow_instances = [_random_instance(rng, 3, 2) for _ in range(3)]
    dense = []
    for _ in range(20):
        A = rng.uniform(-1, 1, (40, 60))
        lp = LinearProgram(60, rng.uniform(0, 1, 60), upper=np.full(60, 5.0))
        for r in range(40):
            lp.add_row(np.arange(60), A[r], "<=", float(rng.uniform(1, 3)))
        dense.append(lp)
    inst = _random_instance(rng, 2, 1)
    outs = grid_outcomes(2, 1, 4) / 4
    cross = inst.cross_utilities(outs)

    def flow_lp():
        for ins in flow_instances:
            solve_ef_lottery(ins, SolverConfig(Fraction(1, 8)))

    def dense_lp():
        for lp in dense:
            solve_lp(lp)

    def dominators():
        for t in (0.2, 0.4, 0.6):
            dominator_search(cross, np.array([t, t]), 20, True)

    return {"flow_lp_n3_m2_k8": flow_lp, "dense_lp_40x60_x20": dense_lp, "dominator_search_k4_d20": dominators}


def worker(repeat: int) -> dict:
    from eflottery import backend_name

    out = {"backend": backend_name()}
    for name, fn in workloads().items():
        t0 = time.perf_counter()
        fn()
        first = time.perf_counter() - t0
        times = []
        for _ in range(repeat):
            t0 = time.perf_counter()
            fn()
            times.append(time.perf_counter() - t0)
        out[name] = {"first": first, "best": min(times)}
    return out


def main(argv=None) -> int:
    p = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--repeat", type=int, default=3)
    p.add_argument("--worker", action="store_true", help=argparse.SUPPRESS)
    args = p.parse_args(argv)
    if args.worker:
        print(json.dumps(worker(args.repeat)))
        return 0

    results = {}
    for flag in ("1", "0"):
        env = dict(os.environ, EFLOTTERY_NUMBA=flag)
        proc = subprocess.run(
            [sys.executable, __file__, "--worker", "--repeat", str(args.repeat)],
            env=env, capture_output=True, text=True, check=True,
        )
        res = json.loads(proc.stdout.strip().splitlines()[-1])
        results[res["backend"]] = res

    names = [k for k in results["numpy"] if k != "backend"]
    print(f"{'workload':28s} {'numba first':>12s} {'numba best':>11s} {'numpy best':>11s} {'speedup':>8s}")
    for k in names:
        nb, npy = results.get("numba", {}).get(k), results["numpy"][k]
        if nb is None:
            print(f"{k:28s} {'-':>12s} {'-':>11s} {npy['best']:11.4f} {'-':>8s}")
            continue
        print(f"{k:28s} {nb['first']:12.4f} {nb['best']:11.4f} {npy['best']:11.4f} {npy['best'] / nb['best']:8.2f}x")
    return 0


if __name__ == "__main__":
    sys.exit(main())
