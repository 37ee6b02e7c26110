"""Compiled kernels vs the pure-numpy fallback.

Each path runs in its own interpreter because ``DROOPMPC_DISABLE_JIT`` is read
at import time.  The workload covers the three hot spots: the dual simplex
(LP relaxations), branch and bound on a two-step adaptive instance, and the
grid oracle.  Both paths must agree on every objective.

    python3 benchmarks/bench_jit.py [--repeat N] [--resolution R]
"""
import argparse
import json
import os
import subprocess
import sys

CHILD = r"""
import json, sys, time
import numpy as np
from droopmpc.model import (ADAPTIVE, FIXED, ForecastBounds, InitialConditions, MgParams,
                            build_mpc_problem, solve_mpc)
from droopmpc.oracle import grid_oracle
from droopmpc.solver import SolveOptions, solve_lp_relaxation

repeat, resolution = int(sys.argv[1]), int(sys.argv[2])
P = MgParams().with_(horizon_j=2)
bounds = ForecastBounds([1.2, 1.6], [1.5, 2.0], [1.0, 1.1], [1.2, 1.4])
init = InitialConditions(0.8, 1)

def timed(fn):
    fn()  # warm-up, includes compilation on the JIT path
    t0 = time.perf_counter()
    for _ in range(repeat):
        out = fn()
    return (time.perf_counter() - t0) / repeat, out

prob = build_mpc_problem(P, bounds, init, ADAPTIVE)
res = {}
res["lp_relaxation"] = timed(lambda: solve_lp_relaxation(prob).objective)
res["bnb_adaptive_j2"] = timed(
    lambda: solve_mpc(P, bounds, init, ADAPTIVE, SolveOptions(max_nodes=300))[1].objective)
fixed = build_mpc_problem(P, bounds, init, FIXED)
res["oracle_fixed_j2"] = timed(lambda: grid_oracle(fixed, resolution).objective)
print(json.dumps({k: {"seconds": t, "objective": float(v)} for k, (t, v) in res.items()}))
"""


def run(disable: bool, repeat: int, resolution: int) -> dict:
    env = dict(os.environ)
    env["DROOPMPC_DISABLE_JIT"] = "1" if disable else "0"
    out = subprocess.run([sys.executable, "-c", CHILD, str(repeat), str(resolution)], env=env,
                         check=True, capture_output=True, text=True)
    return json.loads(out.stdout.strip().splitlines()[-1])


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--resolution", type=int, default=6)
    args = ap.parse_args(argv)

    jit = run(False, args.repeat, args.resolution)
    py = run(True, args.repeat, args.resolution)
    print(f"{'kernel':<18}{'numba [s]':>12}{'numpy [s]':>12}{'speed-up':>10}  objectives agree")
    agree = True
    for name in jit:
        a, b = jit[name], py[name]
        same = abs(a["objective"] - b["objective"]) <= 1e-9 * (1.0 + abs(a["objective"]))
        agree &= same
        print(f"{name:<18}{a['seconds']:>12.4f}{b['seconds']:>12.4f}"
              f"{b['seconds'] / max(a['seconds'], 1e-12):>9.1f}x  {'yes' if same else 'NO'}")
    return 0 if agree else 1


if __name__ == "__main__":
    sys.exit(main())
