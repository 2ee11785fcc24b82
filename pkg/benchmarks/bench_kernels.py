"""Wall-clock comparison of the compiled and pure-Python step loops.

Usage: python benchmarks/bench_kernels.py [--scale 0.1]

Each workload runs once per backend with the same seed; the script checks
that both backends return identical traces before reporting the speedup.
"""
import argparse
import time

import numpy as np

from lipbandit import kernels
from lipbandit.arm import BanditInstance
from lipbandit.models import make_nonindexable_arm, restart_instance
from lipbandit.restart import RestartArmSpec, online_restart_learner, restart_index, restart_lambda_star
from lipbandit.simulate import Policy, simulate
from lipbandit.tabular import run_tabular


def _restart_tables(inst):
    specs = [RestartArmSpec(p, w, 500, 25) for p, w in ((0.95, 0.9), (0.95, 0.2), (0.7, 0.95), (0.7, 0.2))]
    lam = restart_lambda_star(specs, inst.alpha).lambda_star
    types, _ = inst.types()
    ages = np.arange(1, 501)
    return {a.label: restart_index(s.p, s.w, lam, ages) for a, s in zip(types, specs)}, specs


def workloads(scale):
    ni = BanditInstance.homogeneous(make_nonindexable_arm(), 10, 3)
    rs = restart_instance()
    tables, specs = _restart_tables(rs)
    steps = lambda k: max(1, int(k * scale))
    return [
        ("simulate restart N=100", steps(20_000),
         lambda h, b: simulate(rs, Policy("LIP", tables), h, 0, backend=b).reward),
        ("alg1 nonindexable N=10", steps(200_000),
         lambda h, b: run_tabular(ni, 1, h, 0, backend=b).lam),
        ("alg2 nonindexable N=10", steps(200_000),
         lambda h, b: run_tabular(ni, 2, h, 0, backend=b).lam),
        ("restart learner N=100", steps(20_000),
         lambda h, b: online_restart_learner(specs, 16, h, 0, backend=b).lam),
    ]


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--scale", type=float, default=0.1, help="fraction of the full step counts")
    args = ap.parse_args()
    if "cython" not in kernels.BACKENDS:
        raise SystemExit("compiled extension not built; nothing to compare")
    print(f"{'workload':28s} {'steps':>8s} {'python s':>10s} {'cython s':>10s} {'speedup':>8s}")
    for name, steps, fn in workloads(args.scale):
        times, outs = {}, {}
        for b in ("python", "cython"):
            t0 = time.perf_counter()
            outs[b] = fn(steps, b)
            times[b] = time.perf_counter() - t0
        same = np.array_equal(outs["python"], outs["cython"])
        print(f"{name:28s} {steps:8d} {times['python']:10.3f} {times['cython']:10.3f} "
              f"{times['python'] / times['cython']:8.1f}{'' if same else '  MISMATCH'}")


if __name__ == "__main__":
    main()
