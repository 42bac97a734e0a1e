"""Time the numba and pure-numpy kernels side by side, plus one full run.

    python benchmarks/bench_kernels.py [--repeat 20] [--nodes 20 50 200]

The end-to-end numbers come from two fresh interpreters, one with
FANETSIM_DISABLE_NUMBA=1, because the backend is fixed at import time.
"""

import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from fanetsim import kernels

E2E = (
    "import time; from fanetsim import ScenarioConfig, Simulator, BACKEND;"
    "cfg = ScenarioConfig(node_count={n}, sim_duration={d}, seed=1);"
    "Simulator(cfg.with_(sim_duration=0.05)).run();"  # warm-up / JIT
    "t = time.perf_counter(); Simulator(cfg).run();"
    "print(BACKEND, time.perf_counter() - t)"
)


def _inputs(n, rng):
    pos = rng.uniform(0, 500, (n, 3))
    lo, hi = np.zeros(3), np.array([500.0, 500.0, 100.0])
    a_cnt = rng.integers(0, 50, n).astype(np.int64)
    b_cnt = rng.integers(0, 50, n).astype(np.int64)
    cache_pos = rng.uniform(0, 500, (n, n, 3))
    cache_cnt = rng.integers(0, 5, (n, n)).astype(np.int64)
    cache_t = rng.uniform(0, 1, (n, n))
    u = rng.random(1 << 16)
    return {
        "adjacency": (pos, 150.0),
        "reflect_into_box": (pos * 1.3 - 50.0, lo, hi),
        "merge_newer": lambda: (pos.copy(), a_cnt.copy(), np.zeros(n), pos, b_cnt, np.ones(n)),
        "count_below": (u, 0.1),
        "pair_errors": (cache_pos, cache_cnt, cache_t, pos, 1.0, 714.0),
    }


def bench_kernels(sizes, repeat):
    impls = {"numpy": kernels.numpy_impl}
    if kernels.numba_impl is not None:
        impls["numba"] = kernels.numba_impl
    rng = np.random.default_rng(0)
    print(f"{'kernel':<18}{'n':>6}" + "".join(f"{k + ' [us]':>14}" for k in impls) + f"{'speedup':>10}")
    for n in sizes:
        inputs = _inputs(n, rng)
        for name, args in inputs.items():
            times = {}
            for label, impl in impls.items():
                fn = impl[name]
                make = args if callable(args) else (lambda a=args: a)
                fn(*make())  # compile outside the timer
                t = min(timeit.repeat(lambda: fn(*make()), number=10, repeat=repeat)) / 10
                times[label] = t * 1e6
            speed = times["numpy"] / times["numba"] if "numba" in times else float("nan")
            print(f"{name:<18}{n:>6}" + "".join(f"{v:>14.1f}" for v in times.values()) + f"{speed:>10.2f}")


def bench_end_to_end(nodes, duration):
    print(f"\nend to end: {nodes} nodes, {duration} s simulated")
    for disable in ("0", "1"):
        env = dict(os.environ, FANETSIM_DISABLE_NUMBA=disable)
        out = subprocess.run(
            [sys.executable, "-c", E2E.format(n=nodes, d=duration)],
            env=env, capture_output=True, text=True, check=True,
        ).stdout.split()
        print(f"  {out[0]:<6} {float(out[1]):.3f} s")


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--nodes", type=int, nargs="+", default=[10, 50, 200])
    ap.add_argument("--repeat", type=int, default=20)
    ap.add_argument("--e2e-nodes", type=int, default=20)
    ap.add_argument("--e2e-duration", type=float, default=2.0)
    args = ap.parse_args()
    print(f"active backend: {kernels.BACKEND}")
    bench_kernels(args.nodes, args.repeat)
    bench_end_to_end(args.e2e_nodes, args.e2e_duration)


if __name__ == "__main__":
    main()
