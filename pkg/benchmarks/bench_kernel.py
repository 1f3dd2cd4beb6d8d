"""Slot-loop throughput: compiled kernel vs pure-Python fallback.

    python benchmarks/bench_kernel.py [--slots N] [--repeat R]

Both backends run the same seeded simulation; the script checks that their
counters match before reporting slots per second.
"""
import argparse
import time

import numpy as np

from ehlink import EnergyProfile, LinkConfig, PolicySpec, ReceiverMode
from ehlink import montecarlo
from ehlink.kernel import BACKENDS

CASES = {
    "disjoint": PolicySpec.disjoint(800),
    "joint-csi": PolicySpec.joint(900, ReceiverMode.CSI_AWARE),
    "linear": PolicySpec.linear(700, 100),
}


def best_time(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--slots", type=int, default=200_000)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    config, profile = LinkConfig(), EnergyProfile()
    n = args.slots
    print(f"backends: {', '.join(sorted(BACKENDS))}; {n} measured slots + {montecarlo.BURN_IN} burn-in")
    print(f"{'case':<10} {'backend':<8} {'seconds':>9} {'Mslot/s':>9} {'speedup':>8}")
    for name, policy in CASES.items():
        results = {}
        for backend in ("python", "cython"):
            if backend not in BACKENDS:
                continue
            secs, res = best_time(lambda: montecarlo.simulate(config, profile, policy, n, seed=7,
                                                              backend=backend), args.repeat)
            results[backend] = (secs, res)
        base = results["python"][0]
        for backend, (secs, res) in results.items():
            rate = (n + montecarlo.BURN_IN) / secs / 1e6
            print(f"{name:<10} {backend:<8} {secs:9.4f} {rate:9.2f} {base / secs:8.1f}x")
        if len(results) == 2:
            same = np.array_equal(results["python"][1].batches, results["cython"][1].batches)
            print(f"{'':<10} counters identical: {same}")


if __name__ == "__main__":
    main()
