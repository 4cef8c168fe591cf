#!/usr/bin/env python3
"""Benchmark the jit kernels against their pure-numpy fallbacks.

Runs both implementations of each kernel regardless of LAUNDERSCAN_NUMBA,
so the flag's cost is visible before you flip it.

Usage: python benchmarks/bench_kernels.py [--ips 1000000] [--prefixes 1000]
                                          [--events 2000] [--repeat 5]
"""

import argparse
import random
import time

import numpy as np

from launderscan import kernels
from launderscan.ipattr import IpAttributionTable, u32_to_ip


def _timed(fn, *args, repeat=5):
    best = float("inf")
    result = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        result = fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best, result


def bench_lpm(n_ips, n_prefixes, repeat):
    rng = random.Random(42)
    table = IpAttributionTable()
    made = set()
    while len(made) < n_prefixes:
        mask_len = rng.randrange(0, 33)
        mask = (0xFFFFFFFF << (32 - mask_len)) & 0xFFFFFFFF if mask_len else 0
        net = rng.randrange(2**32) & mask
        if (net, mask_len) in made:
            continue
        made.add((net, mask_len))
        table.insert(f"{u32_to_ip(net)}/{mask_len}", f"isp{len(made) % 29}")
    table.freeze()
    ips = np.random.default_rng(42).integers(0, 2**32, size=n_ips, dtype=np.uint64).astype(np.uint32)
    args = (ips, *table._frozen)

    t_np, want = _timed(kernels._lpm_numpy, *args, repeat=repeat)
    rows = [("longest-prefix match", "numpy", t_np, n_ips / t_np)]
    if kernels.USING_NUMBA:
        kernels._lpm_numba(*args)  # compile outside the timer
        t_nb, got = _timed(kernels._lpm_numba, *args, repeat=repeat)
        assert np.array_equal(got, want), "kernel mismatch"
        rows.append(("longest-prefix match", "numba", t_nb, n_ips / t_nb))
    return rows


def bench_period(n_events, repeat):
    rng = random.Random(7)
    half = n_events // 2
    ts = np.cumsum([rng.randrange(500, 4_000) for _ in range(half)]).astype(np.int64)
    dom = np.array([rng.randrange(0, 50) for _ in range(half)], dtype=np.int32)
    period = int(ts[-1] + 60_000)
    ts = np.concatenate([ts, ts + period])
    dom = np.concatenate([dom, dom])

    t_np, want = _timed(kernels._period_numpy, ts, dom, 1_000, 3, repeat=repeat)
    rows = [("repeat-cycle search", "numpy", t_np, n_events / t_np)]
    if kernels.USING_NUMBA:
        kernels._period_numba(ts, dom, np.int64(1_000), np.int64(3))
        t_nb, got = _timed(
            kernels._period_numba, ts, dom, np.int64(1_000), np.int64(3), repeat=repeat
        )
        assert int(got) == int(want), "kernel mismatch"
        rows.append(("repeat-cycle search", "numba", t_nb, n_events / t_nb))
    return rows


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--ips", type=int, default=1_000_000)
    parser.add_argument("--prefixes", type=int, default=1_000)
    parser.add_argument("--events", type=int, default=2_000)
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args()

    print(f"numba available and enabled: {kernels.USING_NUMBA}")
    rows = bench_lpm(args.ips, args.prefixes, args.repeat)
    rows += bench_period(args.events, args.repeat)
    print(f"{'kernel':<24} {'path':<7} {'best (s)':>10} {'items/s':>14}")
    for kernel, path, secs, rate in rows:
        print(f"{kernel:<24} {path:<7} {secs:>10.4f} {rate:>14,.0f}")


if __name__ == "__main__":
    main()
