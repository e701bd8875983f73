"""Timing comparison of the numba and numpy kernel builds.

Each hot loop ships in two builds selected by the AWGSIM_BACKEND
environment variable; this script times both on bench-sized workloads
and verifies they return bit-identical results.  Run it from the repo
root after an editable install:

    python3 benchmarks/bench_kernels.py
    python3 benchmarks/bench_kernels.py --repeats 9 --seed 3

The numpy build of choose_phase_branch is already fully vectorized, so
the gap there stays small; the big win is the serial dead-time walk,
which numpy can only express as a data-dependent python loop.
"""

import argparse
import math
import sys
import time

import numpy as np

from awgsim._backend import HAS_NUMBA
from awgsim.kernels import (
    choose_phase_branch,
    chsh_scan_kernel,
    deadtime_filter,
    intersect_count,
)


def _clicks(rng, n_gates, n_clicks):
    """Sorted unique gate indices, the shape the detector path produces."""
    return np.unique(rng.integers(0, n_gates, n_clicks))


def _workloads(seed):
    rng = np.random.default_rng(seed)
    gates = 500_000_000
    clicks_1 = _clicks(rng, gates, 1_000_000)
    clicks_2 = _clicks(rng, gates, 1_000_000)
    principal = rng.uniform(0.0, math.pi, 1_000_000)
    anchors = rng.uniform(0.0, 2.0 * math.pi, 1_000_000)
    centers = rng.uniform(0.0, 2.0 * math.pi, 92)
    e = -np.cos(centers[:, None] + centers[None, :]) * 0.9
    return [
        (
            "deadtime_filter",
            f"{clicks_1.size:,} clicks, blank 1000",
            lambda backend: deadtime_filter(clicks_1, 1000, backend=backend),
        ),
        (
            "intersect_count",
            f"2 x {clicks_1.size:,} sorted gates",
            lambda backend: intersect_count(clicks_1, clicks_2, backend=backend),
        ),
        (
            "choose_phase_branch",
            f"{principal.size:,} samples",
            lambda backend: choose_phase_branch(principal, anchors, backend=backend),
        ),
        (
            "chsh_scan_kernel",
            "92 x 92 correlation matrix",
            lambda backend: chsh_scan_kernel(e, backend=backend),
        ),
    ]


def _best_of(fn, backend, repeats):
    fn(backend)  # warmup; first numba call includes compilation
    times = []
    for _ in range(repeats):
        started = time.perf_counter()
        result = fn(backend)
        times.append(time.perf_counter() - started)
    return min(times), result


def _same(a, b):
    if isinstance(a, np.ndarray):
        return np.array_equal(a, b)
    if isinstance(a, tuple):
        return len(a) == len(b) and all(_same(x, y) for x, y in zip(a, b))
    return a == b


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeats", type=int, default=5,
                        help="timed runs per kernel; best is reported")
    parser.add_argument("--seed", type=int, default=7)
    args = parser.parse_args(argv)

    if not HAS_NUMBA:
        print("numba is not importable; only the numpy build can run",
              file=sys.stderr)

    header = (f"{'kernel':<22}{'workload':<30}{'numpy':>10}"
              f"{'numba':>10}{'speedup':>9}  match")
    print(header)
    print("-" * len(header))
    mismatched = False
    for name, workload, fn in _workloads(args.seed):
        t_np, r_np = _best_of(fn, "numpy", args.repeats)
        if HAS_NUMBA:
            t_nb, r_nb = _best_of(fn, "numba", args.repeats)
            match = _same(r_np, r_nb)
            mismatched |= not match
            print(f"{name:<22}{workload:<30}{t_np * 1e3:>8.2f} ms"
                  f"{t_nb * 1e3:>8.2f} ms{t_np / t_nb:>8.1f}x"
                  f"  {'yes' if match else 'NO'}")
        else:
            print(f"{name:<22}{workload:<30}{t_np * 1e3:>8.2f} ms"
                  f"{'-':>10}{'-':>9}  -")
    if mismatched:
        print("backend results differ; the builds are out of sync",
              file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
