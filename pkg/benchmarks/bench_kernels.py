"""Benchmark the pure-Python simulation kernels against the compiled ones.

Runs the same seeded cluster advance and catch-up scans through both
implementations and reports per-simulated-second cost plus the speedup.

    python3 benchmarks/bench_kernels.py [--seconds 50000] [--workers 12]
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from streamscale._kernels import _pure

try:
    from streamscale._kernels import _core
except ImportError:
    _core = None


def make_inputs(seconds: int, workers: int, seed: int = 7):
    rng = np.random.default_rng(seed)
    workload = rng.integers(5_000, 40_000, size=seconds).astype(np.int64)
    shares = rng.dirichlet(np.full(workers, 5.0))
    capacities = rng.integers(4_500, 5_000, size=workers).astype(np.int64)
    noise = np.ascontiguousarray(1.0 + rng.uniform(-0.02, 0.02, size=(seconds, workers)))
    sustain = float(np.min(capacities / shares))
    return workload, np.ascontiguousarray(shares), capacities, noise, sustain


def run_advance(impl, inputs) -> float:
    workload, shares, capacities, noise, sustain = inputs
    n, workers = len(workload), len(shares)
    out_tput = np.empty(n, dtype=np.int64)
    out_lag = np.empty(n, dtype=np.int64)
    out_latency = np.empty(n, dtype=np.float64)
    out_cpu = np.empty(n, dtype=np.float64)
    tput_sum = np.zeros(workers, dtype=np.int64)
    cpu_sum = np.zeros(workers, dtype=np.float64)
    started = time.perf_counter()
    impl.advance_seconds(
        workload, shares, capacities, noise,
        0, 0, 0, 10, 0, int(sustain), sustain, 0.2,
        out_tput, out_lag, out_latency, out_cpu, tput_sum, cpu_sum,
    )
    return time.perf_counter() - started


def run_catchup(impl, reps: int) -> float:
    forecast = np.ascontiguousarray(
        20_000.0 + 5_000.0 * np.sin(np.arange(900) / 40.0)
    )
    started = time.perf_counter()
    for k in range(reps):
        impl.catchup_seconds(27_500.0, forecast, 30, 500_000.0 + k)
    return time.perf_counter() - started


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--seconds", type=int, default=50_000,
                        help="simulated seconds per advance run (default 50000)")
    parser.add_argument("--workers", type=int, default=12,
                        help="cluster width (default 12)")
    parser.add_argument("--catchup-reps", type=int, default=2_000,
                        help="catch-up scans per run (default 2000)")
    args = parser.parse_args()

    inputs = make_inputs(args.seconds, args.workers)
    print(f"advance_seconds: {args.seconds} simulated seconds, {args.workers} workers")
    pure_s = run_advance(_pure, inputs)
    print(f"  pure      {pure_s:8.3f} s  ({1e6 * pure_s / args.seconds:7.2f} us/sim-s)")
    if _core is not None:
        core_s = run_advance(_core, inputs)
        print(f"  compiled  {core_s:8.3f} s  ({1e6 * core_s / args.seconds:7.2f} us/sim-s)")
        print(f"  speedup   {pure_s / core_s:8.1f}x")
    else:
        print("  compiled  unavailable (extension not built)")

    print(f"catchup_seconds: {args.catchup_reps} scans over a 900 s horizon")
    pure_s = run_catchup(_pure, args.catchup_reps)
    print(f"  pure      {pure_s:8.3f} s  ({1e6 * pure_s / args.catchup_reps:7.2f} us/scan)")
    if _core is not None:
        core_s = run_catchup(_core, args.catchup_reps)
        print(f"  compiled  {core_s:8.3f} s  ({1e6 * core_s / args.catchup_reps:7.2f} us/scan)")
        print(f"  speedup   {pure_s / core_s:8.1f}x")


if __name__ == "__main__":
    main()
