"""Compare the numba and pure-numpy kernel backends.

In-process: batched box overlap, jitted loop vs vectorized numpy, on the same
inputs (results must agree). Subprocess: one full scenario run per backend,
toggled through COTDRIVE_DISABLE_NUMBA.

    python benchmarks/bench_kernels.py [--rows 60] [--repeat 2000]
"""

import argparse
import os
import subprocess
import sys
import textwrap
import timeit

import numpy as np

from cotdrive import _accel, kernels


def random_rows(rng, n):
    return np.column_stack([
        rng.uniform(-8, 8, n), rng.uniform(-8, 8, n), rng.uniform(-np.pi, np.pi, n),
        rng.uniform(0.3, 3.0, n), rng.uniform(0.3, 1.5, n),
    ])


def bench_overlap(rows: int, repeat: int):
    rng = np.random.default_rng(0)
    a, b = random_rows(rng, rows), random_rows(rng, rows)
    fast = kernels.overlap_rows_loop(a, b)
    ref = kernels.overlap_rows_numpy(a, b)
    assert np.array_equal(fast, ref), "backends disagree"
    t_loop = min(timeit.repeat(lambda: kernels.overlap_rows_loop(a, b), number=repeat, repeat=3)) / repeat
    t_np = min(timeit.repeat(lambda: kernels.overlap_rows_numpy(a, b), number=repeat, repeat=3)) / repeat
    label = "numba loop" if _accel.USE_NUMBA else "python loop"
    print(f"overlap_rows ({rows} frame pairs)")
    print(f"  {label:<12} {t_loop * 1e6:9.2f} us/call")
    print(f"  {'numpy':<12} {t_np * 1e6:9.2f} us/call")
    print(f"  ratio numpy/loop {t_np / t_loop:.1f}x")


_RUN = textwrap.dedent("""
    import time
    from cotdrive import _accel
    from cotdrive.dataset import bundled_scenario_paths
    from cotdrive.sim import run_scenario
    from cotdrive.world import load_scenario
    spec = load_scenario([p for p in bundled_scenario_paths() if "crossing" in p.name][0])
    run_scenario(spec, 0)  # warm-up / jit compile
    t = time.perf_counter()
    run_scenario(spec, 0)
    print(_accel.backend_name(), time.perf_counter() - t)
""")


def bench_scenario():
    print("full scenario run (crossing pedestrian, 400 frames)")
    for flag in ("0", "1"):
        env = dict(os.environ, COTDRIVE_DISABLE_NUMBA=flag)
        out = subprocess.run([sys.executable, "-c", _RUN], env=env, capture_output=True, text=True, check=True)
        backend, secs = out.stdout.split()
        print(f"  {backend:<12} {float(secs):9.3f} s")


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--rows", type=int, default=60)
    ap.add_argument("--repeat", type=int, default=2000)
    ap.add_argument("--skip-scenario", action="store_true")
    args = ap.parse_args()
    bench_overlap(args.rows, args.repeat)
    if not args.skip_scenario:
        bench_scenario()


if __name__ == "__main__":
    main()
