"""Time the numba kernels against the numpy fallback.

    python3 benchmarks/bench_kernels.py [--n 1000000] [--repeat 7]

Also times one full recurring-training run under each backend by
re-running itself in a subprocess with FOW_DISABLE_NUMBA set, since the
backend is chosen at import time.
"""

import argparse
import json
import os
import subprocess
import sys
import time

import numpy as np

from fow import _kernels


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def kernel_table(n, repeat):
    rng = np.random.default_rng(0)
    segment = rng.integers(0, 50, n).astype(np.int64)
    label = rng.random(n) < 0.2
    mask = rng.random(n) < 0.5
    pred = rng.uniform(0.01, 0.99, n)
    day = rng.uniform(0, 120, n)
    converted = rng.random(n) < 0.2
    delay = np.where(converted, rng.exponential(1.0, n), np.nan)

    cases = {
        "segment_counts": lambda k: k.segment_counts(segment, label, mask, 50),
        "log_loss_sum": lambda k: k.log_loss_sum(pred, label),
        "matured_labels": lambda k: k.matured_labels(day, converted, delay, 7.0, 100.0),
    }
    rows = []
    for name, call in cases.items():
        t_np = best_of(lambda: call(_kernels.numpy_kernels), repeat)
        if _kernels.numba_kernels is None:
            rows.append((name, t_np, float("nan")))
            continue
        call(_kernels.numba_kernels)  # compile outside the timing
        t_nb = best_of(lambda: call(_kernels.numba_kernels), repeat)
        rows.append((name, t_np, t_nb))
    return rows


def end_to_end():
    from fow.config import load
    from fow.simulation import generate_stream, run_recurring

    cfg = load()
    events = generate_stream(cfg.stream)
    t0 = time.perf_counter()
    run_recurring(events, cfg.train_days, cfg.windows, cfg.methods, cfg.eval_horizon_days,
                  cfg.designs, cfg.training, cfg.t_flex_grid, cfg.stream.num_segments)
    return {"backend": _kernels.BACKEND, "seconds": time.perf_counter() - t0}


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--n", type=int, default=1_000_000)
    ap.add_argument("--repeat", type=int, default=7)
    ap.add_argument("--end-to-end-child", action="store_true", help=argparse.SUPPRESS)
    args = ap.parse_args()

    if args.end_to_end_child:
        end_to_end()  # warm-up: numba compiles or loads its cache here
        print(json.dumps(end_to_end()))
        return

    print(f"kernels on n={args.n:,} rows, best of {args.repeat}")
    print(f"{'kernel':<16}{'numpy ms':>10}{'numba ms':>10}{'speedup':>9}")
    for name, t_np, t_nb in kernel_table(args.n, args.repeat):
        print(f"{name:<16}{t_np * 1e3:>10.2f}{t_nb * 1e3:>10.2f}{t_np / t_nb:>8.1f}x")

    print("\nrecurring schedule, default config (8 methods x 7 train days)")
    for flag in ("1", "0"):
        env = dict(os.environ, FOW_DISABLE_NUMBA=flag)
        out = subprocess.run([sys.executable, __file__, "--end-to-end-child"], env=env,
                             capture_output=True, text=True, check=True)
        res = json.loads(out.stdout.strip().splitlines()[-1])
        print(f"  {res['backend']:<6} {res['seconds']:.2f} s")


if __name__ == "__main__":
    main()
