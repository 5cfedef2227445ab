"""Time the compiled kernels against the NumPy fallback.

    python benchmarks/bench_kernels.py [--repeat 5] [--full-run]
"""

from __future__ import annotations

import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from cv2xsim import kernels


def _inputs(seed=0):
    rng = np.random.default_rng(seed)
    n = 122
    px, py = rng.uniform(0, 240, n), rng.uniform(0, 520, n)
    x0, y0 = rng.uniform(0, 200, 40), rng.uniform(0, 480, 40)
    rects = np.column_stack([x0, y0, x0 + 14, y0 + 2.6])
    owner = np.full(40, -1, dtype=np.int64)
    rssi = rng.exponential(1e-10, (1000, 7))
    rsrp = rng.exponential(1e-11, (100, 7))
    gain = rng.exponential(1e-9, (n, n))
    tx = rng.choice(n, 5, replace=False).astype(np.int64)
    return {
        "segment_rect_hits": (0.0, 0.0, 240.0, 520.0, rects),
        "pair_block_counts": (px, py, rects, owner),
        "candidate_scores": (rssi, rsrp, 1234, 97, 1, 100, 10),
        "rx_power_grid": (tx, np.full(5, 199.5), np.zeros(5, np.int64), np.ones(5, np.int64), gain, 7),
    }


def bench(repeat: int) -> list[tuple[str, str, float]]:
    args = _inputs()
    rows = []
    for backend, mod in sorted(kernels.backends().items()):
        for name, a in args.items():
            fn = getattr(mod, name)
            number = 20 if name == "pair_block_counts" else 500
            best = min(timeit.repeat(lambda: fn(*a), number=number, repeat=repeat)) / number
            rows.append((name, backend, best))
    return rows


def full_run(pure: bool) -> float:
    code = (
        "import time;from cv2xsim.config import load_config;from cv2xsim.engine import run_seed;"
        "c=load_config();t=time.perf_counter();run_seed(c.scenario,c.sim,c.channel,c.mac,0);"
        "print(time.perf_counter()-t)"
    )
    env = dict(os.environ, CV2XSIM_PURE="1" if pure else "0")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    return float(out.stdout.strip())


def main(argv=None) -> int:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--repeat", type=int, default=5)
    p.add_argument("--full-run", action="store_true", help="also time one 21 s simulation per backend")
    args = p.parse_args(argv)

    rows = bench(args.repeat)
    times = {(n, b): t for n, b, t in rows}
    print(f"{'kernel':<20} {'backend':<8} {'time/call':>12} {'speedup':>8}")
    for name, backend, t in rows:
        ref = times.get((name, "python"))
        speed = f"{ref / t:7.1f}x" if ref else ""
        print(f"{name:<20} {backend:<8} {t * 1e6:10.1f}us {speed:>8}")
    if args.full_run:
        for pure in (False, True):
            if not pure and "cython" not in kernels.backends():
                continue
            print(f"full run ({'python' if pure else 'cython'}): {full_run(pure):.2f} s")
    return 0


if __name__ == "__main__":
    sys.exit(main())
