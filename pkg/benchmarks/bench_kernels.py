"""Time the numba kernels against their numpy fallbacks.

    python benchmarks/bench_kernels.py --sources 4000 --targets 400 --repeat 5
"""
import argparse
import time

import numpy as np

from scatinstab import kernels


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t)
    return min(times), out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sources", type=int, default=4000)
    ap.add_argument("--targets", type=int, default=400)
    ap.add_argument("--wavevectors", type=int, default=2000)
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)
    if not kernels.HAVE_NUMBA:
        raise SystemExit("numba is not importable; nothing to compare")

    rng = np.random.default_rng(args.seed)
    src = rng.uniform(-0.5, 0.5, (args.sources, 3))
    tgt = rng.uniform(-0.5, 0.5, (args.targets, 3))
    q = (rng.normal(size=(1, args.sources)) + 0j)
    k = rng.normal(size=(args.wavevectors, 3)) + 0j
    s = 1.0 + 0.1j

    # first call compiles (or loads the cache); keep it out of the timings
    kernels.green_sum_numba(tgt[:2], src[:2], q[:, :2], s, 0j)
    kernels.phase_sum_numba(src[:2], q[0, :2], k[:2])

    rows = []
    tn, a = best_of(lambda: kernels.green_sum_numpy(tgt, src, q, s, 0j), args.repeat)
    tb, b = best_of(lambda: kernels.green_sum_numba(tgt, src, q, s, 0j), args.repeat)
    rows.append(("green_sum", tn, tb, np.abs(a - b).max() / np.abs(a).max()))
    tn, a = best_of(lambda: kernels.phase_sum_numpy(src, q[0], k), args.repeat)
    tb, b = best_of(lambda: kernels.phase_sum_numba(src, q[0], k), args.repeat)
    rows.append(("phase_sum", tn, tb, np.abs(a - b).max() / np.abs(a).max()))

    print(f"{'kernel':<10} {'numpy [s]':>10} {'numba [s]':>10} {'speedup':>8} {'rel diff':>9}")
    for name, tn, tb, err in rows:
        print(f"{name:<10} {tn:10.4f} {tb:10.4f} {tn / tb:8.2f} {err:9.1e}")


if __name__ == "__main__":
    main()
