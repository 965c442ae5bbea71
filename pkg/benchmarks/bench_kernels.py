"""Time the numba and numpy paths of each kernel on the same inputs.

    python3 benchmarks/bench_kernels.py [--repeat 5]

Each kernel is warmed up once per backend (numba compiles on first call),
then timed as the best of ``--repeat`` runs. Outputs of the two paths are
compared so a speed win never hides a wrong answer.
"""
import argparse
import time

import numpy as np

from cosood import _accel
from cosood.kernels import (average_precision_sorted, conv2d_backward_input, conv2d_backward_weight,
                            conv2d_forward, rank_sum_auroc)


def cases(rng):
    B, C, H, W, F, k = 16, 8, 18, 18, 16, 3
    xp = rng.standard_normal((B, C, H, W))
    K = rng.standard_normal((F, C, k, k))
    Ho = Wo = H - k + 1
    g = rng.standard_normal((B, F, Ho, Wo))
    pos = rng.standard_normal(20000).round(2)
    neg = (rng.standard_normal(20000) - 1).round(2)
    return {
        "conv2d_forward": lambda: conv2d_forward(xp, K, 1, Ho, Wo),
        "conv2d_backward_input": lambda: conv2d_backward_input(g, K, 1, H, W),
        "conv2d_backward_weight": lambda: conv2d_backward_weight(g, xp, 1, k),
        "rank_sum_auroc": lambda: rank_sum_auroc(pos, neg),
        "average_precision": lambda: average_precision_sorted(pos, neg),
    }


def best_time(fn, repeat):
    best = float("inf")
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t)
    return best


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    if not _accel.HAVE_NUMBA:
        raise SystemExit("numba is not installed; nothing to compare")
    work = cases(np.random.default_rng(0))
    print(f"{'kernel':<24}{'numpy ms':>10}{'numba ms':>10}{'speedup':>9}  max|diff|")
    for name, fn in work.items():
        res, times = {}, {}
        for b in ("numpy", "numba"):
            _accel.set_backend(b)
            res[b] = np.asarray(fn())  # warm-up, and numba compilation
            times[b] = best_time(fn, args.repeat)
        diff = float(np.max(np.abs(res["numpy"] - res["numba"])))
        print(f"{name:<24}{1e3 * times['numpy']:>10.3f}{1e3 * times['numba']:>10.3f}"
              f"{times['numpy'] / times['numba']:>8.1f}x  {diff:.1e}")


if __name__ == "__main__":
    main()
