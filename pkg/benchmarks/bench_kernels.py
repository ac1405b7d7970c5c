"""Compare the numba kernels with the numpy fallback.

    python3 benchmarks/bench_kernels.py [--repeat N]

Each kernel is warmed up once (compilation excluded), then timed as the best
of ``--repeat`` runs. Results are cross-checked before timing.
"""

import argparse
import time

import numpy as np

from distillkit import kernels as K
from distillkit._accel import HAVE_NUMBA


def best_of(fn, args, repeat):
    fn(*args)
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        times.append(time.perf_counter() - t0)
    return min(times)


def cases(rng):
    x = rng.normal(size=(32, 8, 30, 30))
    w = rng.normal(size=(16, 8, 3, 3))
    b = rng.normal(size=16)
    dout = rng.normal(size=(32, 16, 28, 28))
    pool_in = rng.normal(size=(32, 8, 30, 30))
    _, argmax = K.maxpool_forward_np(pool_in, 2, 2)
    pool_grad = rng.normal(size=(32, 8, 15, 15))
    rq = rng.integers(-2, 3, size=(512, 512))
    return [
        ("conv2d_forward", K.conv2d_forward_nb, K.conv2d_forward_np, (x, w, b, 1)),
        ("conv2d_backward", K.conv2d_backward_nb, K.conv2d_backward_np, (x, w, dout, 1)),
        ("maxpool_forward", K.maxpool_forward_nb, K.maxpool_forward_np, (pool_in, 2, 2)),
        ("maxpool_backward", K.maxpool_backward_nb, K.maxpool_backward_np,
         (pool_grad, argmax, pool_in.shape, 2, 2)),
        ("cooccurrence_counts", K.cooccurrence_counts_nb, K.cooccurrence_counts_np, (rq, 2, 3, 1)),
    ]


def agree(a, b):
    if isinstance(a, tuple):
        return all(agree(u, v) for u, v in zip(a, b))
    a, b = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
    # large reductions are summed in a different order on each path
    return np.linalg.norm(a - b) <= 1e-12 * max(np.linalg.norm(a), 1.0)


def main():
    ap = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    if not HAVE_NUMBA:
        raise SystemExit("numba is not installed; nothing to compare")
    rng = np.random.default_rng(0)
    print(f"{'kernel':<22}{'numba ms':>10}{'numpy ms':>10}{'speedup':>9}")
    for name, nb, nps, a in cases(rng):
        if not agree(nb(*a), nps(*a)):
            raise SystemExit(f"{name}: numba and numpy results differ")
        t_nb = best_of(nb, a, args.repeat)
        t_np = best_of(nps, a, args.repeat)
        print(f"{name:<22}{t_nb * 1e3:>10.2f}{t_np * 1e3:>10.2f}{t_np / t_nb:>8.1f}x")


if __name__ == "__main__":
    main()
