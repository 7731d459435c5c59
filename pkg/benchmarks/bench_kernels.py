"""Numba vs numpy timings for the hot kernels.

    python benchmarks/bench_kernels.py [--n 200000] [--repeat 7]

Each row reports the best-of-``repeat`` wall time of both implementations on
identical inputs (numba timed after a warm-up call, so compilation is
excluded) and checks that their outputs agree.

The GRU row uses a loop-based numba port that lives only in this script. It
loses to the numpy version, whose per-step matmuls run through BLAS, which is
why the library keeps the numpy GRU under both backends.
"""

import argparse
import math
import timeit

import numpy as np
from numba import njit

from riskroute import kernels


@njit(cache=True)
def _sigmoid(x):
    return 1.0 / (1.0 + math.exp(-x))


@njit(cache=True)
def gru_forward_loops(E, Wz, Uz, bz, Wr, Ur, br, Wh, Uh, bh):
    R, T, G = E.shape
    H = bz.shape[0]
    hs = np.zeros((R, T + 1, H))
    for i in range(R):
        for t in range(T):
            h = hs[i, t]
            x = E[i, t]
            z = np.empty(H)
            r = np.empty(H)
            for j in range(H):
                az = bz[j]
                ar = br[j]
                for g in range(G):
                    az += x[g] * Wz[g, j]
                    ar += x[g] * Wr[g, j]
                for k in range(H):
                    az += h[k] * Uz[k, j]
                    ar += h[k] * Ur[k, j]
                z[j] = _sigmoid(az)
                r[j] = _sigmoid(ar)
            for j in range(H):
                ac = bh[j]
                for g in range(G):
                    ac += x[g] * Wh[g, j]
                for k in range(H):
                    ac += r[k] * h[k] * Uh[k, j]
                hs[i, t + 1, j] = (1.0 - z[j]) * h[j] + z[j] * math.tanh(ac)
    return hs


def best(fn, repeat):
    fn()
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def cases(n, rng):
    pts = rng.uniform([40.0, -75.0], [41.0, -74.0], size=(n, 2))
    cents = rng.uniform([40.0, -75.0], [41.0, -74.0], size=(10, 2))
    starts = np.arange(0, n + 1, 500, dtype=np.int64)
    starts[-1] = n
    labels = rng.integers(0, 10, n).astype(np.int64)
    steps = rng.integers(0, 100, n).astype(np.int64)
    vals = rng.random(n)
    flags = (rng.random(n) < 0.2).astype(np.float64)

    R, T, G, H = 700, 10, 16, 16
    E = rng.random((R, T, G))
    gru = [rng.uniform(-0.5, 0.5, s) for s in
           [(G, H), (H, H), (H,), (G, H), (H, H), (H,), (G, H), (H, H), (H,)]]

    yield ("nearest centroid, euclidean",
           lambda: kernels.NUMPY.nearest_centroid(pts, cents, kernels.EUCLIDEAN),
           lambda: kernels.NUMBA.nearest_centroid(pts, cents, kernels.EUCLIDEAN))
    yield ("nearest centroid, haversine",
           lambda: kernels.NUMPY.nearest_centroid(pts, cents, kernels.HAVERSINE),
           lambda: kernels.NUMBA.nearest_centroid(pts, cents, kernels.HAVERSINE))
    yield ("transition counts",
           lambda: kernels.NUMPY.count_transitions(labels, starts, 10),
           lambda: kernels.NUMBA.count_transitions(labels, starts, 10))
    yield ("snapshot binning",
           lambda: kernels.NUMPY.bin_records(labels, steps, vals, flags, 10, 100),
           lambda: kernels.NUMBA.bin_records(labels, steps, vals, flags, 10, 100))
    yield (f"GRU forward R={R} T={T} H={H}",
           lambda: kernels.NUMPY.gru_forward(E, *gru)[0],
           lambda: gru_forward_loops(E, *gru))


def agree(a, b):
    a = a if isinstance(a, tuple) else (a,)
    b = b if isinstance(b, tuple) else (b,)
    return all(np.allclose(x, y, rtol=1e-10, atol=1e-12) for x, y in zip(a, b))


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=200_000, help="records per kernel call")
    ap.add_argument("--repeat", type=int, default=7)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    rng = np.random.default_rng(args.seed)
    print(f"{'kernel':<32}{'numpy ms':>10}{'numba ms':>10}{'speedup':>9}  outputs")
    for name, f_np, f_nb in cases(args.n, rng):
        t_np = best(f_np, args.repeat) * 1e3
        t_nb = best(f_nb, args.repeat) * 1e3
        ok = "match" if agree(f_np(), f_nb()) else "DIFFER"
        print(f"{name:<32}{t_np:>10.2f}{t_nb:>10.2f}{t_np / t_nb:>8.2f}x  {ok}")


if __name__ == "__main__":
    main()
