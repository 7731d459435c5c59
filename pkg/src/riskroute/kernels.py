"""Hot inner loops, each in two flavours.

The scatter and argmin kernels exist as a vectorized numpy function and as an
explicit-loop numba function with the same signature. ``NUMPY`` and
``NUMBA`` expose the two sets; the module-level names point at whichever one
``_accel`` selected.

Metric codes for the distance kernels: 0 = euclidean in degrees,
1 = haversine in kilometres.
"""

import math
from types import SimpleNamespace

import numpy as np
from scipy.special import expit

from ._accel import NUMBA_ENABLED, njit

EARTH_RADIUS_KM = 6371.0
EUCLIDEAN = 0
HAVERSINE = 1


# --------------------------------------------------------------------------
# nearest centroid
# --------------------------------------------------------------------------


def _pairwise_sq_numpy(points, centroids, metric):
    if metric == EUCLIDEAN:
        dlat = points[:, None, 0] - centroids[None, :, 0]
        dlon = points[:, None, 1] - centroids[None, :, 1]
        return dlat * dlat + dlon * dlon
    lat1 = np.radians(points[:, None, 0])
    lat2 = np.radians(centroids[None, :, 0])
    dphi = lat2 - lat1
    dlmb = np.radians(centroids[None, :, 1] - points[:, None, 1])
    a = np.sin(dphi / 2.0) ** 2 + np.cos(lat1) * np.cos(lat2) * np.sin(dlmb / 2.0) ** 2
    d = 2.0 * EARTH_RADIUS_KM * np.arcsin(np.minimum(1.0, np.sqrt(a)))
    return d * d


def _nearest_numpy(points, centroids, metric):
    d2 = _pairwise_sq_numpy(points, centroids, metric)
    # argmin returns the first minimum: ties go to the lowest centroid index
    labels = np.argmin(d2, axis=1).astype(np.int64)
    return labels, d2[np.arange(len(points)), labels]


@njit
def _sq_dist_scalar(lat1, lon1, lat2, lon2, metric):
    if metric == 0:
        dlat = lat1 - lat2
        dlon = lon1 - lon2
        return dlat * dlat + dlon * dlon
    p1 = math.radians(lat1)
    p2 = math.radians(lat2)
    dphi = p2 - p1
    dlmb = math.radians(lon2 - lon1)
    a = math.sin(dphi / 2.0) ** 2 + math.cos(p1) * math.cos(p2) * math.sin(dlmb / 2.0) ** 2
    d = 2.0 * 6371.0 * math.asin(min(1.0, math.sqrt(a)))
    return d * d


@njit
def _nearest_numba(points, centroids, metric):
    n = points.shape[0]
    k = centroids.shape[0]
    labels = np.empty(n, dtype=np.int64)
    best = np.empty(n, dtype=np.float64)
    for i in range(n):
        bi = 0
        bd = _sq_dist_scalar(points[i, 0], points[i, 1], centroids[0, 0], centroids[0, 1], metric)
        for j in range(1, k):
            d = _sq_dist_scalar(points[i, 0], points[i, 1], centroids[j, 0], centroids[j, 1], metric)
            if d < bd:
                bd = d
                bi = j
        labels[i] = bi
        best[i] = bd
    return labels, best


# --------------------------------------------------------------------------
# transition counting
# --------------------------------------------------------------------------


def _transitions_numpy(labels, starts, k):
    counts = np.zeros((k, k), dtype=np.int64)
    if len(labels) < 2:
        return counts
    same_truck = np.ones(len(labels) - 1, dtype=bool)
    # a pair (i, i+1) straddles two trucks when i+1 opens a new track
    boundaries = starts[1:-1]
    same_truck[boundaries[boundaries > 0] - 1] = False
    src = labels[:-1]
    dst = labels[1:]
    keep = same_truck & (src != dst)
    np.add.at(counts, (src[keep], dst[keep]), 1)
    return counts


@njit
def _transitions_numba(labels, starts, k):
    counts = np.zeros((k, k), dtype=np.int64)
    for t in range(starts.shape[0] - 1):
        for i in range(starts[t], starts[t + 1] - 1):
            a = labels[i]
            b = labels[i + 1]
            if a != b:
                counts[a, b] += 1
    return counts


# --------------------------------------------------------------------------
# snapshot binning
# --------------------------------------------------------------------------


def _bin_numpy(zones, steps, congestion, delay, n_zones, n_steps):
    flat = zones * n_steps + steps
    size = n_zones * n_steps
    cong = np.bincount(flat, weights=congestion, minlength=size).reshape(n_zones, n_steps)
    cnt = np.bincount(flat, minlength=size).astype(np.int64).reshape(n_zones, n_steps)
    dly = np.bincount(flat, weights=delay, minlength=size).reshape(n_zones, n_steps)
    return cong, cnt, dly


@njit
def _bin_numba(zones, steps, congestion, delay, n_zones, n_steps):
    cong = np.zeros((n_zones, n_steps))
    cnt = np.zeros((n_zones, n_steps), dtype=np.int64)
    dly = np.zeros((n_zones, n_steps))
    for i in range(zones.shape[0]):
        z = zones[i]
        s = steps[i]
        cong[z, s] += congestion[i]
        cnt[z, s] += 1
        dly[z, s] += delay[i]
    return cong, cnt, dly


# --------------------------------------------------------------------------
# GRU unroll over a batch of independent rows (numpy only)
#
# E: (R, T, G) input sequence per row. Weights act on row vectors:
#   z = sig(x Wz + h Uz + bz), r = sig(x Wr + h Ur + br)
#   c = tanh(x Wh + (r*h) Uh + bh), h' = (1 - z) h + z c
# Returns hidden states hs (R, T+1, H) with hs[:, 0] = 0 and the gate
# activations z, r, c (R, T, H) needed by the backward pass.
# --------------------------------------------------------------------------


def _gru_forward_numpy(E, Wz, Uz, bz, Wr, Ur, br, Wh, Uh, bh):
    R, T, _ = E.shape
    H = bz.shape[0]
    hs = np.zeros((R, T + 1, H))
    zs = np.empty((R, T, H))
    rs = np.empty((R, T, H))
    cs = np.empty((R, T, H))
    for t in range(T):
        x = E[:, t]
        h = hs[:, t]
        z = expit(x @ Wz + h @ Uz + bz)
        r = expit(x @ Wr + h @ Ur + br)
        c = np.tanh(x @ Wh + (r * h) @ Uh + bh)
        hs[:, t + 1] = (1.0 - z) * h + z * c
        zs[:, t] = z
        rs[:, t] = r
        cs[:, t] = c
    return hs, zs, rs, cs


def _gru_backward_numpy(E, hs, zs, rs, cs, dh_last, Wz, Uz, Wr, Ur, Wh, Uh):
    R, T, G = E.shape
    H = Uz.shape[0]
    gWz = np.zeros((G, H)); gUz = np.zeros((H, H)); gbz = np.zeros(H)
    gWr = np.zeros((G, H)); gUr = np.zeros((H, H)); gbr = np.zeros(H)
    gWh = np.zeros((G, H)); gUh = np.zeros((H, H)); gbh = np.zeros(H)
    dE = np.empty((R, T, G))
    dh = dh_last.copy()
    for t in range(T - 1, -1, -1):
        x = E[:, t]
        h = hs[:, t]
        z = zs[:, t]
        r = rs[:, t]
        c = cs[:, t]
        dprev = dh * (1.0 - z)
        dz = dh * (c - h)
        dah = dh * z * (1.0 - c * c)
        gWh += x.T @ dah
        gUh += (r * h).T @ dah
        gbh += dah.sum(axis=0)
        drh = dah @ Uh.T
        dx = dah @ Wh.T
        dar = drh * h * r * (1.0 - r)
        dprev += drh * r
        gWr += x.T @ dar
        gUr += h.T @ dar
        gbr += dar.sum(axis=0)
        dx += dar @ Wr.T
        dprev += dar @ Ur.T
        daz = dz * z * (1.0 - z)
        gWz += x.T @ daz
        gUz += h.T @ daz
        gbz += daz.sum(axis=0)
        dx += daz @ Wz.T
        dprev += daz @ Uz.T
        dE[:, t] = dx
        dh = dprev
    return (gWz, gUz, gbz, gWr, gUr, gbr, gWh, gUh, gbh), dE


NUMPY = SimpleNamespace(
    name="numpy",
    nearest_centroid=_nearest_numpy,
    count_transitions=_transitions_numpy,
    bin_records=_bin_numpy,
    gru_forward=_gru_forward_numpy,
    gru_backward=_gru_backward_numpy,
)

# The GRU stays on the numpy path in both modes: its batched matmuls go through
# BLAS, which beat explicit numba loops at the sizes used here (see
# benchmarks/bench_kernels.py).
NUMBA = SimpleNamespace(
    name="numba",
    nearest_centroid=_nearest_numba,
    count_transitions=_transitions_numba,
    bin_records=_bin_numba,
    gru_forward=_gru_forward_numpy,
    gru_backward=_gru_backward_numpy,
)

ACTIVE = NUMBA if NUMBA_ENABLED else NUMPY

nearest_centroid = ACTIVE.nearest_centroid
count_transitions = ACTIVE.count_transitions
bin_records = ACTIVE.bin_records
gru_forward = ACTIVE.gru_forward
gru_backward = ACTIVE.gru_backward
