"""Hot numeric kernels, JIT-compiled with numba when available.

Every kernel exists in two functionally identical variants: a numba
``@njit`` loop version (``*_nb``) and a vectorized pure-numpy version
(``*_np``). The active variant is chosen at import time; setting the
environment variable ``DMIMO_CLUSTERS_NO_NUMBA=1`` forces the numpy
path (useful on platforms without numba and for the benchmark script,
which times both variants side by side).
"""

import os

import numpy as np

NUMBA_ENV_FLAG = "DMIMO_CLUSTERS_NO_NUMBA"

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a hard dep, but keep the fallback honest
    HAVE_NUMBA = False

NUMBA_ACTIVE = HAVE_NUMBA and os.environ.get(NUMBA_ENV_FLAG, "") not in ("1", "true", "yes")


# ---------------------------------------------------------------------------
# point-to-segment distances (ray/point-cloud intersection candidates)
# ---------------------------------------------------------------------------

def point_segment_distances_np(points, seg_start, seg_end):
    """Distances from each point to the finite segment [seg_start, seg_end]."""
    points = np.asarray(points, dtype=np.float64)
    d = np.asarray(seg_end, dtype=np.float64) - np.asarray(seg_start, dtype=np.float64)
    seg_len2 = d[0] * d[0] + d[1] * d[1] + d[2] * d[2]
    rel = points - seg_start
    if seg_len2 == 0.0:
        return np.sqrt(rel[:, 0] ** 2 + rel[:, 1] ** 2 + rel[:, 2] ** 2)
    t = (rel[:, 0] * d[0] + rel[:, 1] * d[1] + rel[:, 2] * d[2]) / seg_len2
    t = np.minimum(np.maximum(t, 0.0), 1.0)
    dx = rel[:, 0] - t * d[0]
    dy = rel[:, 1] - t * d[1]
    dz = rel[:, 2] - t * d[2]
    return np.sqrt(dx * dx + dy * dy + dz * dz)


def _point_segment_distances_loop(points, seg_start, seg_end):
    n = points.shape[0]
    out = np.empty(n, dtype=np.float64)
    dx0 = seg_end[0] - seg_start[0]
    dy0 = seg_end[1] - seg_start[1]
    dz0 = seg_end[2] - seg_start[2]
    seg_len2 = dx0 * dx0 + dy0 * dy0 + dz0 * dz0
    for i in range(n):
        rx = points[i, 0] - seg_start[0]
        ry = points[i, 1] - seg_start[1]
        rz = points[i, 2] - seg_start[2]
        if seg_len2 == 0.0:
            out[i] = np.sqrt(rx * rx + ry * ry + rz * rz)
            continue
        t = (rx * dx0 + ry * dy0 + rz * dz0) / seg_len2
        if t < 0.0:
            t = 0.0
        elif t > 1.0:
            t = 1.0
        ex = rx - t * dx0
        ey = ry - t * dy0
        ez = rz - t * dz0
        out[i] = np.sqrt(ex * ex + ey * ey + ez * ez)
    return out


# ---------------------------------------------------------------------------
# DBSCAN on 3-D points
#
# Border points are attached to their nearest core point (ties broken by the
# core point's coordinates), which makes the labeling independent of the
# input row order, unlike textbook first-come-first-served DBSCAN.
# ---------------------------------------------------------------------------

def _dbscan_core_and_components_loop(points, eps2, min_pts):
    n = points.shape[0]
    neighbor_count = np.zeros(n, dtype=np.int64)
    for i in range(n):
        xi = points[i, 0]
        yi = points[i, 1]
        zi = points[i, 2]
        cnt = 0
        for j in range(n):
            dx = points[j, 0] - xi
            dy = points[j, 1] - yi
            dz = points[j, 2] - zi
            if dx * dx + dy * dy + dz * dz <= eps2:
                cnt += 1
        neighbor_count[i] = cnt
    core = neighbor_count >= min_pts

    # connected components over core points (core-core edges within eps)
    labels = np.full(n, -1, dtype=np.int64)
    queue = np.empty(n, dtype=np.int64)
    current = 0
    for seed in range(n):
        if not core[seed] or labels[seed] >= 0:
            continue
        labels[seed] = current
        queue[0] = seed
        head = 0
        tail = 1
        while head < tail:
            i = queue[head]
            head += 1
            xi = points[i, 0]
            yi = points[i, 1]
            zi = points[i, 2]
            for j in range(n):
                if not core[j] or labels[j] >= 0:
                    continue
                dx = points[j, 0] - xi
                dy = points[j, 1] - yi
                dz = points[j, 2] - zi
                if dx * dx + dy * dy + dz * dz <= eps2:
                    labels[j] = current
                    queue[tail] = j
                    tail += 1
        current += 1

    # border points: nearest core point within eps decides membership
    for i in range(n):
        if core[i]:
            continue
        best = -1
        best_d2 = np.inf
        xi = points[i, 0]
        yi = points[i, 1]
        zi = points[i, 2]
        for j in range(n):
            if not core[j]:
                continue
            dx = points[j, 0] - xi
            dy = points[j, 1] - yi
            dz = points[j, 2] - zi
            d2 = dx * dx + dy * dy + dz * dz
            if d2 > eps2:
                continue
            if d2 < best_d2:
                best_d2 = d2
                best = j
            elif d2 == best_d2 and best >= 0:
                # coordinate tie-break keeps the result permutation-invariant
                take = False
                if points[j, 0] < points[best, 0]:
                    take = True
                elif points[j, 0] == points[best, 0]:
                    if points[j, 1] < points[best, 1]:
                        take = True
                    elif points[j, 1] == points[best, 1] and points[j, 2] < points[best, 2]:
                        take = True
                if take:
                    best = j
        if best >= 0:
            labels[i] = labels[best]
    return labels


def _dbscan_core_and_components_np(points, eps2, min_pts):
    n = points.shape[0]
    neighbor_count = np.zeros(n, dtype=np.int64)
    # chunked to bound memory on large clouds
    chunk = max(1, int(2e6) // max(n, 1))
    for lo in range(0, n, chunk):
        hi = min(lo + chunk, n)
        diff = points[lo:hi, None, :] - points[None, :, :]
        d2 = diff[:, :, 0] ** 2 + diff[:, :, 1] ** 2 + diff[:, :, 2] ** 2
        neighbor_count[lo:hi] = (d2 <= eps2).sum(axis=1)
    core = neighbor_count >= min_pts

    labels = np.full(n, -1, dtype=np.int64)
    current = 0
    for seed in range(n):
        if not core[seed] or labels[seed] >= 0:
            continue
        labels[seed] = current
        frontier = [seed]
        while frontier:
            i = frontier.pop()
            diff = points - points[i]
            d2 = diff[:, 0] ** 2 + diff[:, 1] ** 2 + diff[:, 2] ** 2
            hits = np.nonzero((d2 <= eps2) & core & (labels < 0))[0]
            labels[hits] = current
            frontier.extend(hits.tolist())
        current += 1

    border = np.nonzero(~core & (labels < 0))[0]
    core_idx = np.nonzero(core)[0]
    if core_idx.size:
        # deterministic nearest-core assignment: order core points by
        # coordinates so equal distances resolve the same way as the loop path
        order = np.lexsort((points[core_idx, 2], points[core_idx, 1], points[core_idx, 0]))
        core_sorted = core_idx[order]
        cpts = points[core_sorted]
        for i in border:
            diff = cpts - points[i]
            d2 = diff[:, 0] ** 2 + diff[:, 1] ** 2 + diff[:, 2] ** 2
            j = int(np.argmin(d2))
            if d2[j] <= eps2:
                labels[i] = labels[core_sorted[j]]
    return labels


def _canonical_labels(labels):
    """Relabel groups as 0..C-1 in order of each group's smallest point index."""
    out = np.full(labels.shape[0], -1, dtype=np.int64)
    mapping = {}
    nxt = 0
    for i, lab in enumerate(labels):
        if lab < 0:
            continue
        if lab not in mapping:
            mapping[lab] = nxt
            nxt += 1
        out[i] = mapping[lab]
    return out


def dbscan_labels_np(points, eps, min_pts):
    pts = np.ascontiguousarray(points, dtype=np.float64)
    if pts.shape[0] == 0:
        return np.empty(0, dtype=np.int64)
    return _canonical_labels(_dbscan_core_and_components_np(pts, float(eps) ** 2, int(min_pts)))


# ---------------------------------------------------------------------------
# pairwise MCD matrices
# ---------------------------------------------------------------------------

def mcd_matrix_np(io, tau_p, dtau_max, tau_std, zeta):
    """Full symmetric MCD matrix over one snapshot's mapped components."""
    io = np.asarray(io, dtype=np.float64)
    tau_p = np.asarray(tau_p, dtype=np.float64)
    diff = io[:, None, :] - io[None, :, :]
    d2 = diff[:, :, 0] ** 2 + diff[:, :, 1] ** 2 + diff[:, :, 2] ** 2
    if dtau_max > 0.0:
        scale = zeta * tau_std / (dtau_max * dtau_max)
        dt = np.abs(tau_p[:, None] - tau_p[None, :]) * scale
    else:
        dt = np.zeros_like(d2)
    return np.sqrt(d2 + dt * dt)


def mcd_cross_np(io_a, tau_a, io_b, tau_b, dtau_max, tau_std, zeta):
    """MCD between two point sets, shape (len(a), len(b))."""
    io_a = np.asarray(io_a, dtype=np.float64)
    io_b = np.asarray(io_b, dtype=np.float64)
    diff = io_a[:, None, :] - io_b[None, :, :]
    d2 = diff[:, :, 0] ** 2 + diff[:, :, 1] ** 2 + diff[:, :, 2] ** 2
    if dtau_max > 0.0:
        scale = zeta * tau_std / (dtau_max * dtau_max)
        dt = np.abs(np.asarray(tau_a)[:, None] - np.asarray(tau_b)[None, :]) * scale
    else:
        dt = np.zeros_like(d2)
    return np.sqrt(d2 + dt * dt)


def _mcd_matrix_loop(io, tau_p, dtau_max, tau_std, zeta):
    n = io.shape[0]
    out = np.zeros((n, n), dtype=np.float64)
    scale = 0.0
    if dtau_max > 0.0:
        scale = zeta * tau_std / (dtau_max * dtau_max)
    for i in range(n):
        for j in range(i + 1, n):
            dx = io[i, 0] - io[j, 0]
            dy = io[i, 1] - io[j, 1]
            dz = io[i, 2] - io[j, 2]
            d2 = dx * dx + dy * dy + dz * dz
            dt = abs(tau_p[i] - tau_p[j]) * scale
            v = np.sqrt(d2 + dt * dt)
            out[i, j] = v
            out[j, i] = v
    return out


def _mcd_cross_loop(io_a, tau_a, io_b, tau_b, dtau_max, tau_std, zeta):
    na = io_a.shape[0]
    nb = io_b.shape[0]
    out = np.empty((na, nb), dtype=np.float64)
    scale = 0.0
    if dtau_max > 0.0:
        scale = zeta * tau_std / (dtau_max * dtau_max)
    for i in range(na):
        for j in range(nb):
            dx = io_a[i, 0] - io_b[j, 0]
            dy = io_a[i, 1] - io_b[j, 1]
            dz = io_a[i, 2] - io_b[j, 2]
            d2 = dx * dx + dy * dy + dz * dz
            dt = abs(tau_a[i] - tau_b[j]) * scale
            out[i, j] = np.sqrt(d2 + dt * dt)
    return out


if HAVE_NUMBA:
    point_segment_distances_nb = njit(cache=True)(_point_segment_distances_loop)
    _dbscan_nb = njit(cache=True)(_dbscan_core_and_components_loop)
    mcd_matrix_nb = njit(cache=True)(_mcd_matrix_loop)
    mcd_cross_nb = njit(cache=True)(_mcd_cross_loop)

    def dbscan_labels_nb(points, eps, min_pts):
        pts = np.ascontiguousarray(points, dtype=np.float64)
        if pts.shape[0] == 0:
            return np.empty(0, dtype=np.int64)
        return _canonical_labels(_dbscan_nb(pts, float(eps) ** 2, int(min_pts)))


if NUMBA_ACTIVE:
    def point_segment_distances(points, seg_start, seg_end):
        return point_segment_distances_nb(
            np.ascontiguousarray(points, dtype=np.float64),
            np.asarray(seg_start, dtype=np.float64),
            np.asarray(seg_end, dtype=np.float64),
        )

    dbscan_labels = dbscan_labels_nb

    def mcd_matrix(io, tau_p, dtau_max, tau_std, zeta):
        return mcd_matrix_nb(
            np.ascontiguousarray(io, dtype=np.float64),
            np.ascontiguousarray(tau_p, dtype=np.float64),
            float(dtau_max), float(tau_std), float(zeta),
        )

    def mcd_cross(io_a, tau_a, io_b, tau_b, dtau_max, tau_std, zeta):
        return mcd_cross_nb(
            np.ascontiguousarray(io_a, dtype=np.float64),
            np.ascontiguousarray(tau_a, dtype=np.float64),
            np.ascontiguousarray(io_b, dtype=np.float64),
            np.ascontiguousarray(tau_b, dtype=np.float64),
            float(dtau_max), float(tau_std), float(zeta),
        )
else:
    point_segment_distances = point_segment_distances_np
    dbscan_labels = dbscan_labels_np
    mcd_matrix = mcd_matrix_np
    mcd_cross = mcd_cross_np
