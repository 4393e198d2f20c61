"""Shared helpers: independent brute-force oracles and record factories."""

import math

import numpy as np

from dmimo_clusters.geometry import InteractionResult, MpcRecord


def make_mpc(snapshot=0, panel=1, delay=50e-9, azimuth=0.0, elevation=math.pi / 2,
             doppler=0.0, amp_v=1 + 0j, amp_h=0j):
    return MpcRecord(snapshot=snapshot, panel=panel, delay=delay, azimuth=azimuth,
                     elevation=elevation, doppler=doppler, amp_v=amp_v, amp_h=amp_h)


def make_interaction(io, tau_p, power=1.0, snapshot=0, panel=1):
    amp = math.sqrt(power)
    mpc = make_mpc(snapshot=snapshot, panel=panel, delay=tau_p + 20e-9, amp_v=amp + 0j)
    return InteractionResult(mpc=mpc, io_center=np.asarray(io, dtype=float),
                             partial_delay=float(tau_p))


# ---------------------------------------------------------------------------
# brute-force references (kept independent of the package implementations)
# ---------------------------------------------------------------------------

def brute_point_segment_distances(points, a, b):
    """Straightforward per-point distance to the segment [a, b]."""
    points = np.asarray(points, dtype=float)
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    out = np.empty(len(points))
    d = b - a
    dd = float(d @ d)
    for i, p in enumerate(points):
        if dd == 0.0:
            out[i] = np.linalg.norm(p - a)
            continue
        t = float((p - a) @ d) / dd
        t = min(max(t, 0.0), 1.0)
        out[i] = np.linalg.norm(p - (a + t * d))
    return out


def brute_dbscan(points, eps, min_pts):
    """Quadratic DBSCAN with the same border rule (nearest core point).

    Returns labels with noise = -1 and groups numbered by first appearance.
    """
    points = np.asarray(points, dtype=float)
    n = len(points)
    eps2 = eps * eps
    d2 = np.empty((n, n))
    for i in range(n):
        diff = points - points[i]
        d2[i] = diff[:, 0] ** 2 + diff[:, 1] ** 2 + diff[:, 2] ** 2
    core = (d2 <= eps2).sum(axis=1) >= min_pts

    labels = np.full(n, -1, dtype=int)
    current = 0
    for seed in range(n):
        if not core[seed] or labels[seed] >= 0:
            continue
        stack = [seed]
        labels[seed] = current
        while stack:
            i = stack.pop()
            for j in range(n):
                if core[j] and labels[j] < 0 and d2[i, j] <= eps2:
                    labels[j] = current
                    stack.append(j)
        current += 1

    for i in range(n):
        if core[i]:
            continue
        best = -1
        for j in range(n):
            if not core[j] or d2[i, j] > eps2:
                continue
            if best < 0 or d2[i, j] < d2[i, best]:
                best = j
            elif d2[i, j] == d2[i, best] and tuple(points[j]) < tuple(points[best]):
                best = j
        if best >= 0:
            labels[i] = labels[best]

    # canonical renumbering by first appearance
    remap = {}
    out = np.full(n, -1, dtype=int)
    for i, lab in enumerate(labels):
        if lab < 0:
            continue
        if lab not in remap:
            remap[lab] = len(remap)
        out[i] = remap[lab]
    return out


def partitions_equal(labels_a, labels_b):
    """Same partition including the identical noise set, label names aside."""
    labels_a = np.asarray(labels_a)
    labels_b = np.asarray(labels_b)
    if labels_a.shape != labels_b.shape:
        return False
    if not np.array_equal(labels_a < 0, labels_b < 0):
        return False
    seen = {}
    for a, b in zip(labels_a, labels_b):
        if a < 0:
            continue
        if a in seen:
            if seen[a] != b:
                return False
        else:
            seen[a] = b
    return len(set(seen.values())) == len(seen)


def brute_find_runs(seq):
    """Runs of consecutive 1s as (start, end) pairs, scanning one by one."""
    runs = []
    i = 0
    seq = list(seq)
    while i < len(seq):
        if seq[i] == 1:
            j = i
            while j + 1 < len(seq) and seq[j + 1] == 1:
                j += 1
            runs.append((i, j))
            i = j + 1
        else:
            i += 1
    return runs


def censored_loglik(a, lengths, classes, window, delta0):
    """Log-likelihood of the censored VR model, written from the model terms.

    Interior observations contribute the exponential density, edge-touching
    ones the survival function, full-span ones the overshoot integral
    a*exp(-L/a); the normalizer is (L - delta0 + a)*exp(-delta0/a) per
    observation (from profiling out the VR-count intensity).
    """
    if a <= 0:
        return -math.inf
    ll = 0.0
    n = len(lengths)
    for length, cls in zip(lengths, classes):
        if cls == "c00":
            ll += -math.log(a) - length / a
        elif cls in ("c01", "c10"):
            ll += -length / a
        elif cls == "c11":
            ll += math.log(a) - window / a
        else:
            raise ValueError(cls)
    ll -= n * (math.log(window - delta0 + a) - delta0 / a)
    return ll


def golden_section_maximize(fn, lo, hi, tol=1e-12, coarse=4096):
    """Grid scan then golden-section refinement of a 1-D maximizer."""
    xs = np.linspace(lo, hi, coarse)
    vals = [fn(x) for x in xs]
    k = int(np.argmax(vals))
    a = xs[max(k - 1, 0)]
    b = xs[min(k + 1, coarse - 1)]
    phi = (math.sqrt(5.0) - 1.0) / 2.0
    c = b - phi * (b - a)
    d = a + phi * (b - a)
    while b - a > tol * max(1.0, abs(a) + abs(b)):
        if fn(c) >= fn(d):
            b = d
        else:
            a = c
        c = b - phi * (b - a)
        d = a + phi * (b - a)
    return 0.5 * (a + b)
