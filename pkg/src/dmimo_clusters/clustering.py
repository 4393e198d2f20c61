"""Per-snapshot joint clustering of all links' components by minimum MCD.

Two phases: a greedy initialization that repeatedly seeds a cluster at the
highest-power unassigned component and absorbs everything within the MCD
threshold, followed by iterative reassignment to the nearest power-weighted
centroid until the centroids stop moving. The number of clusters is
emergent, never an input.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np
from scipy.stats import rankdata

from .geometry import InteractionResult
from .mcd import McdContext, build_context, cross_mcd, pairwise_mcd

CONV_EPS_IO = 1e-6     # m, centroid movement considered converged
CONV_EPS_TAU = 1e-15   # s
MAX_REFINE_ITER = 100


@dataclass
class Cluster:
    """One snapshot-level component group with its power-weighted centroid."""

    cluster_id: int
    members: np.ndarray          # indices into the snapshot's mapped-component arrays
    centroid_io: np.ndarray      # (3,), meters
    centroid_tau: float          # seconds


@dataclass
class SnapshotClustering:
    snapshot: int
    clusters: List[Cluster]
    converged: bool = True
    iterations: int = 0

    @property
    def n_clusters(self) -> int:
        return len(self.clusters)

    def labels(self, n_components: int) -> np.ndarray:
        lab = np.full(n_components, -1, dtype=np.int64)
        for c in self.clusters:
            lab[c.members] = c.cluster_id
        return lab


def _as_arrays(interactions: Sequence[InteractionResult]):
    io = np.array([ia.io_center for ia in interactions], dtype=np.float64).reshape(-1, 3)
    tau = np.array([ia.partial_delay for ia in interactions], dtype=np.float64)
    power = np.array([ia.mpc.power for ia in interactions], dtype=np.float64)
    return io, tau, power


def centroid(members: np.ndarray, io: np.ndarray, tau: np.ndarray, power: np.ndarray):
    """Power-weighted mean IO center and partial delay of a member set."""
    w = power[members]
    total = w.sum()
    c_io = (w[:, None] * io[members]).sum(axis=0) / total
    c_tau = float((w * tau[members]).sum() / total)
    return c_io, c_tau


def initialize_clusters(
    io: np.ndarray,
    tau: np.ndarray,
    power: np.ndarray,
    ctx: McdContext,
    delta_mcd: float,
) -> List[np.ndarray]:
    """Greedy threshold pass: seed at the strongest unassigned component.

    Every component is assigned exactly once; ties on reference power go to
    the lower component index.
    """
    if delta_mcd <= 0:
        raise ValueError(f"delta_mcd must be positive, got {delta_mcd}")
    n = len(power)
    if n == 0:
        return []
    unassigned = np.ones(n, dtype=bool)
    member_lists: List[np.ndarray] = []
    masked_power = power.astype(np.float64).copy()
    while unassigned.any():
        ref = int(np.argmax(np.where(unassigned, masked_power, -np.inf)))
        row = cross_mcd(io[ref:ref + 1], tau[ref:ref + 1], io, tau, ctx)[0]
        take = unassigned & (row <= delta_mcd)
        take[ref] = True
        member_lists.append(np.nonzero(take)[0])
        unassigned &= ~take
    return member_lists


def refine(
    member_lists: List[np.ndarray],
    io: np.ndarray,
    tau: np.ndarray,
    power: np.ndarray,
    ctx: McdContext,
    max_iter: int = MAX_REFINE_ITER,
) -> SnapshotClustering:
    """Reassign to nearest-centroid clusters until the centroids settle.

    Centroids act as pseudo-components under the same MCD context; empty
    clusters are dropped. If the loop has not settled after max_iter passes
    the current state is returned with converged=False.
    """
    n = len(power)
    clusters = [np.asarray(m, dtype=np.int64) for m in member_lists if len(m)]
    if not clusters or n == 0:
        return SnapshotClustering(snapshot=-1, clusters=[], converged=True, iterations=0)

    cents = [centroid(m, io, tau, power) for m in clusters]
    converged = False
    iteration = 0
    while iteration < max_iter:
        iteration += 1
        c_io = np.array([c[0] for c in cents])
        c_tau = np.array([c[1] for c in cents])
        dist = cross_mcd(c_io, c_tau, io, tau, ctx)  # (C, N)
        assignment = np.argmin(dist, axis=0)         # ties: lowest cluster index

        new_clusters = []
        new_cents = []
        moved = False
        kept = 0
        for ci in range(len(clusters)):
            members = np.nonzero(assignment == ci)[0]
            if members.size == 0:
                moved = True  # cluster dropped; not a fixed point yet
                continue
            new_io, new_tau = centroid(members, io, tau, power)
            if (np.linalg.norm(new_io - cents[ci][0]) > CONV_EPS_IO
                    or abs(new_tau - cents[ci][1]) > CONV_EPS_TAU):
                moved = True
            new_clusters.append(members)
            new_cents.append((new_io, new_tau))
            kept += 1
        clusters = new_clusters
        cents = new_cents
        if not moved:
            converged = True
            break

    out = [
        Cluster(cluster_id=i, members=m, centroid_io=c[0], centroid_tau=c[1])
        for i, (m, c) in enumerate(zip(clusters, cents))
    ]
    return SnapshotClustering(snapshot=-1, clusters=out, converged=converged, iterations=iteration)


def cluster_snapshot(
    interactions: Sequence[InteractionResult],
    delta_mcd: float = 7.0,
    zeta: float = 1.0,
    ctx: Optional[McdContext] = None,
    snapshot: Optional[int] = None,
    max_iter: int = MAX_REFINE_ITER,
) -> SnapshotClustering:
    """Run both phases on one snapshot's mapped components (all links)."""
    if len(interactions) == 0:
        return SnapshotClustering(snapshot=-1 if snapshot is None else snapshot, clusters=[])
    io, tau, power = _as_arrays(interactions)
    if ctx is None:
        if len(interactions) >= 2:
            ctx = build_context(interactions, zeta=zeta)
        else:
            ctx = McdContext(dtau_max=0.0, tau_std=0.0, zeta=zeta)
    member_lists = initialize_clusters(io, tau, power, ctx, delta_mcd)
    result = refine(member_lists, io, tau, power, ctx, max_iter=max_iter)
    if snapshot is None:
        snapshot = interactions[0].mpc.snapshot
    result.snapshot = snapshot
    return result


# ---------------------------------------------------------------------------
# threshold selection via cluster validity indices
# ---------------------------------------------------------------------------

@dataclass
class CviReport:
    grid: List[float]
    davies_bouldin: List[float]
    silhouette: List[float]
    rank_sums: List[float] = field(default_factory=list)
    selected: float = float("nan")


def _davies_bouldin(dist_to_centroid, labels, centroid_dist) -> float:
    c = centroid_dist.shape[0]
    if c < 2:
        return float("inf")
    spread = np.array([dist_to_centroid[ci][labels == ci].mean() for ci in range(c)])
    worst = np.zeros(c)
    for ci in range(c):
        ratios = [
            (spread[ci] + spread[cj]) / centroid_dist[ci, cj]
            for cj in range(c)
            if cj != ci and centroid_dist[ci, cj] > 0
        ]
        worst[ci] = max(ratios) if ratios else float("inf")
    return float(worst.mean())


def _silhouette(dist_matrix, labels) -> float:
    ids = np.unique(labels)
    if ids.size < 2:
        return float("-inf")
    n = len(labels)
    scores = np.zeros(n)
    masks = {ci: labels == ci for ci in ids}
    for i in range(n):
        own = masks[labels[i]].copy()
        own[i] = False
        if not own.any():
            scores[i] = 0.0  # singleton convention
            continue
        a = dist_matrix[i][own].mean()
        b = min(dist_matrix[i][masks[cj]].mean() for cj in ids if cj != labels[i])
        denom = max(a, b)
        scores[i] = 0.0 if denom == 0 else (b - a) / denom
    return float(scores.mean())


def select_threshold(
    interactions: Sequence[InteractionResult],
    grid: Sequence[float],
    zeta: float = 1.0,
) -> CviReport:
    """Score each candidate MCD threshold and pick the rank-sum optimum.

    Compactness/separability are measured under the MCD metric with a
    generalized Davies-Bouldin index (lower is better) and a generalized
    silhouette (higher is better); single-cluster outcomes score as worst.
    Ties go to the smaller threshold.
    """
    grid = sorted(float(g) for g in grid)
    if not grid:
        raise ValueError("threshold grid is empty")
    io, tau, power = _as_arrays(interactions)
    ctx = build_context(interactions, zeta=zeta)
    full = pairwise_mcd(io, tau, ctx)

    report = CviReport(grid=list(grid), davies_bouldin=[], silhouette=[])
    for delta in grid:
        sc = cluster_snapshot(interactions, delta_mcd=delta, ctx=ctx, snapshot=-1)
        labels = sc.labels(len(interactions))
        if sc.n_clusters < 2:
            report.davies_bouldin.append(float("inf"))
            report.silhouette.append(float("-inf"))
            continue
        c_io = np.array([c.centroid_io for c in sc.clusters])
        c_tau = np.array([c.centroid_tau for c in sc.clusters])
        dist_to_centroid = cross_mcd(c_io, c_tau, io, tau, ctx)
        centroid_dist = cross_mcd(c_io, c_tau, c_io, c_tau, ctx)
        report.davies_bouldin.append(_davies_bouldin(dist_to_centroid, labels, centroid_dist))
        report.silhouette.append(_silhouette(full, labels))

    db_rank = rankdata(report.davies_bouldin, method="average")
    sil_rank = rankdata([-s for s in report.silhouette], method="average")
    report.rank_sums = list(db_rank + sil_rank)
    report.selected = grid[int(np.argmin(report.rank_sums))]
    return report
