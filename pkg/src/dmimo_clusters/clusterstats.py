"""Cluster-level channel statistics.

Common-cluster ratios versus panel separation, cluster power regression
against delay (decay factor and shadowing residuals), power-weighted
intra-cluster spreads, and cross-correlations between the per-link
large-scale parameters.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .visibility import VisibilityTensor


# ---------------------------------------------------------------------------
# common clusters
# ---------------------------------------------------------------------------

@dataclass
class CommonClusterCurve:
    """Pairwise and distance-aggregated common-cluster statistics.

    The set ratio for a link pair divides the number of mutually visible
    clusters by the number visible on one link of the pair; since either
    link can normalize, both versions are computed and averaged. Snapshots
    where a pair has no visible cluster on one side are skipped and counted.
    """

    pair_ratio: Dict[Tuple[int, int], float]
    pair_power_ratio: Dict[Tuple[int, int], float]
    distance_m: List[float]
    ratio_by_distance: List[float]
    power_ratio_by_distance: List[float]
    skipped_snapshots: int = 0


def common_cluster_ratios(tensor: VisibilityTensor,
                          cluster_total_power: Dict[Tuple[int, int], float],
                          spacing_bs: float) -> CommonClusterCurve:
    """Common-cluster ratio and power ratio for every panel pair.

    `cluster_total_power[(c, n)]` is the total power of cluster c at
    snapshot n across all links.
    """
    v = tensor.v
    c_n, k_n, n_n = v.shape
    pair_ratio: Dict[Tuple[int, int], float] = {}
    pair_power: Dict[Tuple[int, int], float] = {}
    skipped = 0
    for ki in range(k_n):
        for kj in range(ki + 1, k_n):
            ratios = []
            power_ratios = []
            for ni in range(n_n):
                vis_i = v[:, ki, ni].astype(bool)
                vis_j = v[:, kj, ni].astype(bool)
                if not vis_i.any() or not vis_j.any():
                    skipped += 1
                    continue
                common = vis_i & vis_j
                n_common = int(common.sum())
                ratios.append(0.5 * (n_common / vis_i.sum() + n_common / vis_j.sum()))
                snap = tensor.snapshots[ni]
                p_common = sum(cluster_total_power.get((tensor.cluster_ids[ci], snap), 0.0)
                               for ci in np.nonzero(common)[0])
                p_i = sum(cluster_total_power.get((tensor.cluster_ids[ci], snap), 0.0)
                          for ci in np.nonzero(vis_i)[0])
                p_j = sum(cluster_total_power.get((tensor.cluster_ids[ci], snap), 0.0)
                          for ci in np.nonzero(vis_j)[0])
                if p_i > 0 and p_j > 0:
                    power_ratios.append(0.5 * (p_common / p_i + p_common / p_j))
            key = (tensor.panel_ids[ki], tensor.panel_ids[kj])
            if ratios:
                pair_ratio[key] = float(np.mean(ratios))
            if power_ratios:
                pair_power[key] = float(np.mean(power_ratios))

    by_dist: Dict[float, List[float]] = {}
    by_dist_p: Dict[float, List[float]] = {}
    panel_index = {pid: i for i, pid in enumerate(sorted(tensor.panel_ids))}
    for (pk, pj), r in pair_ratio.items():
        d = abs(panel_index[pk] - panel_index[pj]) * spacing_bs
        by_dist.setdefault(d, []).append(r)
        if (pk, pj) in pair_power:
            by_dist_p.setdefault(d, []).append(pair_power[(pk, pj)])
    distances = sorted(by_dist)
    return CommonClusterCurve(
        pair_ratio=pair_ratio,
        pair_power_ratio=pair_power,
        distance_m=distances,
        ratio_by_distance=[float(np.mean(by_dist[d])) for d in distances],
        power_ratio_by_distance=[float(np.mean(by_dist_p[d])) if d in by_dist_p else float("nan")
                                 for d in distances],
        skipped_snapshots=skipped,
    )


# ---------------------------------------------------------------------------
# cluster power regression and shadowing
# ---------------------------------------------------------------------------

@dataclass
class PowerRegression:
    """Per-link delay-decay regression of cluster power in dB.

    Fitted on 10*log10(P) against the cluster's excess delay over the LoS
    delay in nanoseconds, restricted to delays below tau_cut.
    """

    panel_id: int
    p0_db: float
    k_tau_db_per_ns: float
    tau_cut: float
    shadowing_std_db: float
    residuals_db: np.ndarray
    sample_keys: List[Tuple[int, int]]   # (cluster, snapshot) per retained sample
    n_samples: int = 0


def default_tau_cut(delays: np.ndarray, powers_db: np.ndarray,
                    floor_quantile: float = 0.05, margin_db: float = 3.0,
                    window: int = 25) -> float:
    """Delay at which the rolling mean power first sinks to within
    `margin_db` of the estimated noise floor; +inf when it never does."""
    if delays.size < window + 1:
        return float("inf")
    floor = float(np.quantile(powers_db, floor_quantile))
    order = np.argsort(delays, kind="stable")
    d_sorted = delays[order]
    p_sorted = powers_db[order]
    kernel = np.ones(window) / window
    rolling = np.convolve(p_sorted, kernel, mode="valid")
    hit = np.nonzero(rolling <= floor + margin_db)[0]
    if hit.size == 0:
        return float("inf")
    return float(d_sorted[hit[0]])


def power_regression(panel_id: int,
                     delays: Sequence[float],
                     powers: Sequence[float],
                     tau0: Sequence[float],
                     tau_cut: Optional[float] = None,
                     sample_keys: Optional[List[Tuple[int, int]]] = None) -> PowerRegression:
    """OLS of cluster power (dB) against excess delay (ns) for one link.

    `delays`/`tau0` in seconds, `powers` linear. Raises ValueError when
    fewer than two samples survive the tau_cut restriction.
    """
    delays = np.asarray(delays, dtype=np.float64)
    powers = np.asarray(powers, dtype=np.float64)
    tau0 = np.asarray(tau0, dtype=np.float64)
    if np.any(powers <= 0):
        raise ValueError("cluster powers must be positive")
    powers_db = 10.0 * np.log10(powers)
    if tau_cut is None:
        tau_cut = default_tau_cut(delays, powers_db)
    keep = delays < tau_cut
    if keep.sum() < 2:
        raise ValueError(f"panel {panel_id}: fewer than 2 samples below tau_cut")
    x = (delays[keep] - tau0[keep]) * 1e9
    y = powers_db[keep]
    if np.ptp(x) == 0:
        raise ValueError(f"panel {panel_id}: zero delay spread, regression undefined")
    xm = x.mean()
    ym = y.mean()
    slope = float(((x - xm) * (y - ym)).sum() / ((x - xm) ** 2).sum())
    intercept = float(ym - slope * xm)
    residuals = y - (intercept + slope * x)
    keys = [k for k, m in zip(sample_keys, keep) if m] if sample_keys is not None else []
    return PowerRegression(
        panel_id=panel_id,
        p0_db=intercept,
        k_tau_db_per_ns=abs(slope),
        tau_cut=float(tau_cut),
        shadowing_std_db=float(np.sqrt(np.mean(residuals ** 2))),
        residuals_db=residuals,
        sample_keys=keys,
        n_samples=int(keep.sum()),
    )


# ---------------------------------------------------------------------------
# intra-cluster spreads
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SpreadSample:
    panel_id: int
    snapshot: int
    cluster: int
    delay_spread: float        # seconds
    azimuth_spread: float      # radians
    elevation_spread: float    # radians


def _weighted_spread(values: np.ndarray, weights: np.ndarray) -> float:
    """Power-weighted standard deviation: sqrt(E[x^2] - E[x]^2), clipped at 0."""
    total = weights.sum()
    m1 = float((weights * values).sum() / total)
    m2 = float((weights * values ** 2).sum() / total)
    return math.sqrt(max(m2 - m1 * m1, 0.0))


def _circular_deviations(angles: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Angles unwrapped about the power-weighted circular mean."""
    mean = math.atan2(
        float((weights * np.sin(angles)).sum()),
        float((weights * np.cos(angles)).sum()),
    )
    return np.mod(angles - mean + math.pi, 2.0 * math.pi) - math.pi


def intra_cluster_spreads(panel_id: int, snapshot: int, cluster: int,
                          delays: Sequence[float],
                          azimuths: Sequence[float],
                          elevations: Sequence[float],
                          powers: Sequence[float]) -> SpreadSample:
    """Power-weighted delay/angle spreads of one cluster's members on one link.

    Azimuth spread is computed on deviations about the circular mean so a
    cluster straddling +-pi is not inflated; a single member yields zero
    spreads.
    """
    delays = np.asarray(delays, dtype=np.float64)
    azimuths = np.asarray(azimuths, dtype=np.float64)
    elevations = np.asarray(elevations, dtype=np.float64)
    powers = np.asarray(powers, dtype=np.float64)
    if delays.size == 0:
        raise ValueError("cluster has no members on this link")
    if delays.size == 1:
        return SpreadSample(panel_id, snapshot, cluster, 0.0, 0.0, 0.0)
    az_dev = _circular_deviations(azimuths, powers)
    return SpreadSample(
        panel_id=panel_id,
        snapshot=snapshot,
        cluster=cluster,
        delay_spread=_weighted_spread(delays, powers),
        azimuth_spread=_weighted_spread(az_dev, powers),
        elevation_spread=_weighted_spread(elevations, powers),
    )


# ---------------------------------------------------------------------------
# cross-correlations
# ---------------------------------------------------------------------------

@dataclass
class CorrelationMatrix:
    labels: List[str]
    values: np.ndarray          # (len(labels), len(labels)); NaN where undefined
    n_samples: int


def cross_correlations(series: Dict[str, Sequence[float]]) -> CorrelationMatrix:
    """Pearson coefficients between aligned parameter series.

    Requires at least 3 aligned samples. Zero-variance series produce NaN
    entries (reported as undefined) rather than an error.
    """
    labels = list(series)
    arrays = [np.asarray(series[k], dtype=np.float64) for k in labels]
    n = arrays[0].size
    if any(a.size != n for a in arrays):
        raise ValueError("series must be aligned to the same length")
    if n < 3:
        raise ValueError(f"need at least 3 aligned samples, got {n}")
    p = len(labels)
    out = np.full((p, p), np.nan)
    centered = [a - a.mean() for a in arrays]
    norms = [float(np.sqrt((c ** 2).sum())) for c in centered]
    for i in range(p):
        for j in range(p):
            if i == j:
                out[i, j] = 1.0 if norms[i] > 0 else float("nan")
            elif norms[i] > 0 and norms[j] > 0:
                out[i, j] = float((centered[i] * centered[j]).sum() / (norms[i] * norms[j]))
    return CorrelationMatrix(labels=labels, values=out, n_samples=n)
