"""Ray launching of multipath components into a Lidar point cloud.

Each estimated multipath component (MPC) is cast as a ray from its panel
along the measured arrival direction. Cloud points close to the ray are
grouped into potential interacting objects (IOs) with DBSCAN; the real IO
is the group the ray hits first, and the propagation delay before the
last hop (the "partial delay") follows from the IO-to-panel distance.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np
from scipy.spatial import cKDTree

from . import _kernels

SPEED_OF_LIGHT = 299_792_458.0  # m/s

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class PanelGeometry:
    """One distributed array panel at a fixed position (meters)."""

    panel_id: int
    position: np.ndarray

    def __post_init__(self):
        pos = np.asarray(self.position, dtype=np.float64).reshape(3)
        if not np.all(np.isfinite(pos)):
            raise ValueError(f"panel {self.panel_id}: non-finite position {pos}")
        object.__setattr__(self, "position", pos)


@dataclass(frozen=True)
class MpcRecord:
    """One estimated multipath component of a panel-UE link.

    Angles are arrival angles in radians (azimuth in [-pi, pi), elevation
    in [0, pi]); delay in seconds; amplitudes are the dual-polarized
    complex gains in linear scale.
    """

    snapshot: int
    panel: int
    delay: float
    azimuth: float
    elevation: float
    doppler: float
    amp_v: complex
    amp_h: complex

    @property
    def power(self) -> float:
        return abs(self.amp_v) ** 2 + abs(self.amp_h) ** 2

    def validate(self) -> None:
        for name in ("delay", "azimuth", "elevation", "doppler"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"non-finite field {name!r}")
        if not (math.isfinite(self.amp_v.real) and math.isfinite(self.amp_v.imag)
                and math.isfinite(self.amp_h.real) and math.isfinite(self.amp_h.imag)):
            raise ValueError("non-finite amplitude")
        if self.delay <= 0:
            raise ValueError(f"delay must be positive, got {self.delay}")
        if not (0.0 <= self.elevation <= math.pi):
            raise ValueError(f"elevation {self.elevation} outside [0, pi]")
        if not (-math.pi <= self.azimuth < math.pi):
            raise ValueError(f"azimuth {self.azimuth} outside [-pi, pi)")
        if self.power <= 0:
            raise ValueError("zero-power component")


@dataclass(frozen=True)
class Ray:
    """Finite ray segment: origin plus unit direction, capped at max_range."""

    origin: np.ndarray
    direction: np.ndarray
    max_range: float

    @property
    def end(self) -> np.ndarray:
        return self.origin + self.max_range * self.direction


@dataclass(frozen=True)
class InteractionResult:
    """Interacting-object center and partial delay attached to one MPC."""

    mpc: MpcRecord
    io_center: np.ndarray
    partial_delay: float


@dataclass
class MappingDiagnostic:
    snapshot: int
    panel: int
    mpc_index: int
    reason: str


class PointCloud:
    """Immutable 3-D point set with a kd-tree for neighbor queries."""

    def __init__(self, points: np.ndarray):
        pts = np.ascontiguousarray(points, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != 3:
            raise ValueError(f"point cloud must be (N, 3), got {pts.shape}")
        if pts.size and not np.all(np.isfinite(pts)):
            raise ValueError("point cloud contains non-finite coordinates")
        self.points = pts
        self.points.setflags(write=False)
        self._tree: Optional[cKDTree] = cKDTree(pts) if len(pts) else None

    def __len__(self) -> int:
        return len(self.points)

    def candidates_near_segment(self, seg_start, seg_end, radius: float) -> np.ndarray:
        """Superset of indices within `radius` of the segment (kd-tree pruned)."""
        if self._tree is None:
            return np.empty(0, dtype=np.intp)
        seg_start = np.asarray(seg_start, dtype=np.float64)
        seg_end = np.asarray(seg_end, dtype=np.float64)
        length = float(np.linalg.norm(seg_end - seg_start))
        # cover the segment with balls; spacing keeps the union a superset
        step = max(4.0 * radius, 1e-6)
        n_balls = int(math.ceil(length / step)) + 1
        t = np.linspace(0.0, 1.0, n_balls)
        centers = seg_start[None, :] + t[:, None] * (seg_end - seg_start)[None, :]
        ball_radius = math.sqrt((step / 2.0) ** 2 + radius ** 2) + 1e-12
        hits = self._tree.query_ball_point(centers, ball_radius)
        merged = set()
        for h in hits:
            merged.update(h)
        return np.fromiter(sorted(merged), dtype=np.intp, count=len(merged))


def build_ray(mpc: MpcRecord, panel: PanelGeometry) -> Ray:
    """Ray of one MPC: panel position plus the arrival direction, capped at delay * c."""
    if mpc.panel != panel.panel_id:
        raise ValueError(f"MPC panel {mpc.panel} does not match panel {panel.panel_id}")
    if not (math.isfinite(mpc.azimuth) and math.isfinite(mpc.elevation)):
        raise ValueError("non-finite arrival angles")
    sin_el = math.sin(mpc.elevation)
    direction = np.array(
        [math.cos(mpc.azimuth) * sin_el, math.sin(mpc.azimuth) * sin_el, math.cos(mpc.elevation)],
        dtype=np.float64,
    )
    return Ray(origin=panel.position, direction=direction, max_range=mpc.delay * SPEED_OF_LIGHT)


def ray_candidates(ray: Ray, cloud: PointCloud, delta0: float) -> np.ndarray:
    """Indices of cloud points within `delta0` of the finite ray segment."""
    if delta0 <= 0:
        raise ValueError(f"delta0 must be positive, got {delta0}")
    if len(cloud) == 0:
        return np.empty(0, dtype=np.intp)
    superset = cloud.candidates_near_segment(ray.origin, ray.end, delta0)
    if superset.size == 0:
        return superset
    dists = _kernels.point_segment_distances(cloud.points[superset], ray.origin, ray.end)
    return superset[dists <= delta0]


def dbscan(points: np.ndarray, eps: float, min_pts: int) -> np.ndarray:
    """Density-based grouping; returns labels (noise = -1), order-independent.

    Groups are numbered 0..C-1 by first appearance; border points attach to
    their nearest core point so the partition does not depend on row order.
    """
    if eps <= 0:
        raise ValueError(f"eps must be positive, got {eps}")
    if min_pts < 1:
        raise ValueError(f"min_pts must be >= 1, got {min_pts}")
    return _kernels.dbscan_labels(np.asarray(points, dtype=np.float64), eps, min_pts)


def groups_from_labels(labels: np.ndarray) -> List[np.ndarray]:
    """Member index arrays per group, noise excluded."""
    out = []
    for lab in range(int(labels.max()) + 1 if labels.size else 0):
        out.append(np.nonzero(labels == lab)[0])
    return out


def select_real_io(group_centroids: Sequence[np.ndarray], panel: PanelGeometry) -> int:
    """Index of the potential-IO group the ray hits first (closest to the panel).

    Exact distance ties are broken by the lexicographically smallest centroid,
    then by lowest group index, so the choice is permutation-invariant.
    """
    if len(group_centroids) == 0:
        raise ValueError("no potential IO groups")
    cents = np.asarray(group_centroids, dtype=np.float64).reshape(len(group_centroids), 3)
    dists = np.linalg.norm(cents - panel.position, axis=1)
    best = int(np.argmin(dists))
    for j in range(len(cents)):
        if j == best or dists[j] != dists[best]:
            continue
        if tuple(cents[j]) < tuple(cents[best]):
            best = j
    return best


def partial_delay(mpc: MpcRecord, io_center: np.ndarray, panel: PanelGeometry) -> float:
    """Delay of the propagation before the last hop, clamped at 0 if inconsistent."""
    dist = float(np.linalg.norm(np.asarray(io_center, dtype=np.float64) - panel.position))
    tau_p = (mpc.delay * SPEED_OF_LIGHT - dist) / SPEED_OF_LIGHT
    if tau_p < 0.0:
        log.warning(
            "IO center %.3f m from panel %d exceeds path length %.3f m; clamping partial delay",
            dist, panel.panel_id, mpc.delay * SPEED_OF_LIGHT,
        )
        return 0.0
    return tau_p


@dataclass
class MappingResult:
    interactions: List[InteractionResult] = field(default_factory=list)
    diagnostics: List[MappingDiagnostic] = field(default_factory=list)


def map_interactions(
    mpcs: Sequence[MpcRecord],
    panels: dict,
    cloud: PointCloud,
    delta0: float = 0.5,
    dbscan_eps: Optional[float] = None,
    dbscan_min_pts: int = 4,
) -> MappingResult:
    """Map every MPC to its interacting object; unmapped ones go to diagnostics.

    MPCs whose ray meets no cloud points (or only DBSCAN noise) are excluded
    from the interaction list and reported, as are geometrically inconsistent
    IOs whose partial delay had to be clamped to zero.
    """
    eps = delta0 if dbscan_eps is None else dbscan_eps
    result = MappingResult()
    index_within = {}
    for mpc in mpcs:
        key = (mpc.snapshot, mpc.panel)
        idx = index_within.get(key, 0)
        index_within[key] = idx + 1
        panel = panels[mpc.panel]
        ray = build_ray(mpc, panel)
        cand = ray_candidates(ray, cloud, delta0)
        if cand.size == 0:
            result.diagnostics.append(MappingDiagnostic(mpc.snapshot, mpc.panel, idx, "no_candidates"))
            continue
        labels = dbscan(cloud.points[cand], eps, dbscan_min_pts)
        groups = groups_from_labels(labels)
        if not groups:
            result.diagnostics.append(MappingDiagnostic(mpc.snapshot, mpc.panel, idx, "all_noise"))
            continue
        centroids = [cloud.points[cand[g]].mean(axis=0) for g in groups]
        chosen = select_real_io(centroids, panel)
        io_center = centroids[chosen]
        dist = float(np.linalg.norm(io_center - panel.position))
        tau_p = partial_delay(mpc, io_center, panel)
        if dist > mpc.delay * SPEED_OF_LIGHT:
            result.diagnostics.append(
                MappingDiagnostic(mpc.snapshot, mpc.panel, idx, "partial_delay_clamped")
            )
        result.interactions.append(InteractionResult(mpc=mpc, io_center=io_center, partial_delay=tau_p))
    return result
