"""Synthetic ground-truth generators.

Every generator is deterministic given its seed and emits data through the
same records the pipeline consumes, so each stage can be validated against
planted truth: separated component groups for the clustering stage, moving
noisy centroids for the tracker, censored visibility-region processes for
the estimator, and delay-decay power laws for the regression stage.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .geometry import SPEED_OF_LIGHT, InteractionResult, MpcRecord, PanelGeometry
from .tracking import Observation
from .visibility import VrObservation, classify_run


# ---------------------------------------------------------------------------
# separated interaction groups (clustering oracle)
# ---------------------------------------------------------------------------

@dataclass
class InteractionSceneConfig:
    """Planted, well-separated component groups in the global frame."""

    n_panels: int = 8
    mpcs_per_link: int = 200
    n_groups: int = 5
    group_min_distance: float = 15.0   # m between planted centers
    io_scatter: float = 0.1            # m, Gaussian within-group scatter
    delay_scatter: float = 0.5e-9      # s, within-group partial-delay jitter
    partial_delay_span: Tuple[float, float] = (10e-9, 80e-9)
    volume: float = 60.0               # m, edge of the placement cube
    power_spread_db: float = 20.0


@dataclass
class InteractionScene:
    interactions: List[InteractionResult]
    labels: np.ndarray
    group_centers: np.ndarray
    group_delays: np.ndarray


def _place_separated_centers(rng: np.random.Generator, n: int, min_dist: float,
                             volume: float) -> np.ndarray:
    centers = []
    attempts = 0
    while len(centers) < n:
        cand = rng.uniform(0.0, volume, size=3)
        if all(np.linalg.norm(cand - c) >= min_dist for c in centers):
            centers.append(cand)
        attempts += 1
        if attempts > 10000:
            raise RuntimeError("could not place separated group centers; lower n or min_dist")
    return np.array(centers)


def gen_interactions(config: InteractionSceneConfig, seed: int) -> InteractionScene:
    """Mapped components drawn around planted group centers.

    Components are spread evenly over panels; group membership cycles so
    every group appears on every link. Group partial delays are spaced
    evenly over the configured span, with small within-group jitter.
    """
    rng = np.random.default_rng(seed)
    centers = _place_separated_centers(rng, config.n_groups, config.group_min_distance,
                                       config.volume)
    lo, hi = config.partial_delay_span
    group_delays = np.linspace(lo, hi, config.n_groups)

    interactions: List[InteractionResult] = []
    labels: List[int] = []
    for panel in range(1, config.n_panels + 1):
        for j in range(config.mpcs_per_link):
            g = (j + panel) % config.n_groups
            io = centers[g] + rng.normal(0.0, config.io_scatter, size=3)
            tau_p = group_delays[g] + rng.normal(0.0, config.delay_scatter)
            tau_p = max(tau_p, 1e-12)
            power_db = rng.uniform(-config.power_spread_db, 0.0)
            amp = math.sqrt(10 ** (power_db / 10.0))
            phase = rng.uniform(0.0, 2.0 * math.pi)
            split = rng.uniform(0.2, 0.8)
            mpc = MpcRecord(
                snapshot=0,
                panel=panel,
                delay=tau_p + 20e-9,   # placeholder last hop; not used by clustering
                azimuth=0.0,
                elevation=math.pi / 2,
                doppler=0.0,
                amp_v=amp * math.sqrt(split) * complex(math.cos(phase), math.sin(phase)),
                amp_h=amp * math.sqrt(1.0 - split) * complex(math.cos(phase), -math.sin(phase)),
            )
            interactions.append(InteractionResult(mpc=mpc, io_center=io, partial_delay=tau_p))
            labels.append(g)
    return InteractionScene(
        interactions=interactions,
        labels=np.asarray(labels, dtype=np.int64),
        group_centers=centers,
        group_delays=group_delays,
    )


# ---------------------------------------------------------------------------
# full measurement bundle (geometry + clustering + tracking oracle)
# ---------------------------------------------------------------------------

@dataclass
class SceneConfig:
    """Synthetic room scene emitted in the pipeline's input file formats."""

    n_panels: int = 8
    n_snapshots: int = 12
    n_groups: int = 3
    mpcs_per_group_link: int = 6
    panel_spacing: float = 0.6
    room: Tuple[float, float, float] = (15.0, 6.0, 2.5)
    route_length: float = 12.0
    patch_radius: float = 0.15        # m, reflector patch around each group center
    patch_pitch: float = 0.05         # m, cloud grid pitch
    aim_jitter: float = 0.05          # m, aim-point scatter within the patch
    delay_jitter: float = 0.5e-9      # s
    partial_delay_span: Tuple[float, float] = (15e-9, 70e-9)
    power_spread_db: float = 20.0
    noise_points: int = 150           # isolated clutter points (DBSCAN noise)
    group_min_separation: float = 4.0
    corridor_margin: float = 1.2      # m, clearance of foreign patches from any ray path
    windowed_visibility: bool = True  # contiguous panel/snapshot windows per group


@dataclass
class SyntheticBundle:
    config: SceneConfig
    seed: int
    panels: Dict[int, PanelGeometry]
    trajectory: Dict[int, np.ndarray]
    cloud_points: np.ndarray
    mpcs: List[MpcRecord]
    truth_labels: List[dict]          # {snapshot, panel, index, group}
    group_centers: np.ndarray
    group_windows: List[dict]


def _patch_points(center: np.ndarray, radius: float, pitch: float) -> np.ndarray:
    ticks = np.arange(-radius, radius + pitch / 2, pitch)
    gx, gy, gz = np.meshgrid(ticks, ticks, ticks, indexing="ij")
    offsets = np.column_stack([gx.ravel(), gy.ravel(), gz.ravel()])
    offsets = offsets[np.linalg.norm(offsets, axis=1) <= radius]
    return center[None, :] + offsets


def _segment_point_distance(a: np.ndarray, b: np.ndarray, p: np.ndarray) -> float:
    d = b - a
    denom = float(d @ d)
    if denom == 0.0:
        return float(np.linalg.norm(p - a))
    t = float(np.clip((p - a) @ d / denom, 0.0, 1.0))
    return float(np.linalg.norm(p - (a + t * d)))


def _place_groups(rng: np.random.Generator, config: SceneConfig,
                  panel_pos: np.ndarray) -> np.ndarray:
    """Group centers kept clear of every panel-to-group ray corridor."""
    rx, ry, rz = config.room
    for _ in range(4000):
        centers = np.column_stack([
            rng.uniform(0.5, rx - 0.5, config.n_groups),
            rng.uniform(2.0, ry - 0.5, config.n_groups),
            rng.uniform(0.5, rz - 0.3, config.n_groups),
        ])
        ok = True
        for i in range(config.n_groups):
            for j in range(i + 1, config.n_groups):
                if np.linalg.norm(centers[i] - centers[j]) < config.group_min_separation:
                    ok = False
        if ok:
            for g in range(config.n_groups):
                for p in panel_pos:
                    for other in range(config.n_groups):
                        if other == g:
                            continue
                        if _segment_point_distance(p, centers[g], centers[other]) \
                                < config.corridor_margin:
                            ok = False
        if ok:
            return centers
    raise RuntimeError("could not place groups clear of ray corridors; relax the scene config")


def _contiguous_window(rng: np.random.Generator, size: int, min_frac: float = 0.5
                       ) -> Tuple[int, int]:
    span = rng.integers(max(1, int(min_frac * size)), size + 1)
    start = rng.integers(0, size - span + 1)
    return int(start), int(start + span - 1)


def gen_clustered_mpcs(config: SceneConfig, seed: int) -> SyntheticBundle:
    """Full synthetic measurement: point cloud, panels, trajectory, MPCs, truth.

    Each group is a dense reflector patch in the cloud; its MPCs aim at the
    patch from every panel within the group's link window, with delays equal
    to a planted pre-hop delay plus the aim distance, so ray mapping
    recovers the patch and the planted partition.
    """
    rng = np.random.default_rng(seed)
    rx, ry, rz = config.room

    panel_x0 = (rx - (config.n_panels - 1) * config.panel_spacing) / 2.0
    panel_pos = np.array([
        [panel_x0 + (k - 1) * config.panel_spacing, 0.2, 1.0]
        for k in range(1, config.n_panels + 1)
    ])
    panels = {k: PanelGeometry(panel_id=k, position=panel_pos[k - 1])
              for k in range(1, config.n_panels + 1)}

    route_x0 = (rx - config.route_length) / 2.0
    step = config.route_length / max(config.n_snapshots - 1, 1)
    trajectory = {
        n: np.array([route_x0 + n * step, ry - 1.5, 1.0])
        for n in range(config.n_snapshots)
    }

    centers = _place_groups(rng, config, panel_pos)
    lo, hi = config.partial_delay_span
    group_delays = np.linspace(lo, hi, config.n_groups)

    cloud_parts = [_patch_points(centers[g], config.patch_radius, config.patch_pitch)
                   for g in range(config.n_groups)]
    clutter = np.column_stack([
        rng.uniform(0.0, rx, config.noise_points),
        rng.uniform(0.0, ry, config.noise_points),
        rng.uniform(0.0, rz, config.noise_points),
    ])
    # keep clutter isolated from the patches and the ray corridors
    keep = np.ones(len(clutter), dtype=bool)
    for i, pt in enumerate(clutter):
        for g in range(config.n_groups):
            if np.linalg.norm(pt - centers[g]) < config.corridor_margin:
                keep[i] = False
            for p in panel_pos:
                if _segment_point_distance(p, centers[g], pt) < config.corridor_margin:
                    keep[i] = False
    cloud_points = np.vstack(cloud_parts + [clutter[keep]])

    windows = []
    for g in range(config.n_groups):
        if config.windowed_visibility:
            pk = _contiguous_window(rng, config.n_panels)
            sn = _contiguous_window(rng, config.n_snapshots)
        else:
            pk = (0, config.n_panels - 1)
            sn = (0, config.n_snapshots - 1)
        windows.append({"panels": pk, "snapshots": sn})

    mpcs: List[MpcRecord] = []
    truth: List[dict] = []
    index_within: Dict[Tuple[int, int], int] = {}
    for n in range(config.n_snapshots):
        for k in range(1, config.n_panels + 1):
            for g in range(config.n_groups):
                wp = windows[g]["panels"]
                ws = windows[g]["snapshots"]
                if not (wp[0] <= k - 1 <= wp[1] and ws[0] <= n <= ws[1]):
                    continue
                for _ in range(config.mpcs_per_group_link):
                    aim = centers[g] + rng.normal(0.0, config.aim_jitter, size=3)
                    aim_off = aim - centers[g]
                    norm = np.linalg.norm(aim_off)
                    if norm > config.patch_radius * 0.8:
                        aim = centers[g] + aim_off * (config.patch_radius * 0.8 / norm)
                    direction = aim - panel_pos[k - 1]
                    dist = float(np.linalg.norm(direction))
                    direction /= dist
                    azimuth = math.atan2(direction[1], direction[0])
                    azimuth = (azimuth + math.pi) % (2.0 * math.pi) - math.pi
                    elevation = math.acos(np.clip(direction[2], -1.0, 1.0))
                    tau_p = max(group_delays[g] + rng.normal(0.0, config.delay_jitter), 1e-9)
                    power_db = rng.uniform(-config.power_spread_db, 0.0)
                    amp = math.sqrt(10 ** (power_db / 10.0))
                    phase = rng.uniform(0.0, 2.0 * math.pi)
                    split = rng.uniform(0.2, 0.8)
                    mpc = MpcRecord(
                        snapshot=n,
                        panel=k,
                        delay=tau_p + dist / SPEED_OF_LIGHT,
                        azimuth=azimuth,
                        elevation=elevation,
                        doppler=float(rng.normal(0.0, 5.0)),
                        amp_v=amp * math.sqrt(split) * complex(math.cos(phase), math.sin(phase)),
                        amp_h=amp * math.sqrt(1 - split) * complex(math.cos(phase), -math.sin(phase)),
                    )
                    idx = index_within.get((n, k), 0)
                    index_within[(n, k)] = idx + 1
                    mpcs.append(mpc)
                    truth.append({"snapshot": n, "panel": k, "index": idx, "group": g})

    return SyntheticBundle(
        config=config,
        seed=seed,
        panels=panels,
        trajectory=trajectory,
        cloud_points=cloud_points,
        mpcs=mpcs,
        truth_labels=truth,
        group_centers=centers,
        group_windows=windows,
    )


# ---------------------------------------------------------------------------
# moving clusters (tracking oracle)
# ---------------------------------------------------------------------------

@dataclass
class MovingClusterConfig:
    n_snapshots: int = 20
    starts: Sequence[Sequence[float]] = ((0.0, 0.0, 1.0, 30e-9),)   # (x, y, z, tau_p)
    velocities: Sequence[Sequence[float]] = ((0.2, 0.1, 0.0, 0.1e-9),)  # per snapshot
    n_members: int = 12
    member_scatter_io: float = 0.3      # m
    member_scatter_tau: float = 1e-9    # s
    obs_noise_io: float = 0.0           # m, centroid observation noise
    obs_noise_tau: float = 0.0          # s
    occlusions: Dict[int, Sequence[int]] = field(default_factory=dict)  # cluster -> snapshots


@dataclass
class MovingClusterTruth:
    centroids: np.ndarray      # (n_clusters, n_snapshots, 4) with tau in seconds
    observations: List[List[Observation]]
    snapshots: List[int]


def gen_moving_cluster(config: MovingClusterConfig, seed: int) -> MovingClusterTruth:
    """Linearly moving cluster centroids with member scatter and optional gaps."""
    rng = np.random.default_rng(seed)
    starts = np.asarray(config.starts, dtype=np.float64)
    vels = np.asarray(config.velocities, dtype=np.float64)
    n_clusters = starts.shape[0]
    truth = np.empty((n_clusters, config.n_snapshots, 4))
    observations: List[List[Observation]] = []
    for n in range(config.n_snapshots):
        snap_obs: List[Observation] = []
        for c in range(n_clusters):
            truth[c, n] = starts[c] + n * vels[c]
            if n in set(config.occlusions.get(c, ())):
                continue
            centroid = truth[c, n].copy()
            centroid[:3] += rng.normal(0.0, config.obs_noise_io, size=3) \
                if config.obs_noise_io > 0 else 0.0
            centroid[3] += rng.normal(0.0, config.obs_noise_tau) \
                if config.obs_noise_tau > 0 else 0.0
            member_io = centroid[:3] + rng.normal(0.0, config.member_scatter_io,
                                                  size=(config.n_members, 3))
            member_tau = centroid[3] + rng.normal(0.0, config.member_scatter_tau,
                                                  size=config.n_members)
            weights = rng.uniform(0.5, 1.5, size=config.n_members)
            snap_obs.append(Observation(
                cluster_id=c,
                centroid_io=centroid[:3],
                centroid_tau_s=float(centroid[3]),
                member_io=member_io,
                member_tau_s=member_tau,
                member_power=weights,
            ))
        observations.append(snap_obs)
    return MovingClusterTruth(
        centroids=truth,
        observations=observations,
        snapshots=list(range(config.n_snapshots)),
    )


# ---------------------------------------------------------------------------
# censored VR processes (estimator oracle)
# ---------------------------------------------------------------------------

@dataclass
class VrProcessConfig:
    lambda_y: float = 3.0      # true mean complete length, meters
    window: float = 12.0       # observable span L, meters
    delta0: float = 0.24       # minimum complete/observable length, meters
    n_vrs: int = 2000


@dataclass
class VrProcessTruth:
    vrs: List[VrObservation]
    complete_lengths: np.ndarray
    starts: np.ndarray
    config: VrProcessConfig


def gen_vr_process(config: VrProcessConfig, seed: int) -> VrProcessTruth:
    """Window-censored exponential VR process.

    Complete lengths are exponential with mean lambda_y, redrawn below
    delta0 (the model's minimum complete length); positions are uniform over
    an extended axis, and regions overlapping the window by less than
    delta0 are discarded as unobservable. Observed lengths are the clipped
    overlaps, classed by which window edges they touch.
    """
    if not config.window > config.delta0 >= 0:
        raise ValueError("need window > delta0 >= 0")
    rng = np.random.default_rng(seed)
    extend = config.delta0 + 40.0 * config.lambda_y
    vrs: List[VrObservation] = []
    lengths: List[float] = []
    starts: List[float] = []
    idx = 0
    while len(vrs) < config.n_vrs:
        y = rng.exponential(config.lambda_y)
        if y < config.delta0:
            continue
        s = rng.uniform(-extend, config.window)
        lo = max(s, 0.0)
        hi = min(s + y, config.window)
        if hi - lo < config.delta0:
            continue
        # map to a virtual index axis only to reuse the positional classifier
        touches_start = s < 0.0
        touches_end = s + y > config.window
        censor = classify_run(
            0 if touches_start else 1,
            2 if touches_end else 1,
            2,
        )
        vrs.append(VrObservation(
            side="BS",
            cluster=0,
            vr_index=idx,
            length=hi - lo,
            censor_class=censor,
            start_idx=0,
            end_idx=0,
        ))
        lengths.append(y)
        starts.append(s)
        idx += 1
    return VrProcessTruth(
        vrs=vrs,
        complete_lengths=np.asarray(lengths),
        starts=np.asarray(starts),
        config=config,
    )


# ---------------------------------------------------------------------------
# delay-decay power laws (regression oracle)
# ---------------------------------------------------------------------------

@dataclass
class PowerLawConfig:
    p0_db: float = -60.0
    k_tau_db_per_ns: float = 0.219
    tau0: float = 20e-9            # LoS delay, seconds
    tau_cut: float = 200e-9        # floor sets in beyond this delay
    excess_delay_span: float = 120e-9
    shadowing_std_db: float = 5.0
    n_clusters: int = 500


def gen_power_law_samples(config: PowerLawConfig, seed: int):
    """Cluster powers decaying with delay, plus log-normal shadowing.

    Returns (delays_s, powers_linear, tau0_s) arrays. Powers follow the
    dB-domain decay k_tau per nanosecond of excess delay, floored at the
    tau_cut level, with Gaussian shadowing on top.
    """
    rng = np.random.default_rng(seed)
    excess = rng.uniform(0.0, config.excess_delay_span, size=config.n_clusters)
    delays = config.tau0 + excess
    decay = np.minimum(excess, config.tau_cut - config.tau0) * 1e9 * config.k_tau_db_per_ns
    powers_db = config.p0_db - decay + rng.normal(0.0, config.shadowing_std_db,
                                                  size=config.n_clusters)
    tau0 = np.full(config.n_clusters, config.tau0)
    return delays, 10 ** (powers_db / 10.0), tau0
