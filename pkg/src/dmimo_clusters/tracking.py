"""Kalman-filter cluster tracking across snapshots.

Cluster centroids evolve under a constant-velocity model on the 8-state
vector (x, dx, y, dy, z, dz, tau_p, dtau_p). Predicted tracks and observed
clusters are associated by a mutual maximum-closeness rule, where closeness
is a 4-D Gaussian density shaped by the cluster's power-weighted spread.
Unmatched observations are born as new tracks; unmatched tracks keep
coasting (covariance updates continue, the state does not move) and die
after more than n_th consecutive misses, with their lifetime truncated to
the last snapshot in which they were seen.

Delay states are held in nanoseconds internally so process/measurement
noise magnitudes are numerically balanced; all external interfaces speak
seconds.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

log = logging.getLogger(__name__)

TAU_SCALE = 1e9  # seconds -> internal nanoseconds

PHI = np.kron(np.eye(4), np.array([[1.0, 1.0], [0.0, 1.0]]))   # state transition (8x8)
H = np.kron(np.eye(4), np.array([[1.0, 0.0]]))                 # measurement (4x8)

STATUS_BORN = "born"
STATUS_TRACKED = "tracked"
STATUS_DISAPPEARED = "disappeared"
STATUS_DEAD = "dead"


def default_q() -> np.ndarray:
    # position noise (0.1 m)^2 / velocity (0.05 m)^2; delay 0.3 / 0.15 ns
    return np.diag([0.1**2, 0.05**2, 0.1**2, 0.05**2, 0.1**2, 0.05**2, 0.3**2, 0.15**2])


def default_r() -> np.ndarray:
    return np.diag([0.3**2, 0.3**2, 0.3**2, 1.0**2])


@dataclass
class FilterConfig:
    q: np.ndarray = field(default_factory=default_q)
    r: np.ndarray = field(default_factory=default_r)
    n_th: int = 5
    init_cov_factor: float = 10.0
    init_velocity_var: float = 1e4

    def __post_init__(self):
        self.q = np.asarray(self.q, dtype=np.float64).reshape(8, 8)
        self.r = np.asarray(self.r, dtype=np.float64).reshape(4, 4)
        if self.n_th < 1:
            raise ValueError(f"n_th must be >= 1, got {self.n_th}")


@dataclass
class TrackState:
    """One tracked cluster: filter state plus lifecycle bookkeeping."""

    track_id: int
    state: np.ndarray            # (8,), internal units (m, ns)
    cov: np.ndarray              # (8, 8)
    status: str
    birth: int
    last_seen: int
    missed: int = 0
    member_points: np.ndarray = field(default_factory=lambda: np.empty((0, 4)))
    member_weights: np.ndarray = field(default_factory=lambda: np.empty(0))
    matched_cluster: Optional[int] = None

    @property
    def measured_state(self) -> np.ndarray:
        """The (x, y, z, tau_p[ns]) part of the state."""
        return H @ self.state


@dataclass
class Association:
    matched: List[Tuple[int, int]]      # (track list index, observation index)
    born: List[int]                     # observation indices
    disappeared: List[int]              # track list indices


class Observation:
    """Observed cluster centroid plus its member scatter, in internal units."""

    def __init__(self, cluster_id: int, centroid_io, centroid_tau_s: float,
                 member_io, member_tau_s, member_power):
        self.cluster_id = int(cluster_id)
        self.centroid = np.array(
            [centroid_io[0], centroid_io[1], centroid_io[2], centroid_tau_s * TAU_SCALE],
            dtype=np.float64,
        )
        member_io = np.asarray(member_io, dtype=np.float64).reshape(-1, 3)
        member_tau = np.asarray(member_tau_s, dtype=np.float64) * TAU_SCALE
        self.points = np.column_stack([member_io, member_tau])
        self.weights = np.asarray(member_power, dtype=np.float64)


def spread_matrix(points: np.ndarray, weights: np.ndarray, mean: np.ndarray) -> np.ndarray:
    """Power-weighted outer-product spread of member points about `mean` (4x4)."""
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 4)
    w = np.asarray(weights, dtype=np.float64)
    if pts.shape[0] == 0:
        return np.zeros((4, 4))
    d = pts - np.asarray(mean, dtype=np.float64)
    return (w[:, None, None] * d[:, :, None] * d[:, None, :]).sum(axis=0) / w.sum()


def regularize_spread(c: np.ndarray) -> np.ndarray:
    """Ridge so singleton/degenerate clusters still yield an invertible spread."""
    tr = float(np.trace(c))
    bump = 1e-6 * tr / 4.0 if tr > 0 else 1e-9
    return c + bump * np.eye(4)


def closeness(observed: np.ndarray, mean: np.ndarray, spread: np.ndarray) -> float:
    """4-D Gaussian density of `observed` at `mean` with covariance `spread`."""
    return math.exp(log_closeness(observed, mean, spread))


def log_closeness(observed: np.ndarray, mean: np.ndarray, spread: np.ndarray) -> float:
    c = regularize_spread(np.asarray(spread, dtype=np.float64))
    sign, logdet = np.linalg.slogdet(c)
    if sign <= 0:
        return float("-inf")  # still singular: pair is skipped
    q = np.asarray(observed, dtype=np.float64) - np.asarray(mean, dtype=np.float64)
    maha = float(q @ np.linalg.solve(c, q))
    return -2.0 * math.log(2.0 * math.pi) - 0.5 * logdet - 0.5 * maha


def predict(track: TrackState, cfg: FilterConfig) -> TrackState:
    """Propagate state and covariance one snapshot ahead."""
    track.state = PHI @ track.state
    track.cov = PHI @ track.cov @ PHI.T + cfg.q
    return track


def _psd_repair(m: np.ndarray) -> np.ndarray:
    m = 0.5 * (m + m.T)
    eigval, eigvec = np.linalg.eigh(m)
    if eigval.min() < -1e-10:
        log.warning("covariance lost positive semidefiniteness (min eig %.3e); clipping", eigval.min())
        eigval = np.clip(eigval, 0.0, None)
        m = eigvec @ np.diag(eigval) @ eigvec.T
        m = 0.5 * (m + m.T)
    return m


def update(track: TrackState, observation: Optional[Observation], cfg: FilterConfig,
           snapshot: int) -> TrackState:
    """Measurement update; without an observation the state coasts.

    The gain and covariance are updated either way. A track missing for
    more than n_th consecutive snapshots dies, its lifetime ending at the
    last snapshot it was actually seen.
    """
    s = H @ track.cov @ H.T + cfg.r
    gain = np.linalg.solve(s.T, (track.cov @ H.T).T).T   # M H^T S^-1
    track.cov = _psd_repair((np.eye(8) - gain @ H) @ track.cov)
    if observation is not None:
        track.state = track.state + gain @ (observation.centroid - H @ track.state)
        track.status = STATUS_TRACKED
        track.missed = 0
        track.last_seen = snapshot
        track.member_points = observation.points
        track.member_weights = observation.weights
        track.matched_cluster = observation.cluster_id
    else:
        track.missed += 1
        track.matched_cluster = None
        if track.missed > cfg.n_th:
            track.status = STATUS_DEAD
        else:
            track.status = STATUS_DISAPPEARED
    return track


def associate(tracks: Sequence[TrackState], observations: Sequence[Observation],
              cfg: FilterConfig) -> Association:
    """Mutual maximum-closeness association.

    Track-side scores use the track's last member spread about its predicted
    mean; observation-side scores use the observation's member spread about
    its own centroid. A pair matches only when each side picks the other.
    """
    nt, no = len(tracks), len(observations)
    if nt == 0 or no == 0:
        return Association(matched=[], born=list(range(no)), disappeared=list(range(nt)))

    track_scores = np.full((nt, no), -np.inf)
    obs_scores = np.full((no, nt), -np.inf)
    obs_spreads = [spread_matrix(o.points, o.weights, o.centroid) for o in observations]
    for ti, tr in enumerate(tracks):
        pred = tr.measured_state
        tr_spread = spread_matrix(tr.member_points, tr.member_weights, pred)
        for oi, obs in enumerate(observations):
            track_scores[ti, oi] = log_closeness(obs.centroid, pred, tr_spread)
            obs_scores[oi, ti] = log_closeness(pred, obs.centroid, obs_spreads[oi])

    best_obs = np.argmax(track_scores, axis=1)
    best_track = np.argmax(obs_scores, axis=1)
    matched = []
    for ti in range(nt):
        oi = int(best_obs[ti])
        if int(best_track[oi]) == ti and np.isfinite(track_scores[ti, oi]):
            matched.append((ti, oi))
    matched_t = {t for t, _ in matched}
    matched_o = {o for _, o in matched}
    return Association(
        matched=matched,
        born=[o for o in range(no) if o not in matched_o],
        disappeared=[t for t in range(nt) if t not in matched_t],
    )


def start_track(track_id: int, observation: Observation, cfg: FilterConfig,
                snapshot: int) -> TrackState:
    """New track from a first observation: zero velocities, loose prior."""
    state = np.zeros(8)
    state[0::2] = observation.centroid
    cov = np.zeros((8, 8))
    cov[0, 0] = cfg.init_cov_factor * cfg.r[0, 0]
    cov[2, 2] = cfg.init_cov_factor * cfg.r[1, 1]
    cov[4, 4] = cfg.init_cov_factor * cfg.r[2, 2]
    cov[6, 6] = cfg.init_cov_factor * cfg.r[3, 3]
    cov[1, 1] = cov[3, 3] = cov[5, 5] = cov[7, 7] = cfg.init_velocity_var
    return TrackState(
        track_id=track_id,
        state=state,
        cov=cov,
        status=STATUS_BORN,
        birth=snapshot,
        last_seen=snapshot,
        member_points=observation.points,
        member_weights=observation.weights,
        matched_cluster=observation.cluster_id,
    )


@dataclass
class TrackRecord:
    snapshot: int
    track_id: int
    status: str
    state_external: List[float]      # seconds for the delay entries
    centroid_external: List[float]
    matched_cluster: Optional[int]


@dataclass
class TrackingResult:
    records: List[TrackRecord]
    summaries: List[dict]
    track_of_cluster: Dict[Tuple[int, int], int]  # (snapshot, cluster_id) -> track_id


def _external_state(state: np.ndarray) -> List[float]:
    out = state.copy()
    out[6] /= TAU_SCALE
    out[7] /= TAU_SCALE
    return [float(v) for v in out]


def _external_centroid(meas: np.ndarray) -> List[float]:
    return [float(meas[0]), float(meas[1]), float(meas[2]), float(meas[3] / TAU_SCALE)]


def run_tracking(
    snapshots: Sequence[int],
    observations_per_snapshot: Sequence[Sequence[Observation]],
    cfg: Optional[FilterConfig] = None,
) -> TrackingResult:
    """Drive the tracker over an ordered snapshot sequence."""
    cfg = cfg or FilterConfig()
    live: List[TrackState] = []
    all_tracks: List[TrackState] = []
    records: List[TrackRecord] = []
    track_of_cluster: Dict[Tuple[int, int], int] = {}
    next_id = 0

    for snap, observations in zip(snapshots, observations_per_snapshot):
        for tr in live:
            predict(tr, cfg)
        assoc = associate(live, observations, cfg)
        for ti, oi in assoc.matched:
            update(live[ti], observations[oi], cfg, snap)
        for ti in assoc.disappeared:
            update(live[ti], None, cfg, snap)
        for oi in assoc.born:
            track = start_track(next_id, observations[oi], cfg, snap)
            next_id += 1
            live.append(track)
            all_tracks.append(track)

        for tr in live:
            if tr.matched_cluster is not None:
                track_of_cluster[(snap, tr.matched_cluster)] = tr.track_id
            if tr.status != STATUS_DEAD:
                records.append(TrackRecord(
                    snapshot=snap,
                    track_id=tr.track_id,
                    status=tr.status,
                    state_external=_external_state(tr.state),
                    centroid_external=_external_centroid(tr.measured_state),
                    matched_cluster=tr.matched_cluster,
                ))
        live = [tr for tr in live if tr.status != STATUS_DEAD]

    summaries = [
        {
            "track_id": tr.track_id,
            "birth": tr.birth,
            "death": tr.last_seen,
            "lifetime": tr.last_seen - tr.birth + 1,
        }
        for tr in all_tracks
    ]
    return TrackingResult(records=records, summaries=summaries, track_of_cluster=track_of_cluster)
