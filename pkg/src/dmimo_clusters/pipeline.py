"""Stage orchestration: geometry, clustering, tracking, visibility, statistics.

Every stage consumes the previous stage's on-disk artifacts and writes its
own, so the CLI subcommands and the full pipeline share one code path and
identical inputs yield byte-identical outputs. Each stage also writes a
meta record embedding the resolved configuration and input checksums.
"""

from __future__ import annotations

import json
import logging
import math
from collections import defaultdict
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np

from . import dataio
from .clustering import cluster_snapshot, select_threshold
from .clusterstats import (common_cluster_ratios, cross_correlations, default_tau_cut,
                           intra_cluster_spreads, power_regression)
from .config import PipelineConfig
from .errors import ConfigError, DataError, NumericalError, PipelineError
from .geometry import SPEED_OF_LIGHT, map_interactions
from .inference import censored_vr_mle, fit_exponential, fit_lognormal, fit_shifted_poisson, vr_radius
from .mcd import McdContext, build_context
from .tracking import FilterConfig, Observation, run_tracking
from .visibility import (VrObservation, extract_all_vrs, link_visibility, side_visibility,
                         vrs_per_cluster)

log = logging.getLogger(__name__)

ARTIFACTS = {
    "interactions": "interactions.jsonl",
    "mapping_diagnostics": "mapping_diagnostics.jsonl",
    "cvi_report": "cvi_report.json",
    "clusters": "clusters.jsonl",
    "tracks": "tracks.jsonl",
    "track_summary": "track_summary.csv",
    "visibility": "visibility.csv",
    "vrs": "vrs.csv",
    "vr_runs": "vr_runs.jsonl",
    "vr_stats": "vr_stats.json",
    "common_clusters": "common_clusters.csv",
    "link_stats": "link_stats.csv",
    "correlations": "correlations.csv",
    "spread_samples": "spread_samples.csv",
    "stats": "stats.json",
    "manifest": "run_manifest.json",
}


def to_py(obj):
    """Recursively convert numpy scalars/arrays so json stays deterministic."""
    if isinstance(obj, dict):
        return {k: to_py(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_py(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [to_py(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


def _artifact(out_dir, name) -> Path:
    return Path(out_dir) / ARTIFACTS[name]


def _require(path: Path, stage: str, hint: str) -> Path:
    if not path.exists():
        raise DataError(f"stage {stage!r}: missing artifact {path.name} (run {hint!r} first)")
    return path


def _write_meta(out_dir, stage: str, config: PipelineConfig, checksums: Dict[str, str]) -> None:
    dataio.write_json(Path(out_dir) / f"{stage}.meta.json", to_py({
        "stage": stage,
        "config": config.resolved(),
        "input_checksums": checksums,
    }))


def _input_checksums(config: PipelineConfig) -> Dict[str, str]:
    out = {}
    for name in ("mpcs", "point_cloud", "panels", "trajectory"):
        path = getattr(config.inputs, name)
        if path:
            out[name] = dataio.sha256_file(path)
    return out


def _read_jsonl(path: Path) -> List[dict]:
    rows = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if line:
                rows.append(json.loads(line))
    return rows


# ---------------------------------------------------------------------------
# stage: map-ios
# ---------------------------------------------------------------------------

def stage_map_ios(config: PipelineConfig, out_dir) -> dict:
    inputs = config.inputs
    if not (inputs.mpcs and inputs.point_cloud and inputs.panels):
        raise ConfigError("map-ios needs inputs.mpcs, inputs.point_cloud, inputs.panels")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    dataset = dataio.ingest(inputs.mpcs, inputs.point_cloud, inputs.panels, inputs.trajectory)
    result = map_interactions(
        dataset.mpcs,
        dataset.panels,
        dataset.cloud,
        delta0=config.geometry.delta0_m,
        dbscan_eps=config.geometry.dbscan_eps_m,
        dbscan_min_pts=config.geometry.dbscan_min_pts,
    )
    index_within: Dict[Tuple[int, int], int] = {}
    rows = []
    for ia in result.interactions:
        m = ia.mpc
        idx = index_within.get((m.snapshot, m.panel), 0)
        index_within[(m.snapshot, m.panel)] = idx + 1
        rows.append({
            "snapshot": m.snapshot,
            "panel": m.panel,
            "mpc_index": idx,
            "io": [float(v) for v in ia.io_center],
            "partial_delay_s": float(ia.partial_delay),
            "power": float(m.power),
            "delay_s": float(m.delay),
            "az_rad": float(m.azimuth),
            "el_rad": float(m.elevation),
        })
    dataio.write_jsonl(_artifact(out_dir, "interactions"), rows)
    dataio.write_jsonl(_artifact(out_dir, "mapping_diagnostics"), (
        {"snapshot": d.snapshot, "panel": d.panel, "mpc_index": d.mpc_index, "reason": d.reason}
        for d in result.diagnostics
    ))
    _write_meta(out_dir, "map_ios", config, _input_checksums(config))
    return {"mapped": len(rows), "diagnostics": len(result.diagnostics),
            "counts": dataset.counts}


# ---------------------------------------------------------------------------
# stage: cluster
# ---------------------------------------------------------------------------

class _Interaction:
    """Lightweight stand-in reconstructed from the interactions artifact."""

    __slots__ = ("io_center", "partial_delay", "mpc", "row")

    def __init__(self, row: dict):
        self.io_center = np.asarray(row["io"], dtype=np.float64)
        self.partial_delay = float(row["partial_delay_s"])
        self.mpc = _MpcView(row)
        self.row = row


class _MpcView:
    __slots__ = ("snapshot", "panel", "power", "delay", "azimuth", "elevation")

    def __init__(self, row: dict):
        self.snapshot = int(row["snapshot"])
        self.panel = int(row["panel"])
        self.power = float(row["power"])
        self.delay = float(row["delay_s"])
        self.azimuth = float(row["az_rad"])
        self.elevation = float(row["el_rad"])


def _interactions_by_snapshot(out_dir) -> Dict[int, List[_Interaction]]:
    rows = _read_jsonl(_require(_artifact(out_dir, "interactions"), "cluster", "map-ios"))
    by_snap: Dict[int, List[_Interaction]] = defaultdict(list)
    for row in rows:
        by_snap[int(row["snapshot"])].append(_Interaction(row))
    return dict(sorted(by_snap.items()))


def stage_cluster(config: PipelineConfig, out_dir) -> dict:
    out_dir = Path(out_dir)
    by_snap = _interactions_by_snapshot(out_dir)
    if not by_snap:
        raise DataError("no mapped interactions to cluster")

    delta_mcd = config.clustering.delta_mcd
    cvi_record = None
    if config.clustering.cvi_grid:
        first = next(s for s, ias in by_snap.items() if len(ias) >= 2)
        report = select_threshold(by_snap[first], config.clustering.cvi_grid,
                                  zeta=config.clustering.zeta)
        delta_mcd = report.selected
        cvi_record = {
            "snapshot_used": first,
            "grid": report.grid,
            "davies_bouldin": report.davies_bouldin,
            "silhouette": report.silhouette,
            "rank_sums": report.rank_sums,
            "selected_delta_mcd": report.selected,
        }
        dataio.write_json(_artifact(out_dir, "cvi_report"), to_py(cvi_record))

    rows = []
    non_converged = 0
    for snap, ias in by_snap.items():
        sc = cluster_snapshot(ias, delta_mcd=delta_mcd, zeta=config.clustering.zeta,
                              snapshot=snap, max_iter=config.clustering.max_iter)
        if not sc.converged:
            non_converged += 1
        for cl in sc.clusters:
            members = [
                {
                    "panel": ias[i].mpc.panel,
                    "mpc_index": int(ias[i].row["mpc_index"]),
                    "power": ias[i].mpc.power,
                }
                for i in cl.members
            ]
            rows.append({
                "snapshot": snap,
                "cluster_id": cl.cluster_id,
                "centroid_io_m": [float(v) for v in cl.centroid_io],
                "centroid_partial_delay_s": float(cl.centroid_tau),
                "members": members,
            })
    dataio.write_jsonl(_artifact(out_dir, "clusters"), rows)
    _write_meta(out_dir, "cluster", config, _input_checksums(config))
    return {"snapshots": len(by_snap), "clusters": len(rows),
            "non_converged_snapshots": non_converged, "delta_mcd": delta_mcd,
            "cvi": cvi_record}


# ---------------------------------------------------------------------------
# stage: track
# ---------------------------------------------------------------------------

def _load_clusters(out_dir, stage: str) -> Dict[int, List[dict]]:
    rows = _read_jsonl(_require(_artifact(out_dir, "clusters"), stage, "cluster"))
    by_snap: Dict[int, List[dict]] = defaultdict(list)
    for row in rows:
        by_snap[int(row["snapshot"])].append(row)
    return dict(sorted(by_snap.items()))


def _interaction_lookup(out_dir, stage: str) -> Dict[Tuple[int, int, int], dict]:
    rows = _read_jsonl(_require(_artifact(out_dir, "interactions"), stage, "map-ios"))
    return {(int(r["snapshot"]), int(r["panel"]), int(r["mpc_index"])): r for r in rows}


def _observations(cluster_rows: List[dict], lookup) -> List[Observation]:
    obs = []
    for row in cluster_rows:
        snap = int(row["snapshot"])
        member_io, member_tau, member_power = [], [], []
        for m in row["members"]:
            r = lookup[(snap, int(m["panel"]), int(m["mpc_index"]))]
            member_io.append(r["io"])
            member_tau.append(r["partial_delay_s"])
            member_power.append(r["power"])
        obs.append(Observation(
            cluster_id=int(row["cluster_id"]),
            centroid_io=np.asarray(row["centroid_io_m"], dtype=np.float64),
            centroid_tau_s=float(row["centroid_partial_delay_s"]),
            member_io=np.asarray(member_io, dtype=np.float64),
            member_tau_s=np.asarray(member_tau, dtype=np.float64),
            member_power=np.asarray(member_power, dtype=np.float64),
        ))
    return obs


def stage_track(config: PipelineConfig, out_dir) -> dict:
    out_dir = Path(out_dir)
    if not config.tracking.enabled:
        log.warning("tracking disabled; downstream stages key clusters per snapshot")
        dataio.write_jsonl(_artifact(out_dir, "tracks"), [])
        dataio.write_csv(_artifact(out_dir, "track_summary"),
                         ["track_id", "birth", "death", "lifetime"], [])
        _write_meta(out_dir, "track", config, _input_checksums(config))
        return {"tracks": 0, "enabled": False}
    by_snap = _load_clusters(out_dir, "track")
    lookup = _interaction_lookup(out_dir, "track")
    snapshots = list(by_snap)
    observations = [_observations(by_snap[s], lookup) for s in snapshots]
    fc = FilterConfig(
        q=np.diag(config.tracking.q_diag),
        r=np.diag(config.tracking.r_diag),
        n_th=config.tracking.n_th,
        init_cov_factor=config.tracking.init_cov_factor,
        init_velocity_var=config.tracking.init_velocity_var,
    )
    result = run_tracking(snapshots, observations, fc)
    dataio.write_jsonl(_artifact(out_dir, "tracks"), (
        {
            "snapshot": r.snapshot,
            "track_id": r.track_id,
            "status": r.status,
            "state": r.state_external,
            "centroid": r.centroid_external,
            "matched_cluster_id": r.matched_cluster,
        }
        for r in result.records
    ))
    dataio.write_csv(_artifact(out_dir, "track_summary"),
                     ["track_id", "birth", "death", "lifetime"],
                     [[s["track_id"], s["birth"], s["death"], s["lifetime"]]
                      for s in result.summaries])
    _write_meta(out_dir, "track", config, _input_checksums(config))
    return {"tracks": len(result.summaries), "enabled": True}


# ---------------------------------------------------------------------------
# stage: visibility
# ---------------------------------------------------------------------------

def _cluster_track_labels(config: PipelineConfig, out_dir, by_snap) -> Dict[Tuple[int, int], int]:
    """Map (snapshot, cluster_id) to a stable cluster label (track id)."""
    labels: Dict[Tuple[int, int], int] = {}
    if config.tracking.enabled:
        rows = _read_jsonl(_require(_artifact(out_dir, "tracks"), "visibility", "track"))
        for row in rows:
            if row["matched_cluster_id"] is not None:
                labels[(int(row["snapshot"]), int(row["matched_cluster_id"]))] = int(row["track_id"])
        return labels
    log.warning("tracking disabled; visibility uses per-snapshot cluster ids")
    next_id = 0
    for snap, rows in by_snap.items():
        for row in rows:
            labels[(snap, int(row["cluster_id"]))] = next_id
            next_id += 1
    return labels


def stage_visibility(config: PipelineConfig, out_dir) -> dict:
    out_dir = Path(out_dir)
    by_snap = _load_clusters(out_dir, "visibility")
    labels = _cluster_track_labels(config, out_dir, by_snap)

    cluster_link_power: Dict[Tuple[int, int, int], float] = defaultdict(float)
    link_power: Dict[Tuple[int, int], float] = defaultdict(float)
    panel_ids = set()
    cluster_ids = set()
    snapshots = set()
    for snap, rows in by_snap.items():
        snapshots.add(snap)
        for row in rows:
            key = (snap, int(row["cluster_id"]))
            if key not in labels:
                continue
            label = labels[key]
            cluster_ids.add(label)
            for m in row["members"]:
                k = int(m["panel"])
                p = float(m["power"])
                panel_ids.add(k)
                cluster_link_power[(label, k, snap)] += p
                link_power[(k, snap)] += p

    tensor = link_visibility(
        dict(cluster_link_power), dict(link_power),
        cluster_ids=sorted(cluster_ids),
        panel_ids=sorted(panel_ids),
        snapshots=sorted(snapshots),
        delta_c_th=config.visibility.delta_c_th,
        delta_p_th=config.visibility.delta_p_th,
    )
    vis_rows = []
    for ci, c in enumerate(tensor.cluster_ids):
        for ki, k in enumerate(tensor.panel_ids):
            for ni, n in enumerate(tensor.snapshots):
                vis_rows.append([c, k, n, int(tensor.v[ci, ki, ni])])
    dataio.write_csv(_artifact(out_dir, "visibility"),
                     ["cluster", "panel", "snapshot", "v"], vis_rows)

    side = side_visibility(tensor)
    vrs = extract_all_vrs(side, config.visibility.delta_d_bs_m, config.visibility.delta_d_ue_m)
    dataio.write_csv(_artifact(out_dir, "vrs"),
                     ["side", "cluster", "vr_index", "length_m", "censor_class"],
                     [[vr.side, vr.cluster, vr.vr_index, vr.length, vr.censor_class]
                      for vr in vrs])
    dataio.write_jsonl(_artifact(out_dir, "vr_runs"), (
        {
            "side": vr.side,
            "cluster": vr.cluster,
            "snapshot": vr.snapshot,
            "vr_index": vr.vr_index,
            "length_m": vr.length,
            "censor_class": vr.censor_class,
            "start_idx": vr.start_idx,
            "end_idx": vr.end_idx,
        }
        for vr in vrs
    ))
    _write_meta(out_dir, "visibility", config, _input_checksums(config))
    return {"clusters": len(tensor.cluster_ids), "panels": len(tensor.panel_ids),
            "snapshots": len(tensor.snapshots), "vrs": len(vrs),
            "n_panels_window_m": (len(tensor.panel_ids) - 1) * config.visibility.delta_d_bs_m}


# ---------------------------------------------------------------------------
# stage: vr-stats
# ---------------------------------------------------------------------------

def _vr_from_row(row: dict) -> VrObservation:
    return VrObservation(
        side=row["side"],
        cluster=int(row["cluster"]),
        vr_index=int(row["vr_index"]),
        length=float(row["length_m"]),
        censor_class=row["censor_class"],
        start_idx=int(row["start_idx"]),
        end_idx=int(row["end_idx"]),
        snapshot=int(row["snapshot"]),
    )


def stage_vr_stats(config: PipelineConfig, out_dir) -> dict:
    out_dir = Path(out_dir)
    rows = _read_jsonl(_require(_artifact(out_dir, "vr_runs"), "vr-stats", "visibility"))
    vrs = [_vr_from_row(r) for r in rows]
    vis_rows = _require(_artifact(out_dir, "visibility"), "vr-stats", "visibility")
    panels = set()
    snapshots = set()
    with open(vis_rows) as fh:
        next(fh)
        for line in fh:
            parts = line.strip().split(",")
            if len(parts) == 4:
                panels.add(int(parts[1]))
                snapshots.add(int(parts[2]))
    windows = {
        "BS": max(len(panels) - 1, 1) * config.visibility.delta_d_bs_m,
        "UE": max(len(snapshots) - 1, 1) * config.visibility.delta_d_ue_m,
    }
    delta0 = {"BS": config.visibility.delta0_bs_m, "UE": config.visibility.delta0_ue_m}
    counts = vrs_per_cluster(vrs)

    report = {"sides": {}, "config": config.resolved(),
              "input_checksums": _input_checksums(config)}
    for side in ("BS", "UE"):
        side_vrs = [vr for vr in vrs if vr.side == side]
        entry: dict = {"n_vrs": len(side_vrs), "window_m": windows[side],
                       "delta0_m": delta0[side]}
        if side_vrs:
            observed = fit_exponential([vr.length for vr in side_vrs])
            entry["observed_exponential"] = {"mean_m": observed.lam,
                                             "sample_size": observed.sample_size}
            try:
                mle = censored_vr_mle(side_vrs, windows[side], delta0[side])
                entry["censored_mle"] = {
                    "lambda_y_m": mle.lambda_y,
                    "n0": mle.n0,
                    "gamma": mle.gamma,
                    "n_observations": mle.n_observations,
                    "residual": None if math.isnan(mle.residual) else mle.residual,
                    "degenerate": mle.degenerate,
                    "method": mle.method,
                    "class_counts": mle.class_counts,
                }
                entry["vr_radius_m"] = vr_radius(mle.lambda_y, side).radius
            except ValueError as exc:
                entry["censored_mle"] = {"error": str(exc)}
        if counts[side]:
            fit = fit_shifted_poisson(counts[side])
            entry["vr_count_shifted_poisson"] = {
                "lambda_v": fit.lam,
                "sample_size": fit.sample_size,
                "log_likelihood": fit.log_likelihood,
            }
        report["sides"][side] = entry
    dataio.write_json(_artifact(out_dir, "vr_stats"), to_py(report))
    _write_meta(out_dir, "vr_stats", config, _input_checksums(config))
    return {"bs_vrs": report["sides"]["BS"]["n_vrs"], "ue_vrs": report["sides"]["UE"]["n_vrs"]}


# ---------------------------------------------------------------------------
# stage: stats
# ---------------------------------------------------------------------------

def _los_delay(trajectory, panels, panel_id: int, snapshot: int) -> float:
    ue = trajectory.get(snapshot)
    if ue is None:
        raise DataError(f"trajectory has no snapshot {snapshot}")
    return float(np.linalg.norm(ue - panels[panel_id].position)) / SPEED_OF_LIGHT


def stage_stats(config: PipelineConfig, out_dir) -> dict:
    out_dir = Path(out_dir)
    inputs = config.inputs
    if not (inputs.panels and inputs.trajectory):
        raise ConfigError("stats needs inputs.panels and inputs.trajectory for LoS delays")
    panels = dataio.load_panels(inputs.panels)
    trajectory = dataio.load_trajectory(inputs.trajectory)

    by_snap = _load_clusters(out_dir, "stats")
    lookup = _interaction_lookup(out_dir, "stats")
    labels = _cluster_track_labels(config, out_dir, by_snap)

    vis_path = _require(_artifact(out_dir, "visibility"), "stats", "visibility")
    visible = set()
    panel_ids = set()
    snapshots = set()
    cluster_ids = set()
    with open(vis_path) as fh:
        next(fh)
        for line in fh:
            c, k, n, v = line.strip().split(",")
            panel_ids.add(int(k))
            snapshots.add(int(n))
            cluster_ids.add(int(c))
            if int(v) == 1:
                visible.add((int(c), int(k), int(n)))

    # per (label, panel, snapshot): member parameters on that link
    per_link_members: Dict[Tuple[int, int, int], dict] = {}
    cluster_total_power: Dict[Tuple[int, int], float] = defaultdict(float)
    for snap, rows in by_snap.items():
        for row in rows:
            key = (snap, int(row["cluster_id"]))
            if key not in labels:
                continue
            label = labels[key]
            for m in row["members"]:
                r = lookup[(snap, int(m["panel"]), int(m["mpc_index"]))]
                k = int(m["panel"])
                entry = per_link_members.setdefault((label, k, snap), {
                    "delays": [], "azimuths": [], "elevations": [], "powers": []})
                entry["delays"].append(float(r["delay_s"]))
                entry["azimuths"].append(float(r["az_rad"]))
                entry["elevations"].append(float(r["el_rad"]))
                entry["powers"].append(float(r["power"]))
                cluster_total_power[(label, snap)] += float(r["power"])

    # visibility tensor reload for the common-cluster curve
    from .visibility import VisibilityTensor  # local import to avoid cycles
    c_list, k_list, n_list = sorted(cluster_ids), sorted(panel_ids), sorted(snapshots)
    v = np.zeros((len(c_list), len(k_list), len(n_list)), dtype=np.uint8)
    c_pos = {c: i for i, c in enumerate(c_list)}
    k_pos = {k: i for i, k in enumerate(k_list)}
    n_pos = {n: i for i, n in enumerate(n_list)}
    for (c, k, n) in visible:
        v[c_pos[c], k_pos[k], n_pos[n]] = 1
    tensor = VisibilityTensor(v=v, cluster_ids=c_list, panel_ids=k_list, snapshots=n_list,
                              delta_c_th=config.visibility.delta_c_th,
                              delta_p_th=config.visibility.delta_p_th)
    curve = common_cluster_ratios(tensor, dict(cluster_total_power),
                                  config.visibility.delta_d_bs_m)
    dataio.write_csv(_artifact(out_dir, "common_clusters"),
                     ["distance_m", "common_cluster_ratio", "common_power_ratio"],
                     [[d, r, p] for d, r, p in zip(curve.distance_m, curve.ratio_by_distance,
                                                   curve.power_ratio_by_distance)])

    # per-link regression, spreads, correlations
    link_rows = []
    corr_rows = []
    spread_rows = []
    for k in k_list:
        samples = []
        for (label, kk, snap), entry in per_link_members.items():
            if kk != k or (label, kk, snap) not in visible:
                continue
            powers = np.asarray(entry["powers"])
            delays = np.asarray(entry["delays"])
            w = powers / powers.sum()
            samples.append({
                "label": label,
                "snapshot": snap,
                "power": float(powers.sum()),
                "delay": float((w * delays).sum()),
                "tau0": _los_delay(trajectory, panels, k, snap),
                "entry": entry,
            })
        if len(samples) < 2:
            link_rows.append([k, "", "", "", len(samples), "", "", "", "", "", ""])
            continue
        delays = np.array([s["delay"] for s in samples])
        powers = np.array([s["power"] for s in samples])
        tau0 = np.array([s["tau0"] for s in samples])
        keys = [(s["label"], s["snapshot"]) for s in samples]
        try:
            reg = power_regression(k, delays, powers, tau0,
                                   tau_cut=config.stats.tau_cut_s, sample_keys=keys)
        except ValueError as exc:
            log.warning("power regression failed for panel %d: %s", k, exc)
            link_rows.append([k, "", "", "", len(samples), "", "", "", "", "", ""])
            continue
        sf_of_key = dict(zip(reg.sample_keys, reg.residuals_db))

        series = {"delay_spread_ns": [], "azimuth_spread_deg": [],
                  "elevation_spread_deg": [], "shadowing_db": []}
        for s in samples:
            keyed = (s["label"], s["snapshot"])
            if keyed not in sf_of_key:
                continue
            sp = intra_cluster_spreads(k, s["snapshot"], s["label"],
                                       s["entry"]["delays"], s["entry"]["azimuths"],
                                       s["entry"]["elevations"], s["entry"]["powers"])
            series["delay_spread_ns"].append(sp.delay_spread * 1e9)
            series["azimuth_spread_deg"].append(math.degrees(sp.azimuth_spread))
            series["elevation_spread_deg"].append(math.degrees(sp.elevation_spread))
            series["shadowing_db"].append(float(sf_of_key[keyed]))
            spread_rows.append([k, s["snapshot"], s["label"],
                                sp.delay_spread, sp.azimuth_spread, sp.elevation_spread,
                                float(sf_of_key[keyed])])

        def _ln_fit(values):
            positive = [v for v in values if v > 0]
            if len(positive) >= 2:
                fit = fit_lognormal(positive)
                return fit.mu, fit.sigma
            return "", ""

        mu_t, sg_t = _ln_fit(series["delay_spread_ns"])
        mu_a, sg_a = _ln_fit(series["azimuth_spread_deg"])
        mu_e, sg_e = _ln_fit(series["elevation_spread_deg"])
        link_rows.append([k, reg.k_tau_db_per_ns, reg.p0_db, reg.shadowing_std_db,
                          reg.n_samples, mu_t, sg_t, mu_a, sg_a, mu_e, sg_e])

        if len(series["shadowing_db"]) >= 3:
            corr = cross_correlations(series)
            for i, a in enumerate(corr.labels):
                for j, b in enumerate(corr.labels):
                    if i < j:
                        val = corr.values[i, j]
                        corr_rows.append([k, a, b, "" if math.isnan(val) else val])

    dataio.write_csv(_artifact(out_dir, "link_stats"),
                     ["panel", "k_tau_db_per_ns", "p0_db", "shadowing_std_db", "n_samples",
                      "lognormal_mu_delay_spread_ns", "lognormal_sigma_delay_spread_ns",
                      "lognormal_mu_azimuth_spread_deg", "lognormal_sigma_azimuth_spread_deg",
                      "lognormal_mu_elevation_spread_deg", "lognormal_sigma_elevation_spread_deg"],
                     link_rows)
    dataio.write_csv(_artifact(out_dir, "correlations"),
                     ["panel", "x", "y", "pearson"], corr_rows)
    dataio.write_csv(_artifact(out_dir, "spread_samples"),
                     ["panel", "snapshot", "cluster", "delay_spread_s",
                      "azimuth_spread_rad", "elevation_spread_rad", "shadowing_db"],
                     spread_rows)
    report = {
        "config": config.resolved(),
        "input_checksums": _input_checksums(config),
        "common_cluster_skipped_snapshots": curve.skipped_snapshots,
        "links_with_regression": sum(1 for row in link_rows if row[1] != ""),
        "spread_samples": len(spread_rows),
    }
    dataio.write_json(_artifact(out_dir, "stats"), to_py(report))
    _write_meta(out_dir, "stats", config, _input_checksums(config))
    return report


# ---------------------------------------------------------------------------
# full pipeline
# ---------------------------------------------------------------------------

STAGES = [
    ("map-ios", stage_map_ios),
    ("cluster", stage_cluster),
    ("track", stage_track),
    ("visibility", stage_visibility),
    ("vr-stats", stage_vr_stats),
    ("stats", stage_stats),
]


def run_stage(name: str, config: PipelineConfig, out_dir) -> dict:
    fn = dict(STAGES)[name]
    try:
        return fn(config, out_dir)
    except PipelineError:
        raise
    except Exception as exc:
        raise NumericalError(f"stage {name!r} failed: {exc}") from exc


def run_pipeline(config: PipelineConfig, out_dir=None) -> dict:
    """All stages in order; writes a manifest with config and checksums."""
    out_dir = Path(out_dir if out_dir is not None else config.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    summaries = {}
    for name, _ in STAGES:
        log.info("running stage %s", name)
        summaries[name] = run_stage(name, config, out_dir)
    manifest = {
        "config": config.resolved(),
        "input_checksums": _input_checksums(config),
        "stages": {name: to_py(s) for name, s in summaries.items()},
        "artifacts": sorted(ARTIFACTS.values()),
    }
    dataio.write_json(_artifact(out_dir, "manifest"), to_py(manifest))
    return manifest
