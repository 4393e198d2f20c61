"""Cluster visibility per link, per side, and visibility-region extraction.

A cluster is visible in a link when its components on that link carry a
sufficient share of the cluster's power and of the link's power. Side
visibility projects the link tensor onto the panel axis (BS side, per
snapshot) and the snapshot axis (UE side); maximal runs of visible entries
form the observed visibility regions (VRs), each classified by whether it
touches the first/last index of the window (censoring classes).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, List, Sequence, Tuple

import numpy as np

UNDETERMINED = -1

CENSOR_NONE = "c00"    # touches neither window edge
CENSOR_END = "c01"     # touches the last index only
CENSOR_START = "c10"   # touches the first index only
CENSOR_BOTH = "c11"    # spans the full window


@dataclass
class VisibilityTensor:
    """Binary visibility V[cluster, panel, snapshot] plus axis labels."""

    v: np.ndarray                 # (C, K, N) uint8
    cluster_ids: List[int]
    panel_ids: List[int]
    snapshots: List[int]
    delta_c_th: float
    delta_p_th: float


def link_visibility(
    cluster_link_power: Dict[Tuple[int, int, int], float],
    link_power: Dict[Tuple[int, int], float],
    cluster_ids: Sequence[int],
    panel_ids: Sequence[int],
    snapshots: Sequence[int],
    delta_c_th: float = 0.1,
    delta_p_th: float = 0.02,
) -> VisibilityTensor:
    """Visibility tensor from per-(cluster, panel, snapshot) powers.

    `cluster_link_power[(c, k, n)]` is the summed component power of cluster
    c on link k at snapshot n (absent keys mean zero power, e.g. a cluster
    not present at that snapshot); `link_power[(k, n)]` is the total power
    of all clustered components on the link.
    """
    if not (0.0 <= delta_c_th < 1.0 and 0.0 <= delta_p_th < 1.0):
        raise ValueError("visibility thresholds must lie in [0, 1)")
    cluster_ids = sorted(cluster_ids)
    panel_ids = sorted(panel_ids)
    snapshots = sorted(snapshots)
    v = np.zeros((len(cluster_ids), len(panel_ids), len(snapshots)), dtype=np.uint8)
    for ci, c in enumerate(cluster_ids):
        for ni, n in enumerate(snapshots):
            total_c = sum(cluster_link_power.get((c, k, n), 0.0) for k in panel_ids)
            if total_c <= 0.0:
                continue
            for ki, k in enumerate(panel_ids):
                p = cluster_link_power.get((c, k, n), 0.0)
                if p <= 0.0:
                    continue
                total_k = link_power.get((k, n), 0.0)
                if total_k <= 0.0:
                    continue
                if p / total_c > delta_c_th and p / total_k > delta_p_th:
                    v[ci, ki, ni] = 1
    return VisibilityTensor(
        v=v,
        cluster_ids=list(cluster_ids),
        panel_ids=list(panel_ids),
        snapshots=list(snapshots),
        delta_c_th=delta_c_th,
        delta_p_th=delta_p_th,
    )


def count_visible(tensor: VisibilityTensor, panel_idx: int, snapshot_idx: int) -> int:
    """Number of clusters visible in one link at one snapshot."""
    return int(tensor.v[:, panel_idx, snapshot_idx].sum())


@dataclass
class SideVisibility:
    """Ternary BS/UE visibility: 1 visible, 0 invisible, -1 undetermined.

    w_bs has shape (C, K, N): the panel pattern of each cluster at each
    snapshot. w_ue has shape (C, N): the snapshot pattern of each cluster,
    visible when any link sees it.
    """

    w_bs: np.ndarray
    w_ue: np.ndarray
    cluster_ids: List[int]
    panel_ids: List[int]
    snapshots: List[int]


def side_visibility(tensor: VisibilityTensor) -> SideVisibility:
    """Project the link tensor onto the BS (panel) and UE (snapshot) sides.

    An entry can only be called invisible when the cluster is visible
    somewhere else along that axis context; otherwise it is undetermined
    (no evidence the counterpart side was inside its own region).
    """
    v = tensor.v
    c_n, k_n, n_n = v.shape
    w_bs = np.full((c_n, k_n, n_n), UNDETERMINED, dtype=np.int8)
    any_panel = v.any(axis=1)  # (C, N)
    for ci in range(c_n):
        for ni in range(n_n):
            if any_panel[ci, ni]:
                w_bs[ci, :, ni] = v[ci, :, ni]
    v_ue = any_panel.astype(np.int8)  # (C, N)
    w_ue = np.full((c_n, n_n), UNDETERMINED, dtype=np.int8)
    ever = v_ue.any(axis=1)
    for ci in range(c_n):
        if ever[ci]:
            w_ue[ci, :] = v_ue[ci, :]
    return SideVisibility(
        w_bs=w_bs,
        w_ue=w_ue,
        cluster_ids=list(tensor.cluster_ids),
        panel_ids=list(tensor.panel_ids),
        snapshots=list(tensor.snapshots),
    )


@dataclass(frozen=True)
class VrObservation:
    """One observed visibility region (a maximal run of visible entries)."""

    side: str                 # "BS" or "UE"
    cluster: int
    vr_index: int
    length: float             # meters
    censor_class: str
    start_idx: int
    end_idx: int
    snapshot: int = -1        # BS runs only; UE runs span snapshots


def find_runs(sequence: np.ndarray) -> List[Tuple[int, int]]:
    """Maximal runs of exact 1s; zeros and undetermined entries both split."""
    runs = []
    start = None
    for i, val in enumerate(sequence):
        if val == 1:
            if start is None:
                start = i
        else:
            if start is not None:
                runs.append((start, i - 1))
                start = None
    if start is not None:
        runs.append((start, len(sequence) - 1))
    return runs


def classify_run(start: int, end: int, last_index: int) -> str:
    touches_start = start == 0
    touches_end = end == last_index
    if touches_start and touches_end:
        return CENSOR_BOTH
    if touches_start:
        return CENSOR_START
    if touches_end:
        return CENSOR_END
    return CENSOR_NONE


def extract_vrs(sequence: np.ndarray, spacing: float, side: str, cluster: int,
                start_index: int = 0, snapshot: int = -1) -> List[VrObservation]:
    """VR observations from one ternary visibility sequence.

    Run length is (last - first) * spacing, so a single-entry run has
    length zero. `start_index` offsets vr_index numbering so runs from
    several sequences of the same cluster can share one counter.
    """
    if spacing <= 0:
        raise ValueError(f"spacing must be positive, got {spacing}")
    seq = np.asarray(sequence)
    out = []
    for j, (a, b) in enumerate(find_runs(seq)):
        out.append(VrObservation(
            side=side,
            cluster=cluster,
            vr_index=start_index + j,
            length=(b - a) * spacing,
            censor_class=classify_run(a, b, len(seq) - 1),
            start_idx=a,
            end_idx=b,
            snapshot=snapshot,
        ))
    return out


def extract_all_vrs(side_vis: SideVisibility, spacing_bs: float, spacing_ue: float
                    ) -> List[VrObservation]:
    """All BS-side (per snapshot) and UE-side VRs over the dataset."""
    out: List[VrObservation] = []
    for ci, cluster in enumerate(side_vis.cluster_ids):
        counter = 0
        for ni, snap in enumerate(side_vis.snapshots):
            vrs = extract_vrs(side_vis.w_bs[ci, :, ni], spacing_bs, "BS", cluster,
                              start_index=counter, snapshot=snap)
            counter += len(vrs)
            out.extend(vrs)
    for ci, cluster in enumerate(side_vis.cluster_ids):
        out.extend(extract_vrs(side_vis.w_ue[ci], spacing_ue, "UE", cluster))
    return out


def vrs_per_cluster(vrs: Sequence[VrObservation]) -> Dict[str, List[int]]:
    """Per-cluster VR counts per side, one count per visibility sequence.

    BS-side counts are per (cluster, snapshot) panel pattern; UE-side counts
    per cluster route pattern. Sequences with no visible run contribute
    nothing, so every returned count is >= 1.
    """
    bs: Dict[Tuple[int, int], int] = {}
    ue: Dict[int, int] = {}
    for vr in vrs:
        if vr.side == "BS":
            key = (vr.cluster, vr.snapshot)
            bs[key] = bs.get(key, 0) + 1
        else:
            ue[vr.cluster] = ue.get(vr.cluster, 0) + 1
    return {
        "BS": [bs[k] for k in sorted(bs)],
        "UE": [ue[k] for k in sorted(ue)],
    }
