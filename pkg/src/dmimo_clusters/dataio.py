"""File ingestion and report writing.

Input formats: ASCII PLY or headerless CSV point clouds, panel and
trajectory CSVs, and MPC records as JSONL (one object per line) or CSV.
Malformed rows are rejected with line-numbered messages. All writers are
deterministic: sorted JSON keys, repr-based float formatting, fixed
newlines, no timestamps.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence

import numpy as np

from .errors import DataError
from .geometry import MpcRecord, PanelGeometry, PointCloud


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _parse_float(token: str, path, line_no: int, what: str) -> float:
    try:
        value = float(token)
    except ValueError:
        raise DataError(f"{path}:{line_no}: {what} is not a number: {token!r}") from None
    if not math.isfinite(value):
        raise DataError(f"{path}:{line_no}: {what} is not finite: {token!r}")
    return value


def load_point_cloud(path) -> PointCloud:
    """ASCII PLY (x y z vertex properties) or headerless CSV `x,y,z`, meters."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"point cloud file not found: {path}")
    if path.suffix.lower() == ".ply":
        return PointCloud(_read_ply(path))
    rows = []
    with open(path, newline="") as fh:
        for line_no, row in enumerate(csv.reader(fh), start=1):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) != 3:
                raise DataError(f"{path}:{line_no}: expected 3 columns x,y,z, got {len(row)}")
            rows.append([_parse_float(c, path, line_no, name)
                         for c, name in zip(row, ("x", "y", "z"))])
    if not rows:
        raise DataError(f"{path}: empty point cloud")
    return PointCloud(np.asarray(rows, dtype=np.float64))


def _read_ply(path: Path) -> np.ndarray:
    with open(path) as fh:
        line = fh.readline().strip()
        if line != "ply":
            raise DataError(f"{path}:1: not a PLY file")
        n_vertices = None
        properties: List[str] = []
        in_vertex = False
        line_no = 1
        while True:
            line = fh.readline()
            line_no += 1
            if not line:
                raise DataError(f"{path}: unexpected end of PLY header")
            tokens = line.split()
            if not tokens:
                continue
            if tokens[0] == "format":
                if tokens[1] != "ascii":
                    raise DataError(f"{path}:{line_no}: only ascii PLY is supported")
            elif tokens[0] == "element":
                in_vertex = tokens[1] == "vertex"
                if in_vertex:
                    n_vertices = int(tokens[2])
            elif tokens[0] == "property" and in_vertex:
                properties.append(tokens[-1])
            elif tokens[0] == "end_header":
                break
        if n_vertices is None:
            raise DataError(f"{path}: PLY header has no vertex element")
        try:
            ix, iy, iz = properties.index("x"), properties.index("y"), properties.index("z")
        except ValueError:
            raise DataError(f"{path}: PLY vertex element lacks x/y/z properties") from None
        pts = np.empty((n_vertices, 3))
        for i in range(n_vertices):
            line = fh.readline()
            line_no += 1
            tokens = line.split()
            if len(tokens) < len(properties):
                raise DataError(f"{path}:{line_no}: truncated vertex row")
            pts[i, 0] = _parse_float(tokens[ix], path, line_no, "x")
            pts[i, 1] = _parse_float(tokens[iy], path, line_no, "y")
            pts[i, 2] = _parse_float(tokens[iz], path, line_no, "z")
        return pts


def _data_rows(path) -> Iterable:
    with open(path, newline="") as fh:
        for line_no, row in enumerate(csv.reader(fh), start=1):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            yield line_no, row


def load_panels(path) -> Dict[int, PanelGeometry]:
    """Panel CSV `panel_id,x,y,z`; a header row is tolerated."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"panel file not found: {path}")
    panels: Dict[int, PanelGeometry] = {}
    for line_no, row in _data_rows(path):
        if line_no == 1 and row and not row[0].strip().lstrip("-").isdigit():
            continue
        if len(row) != 4:
            raise DataError(f"{path}:{line_no}: expected panel_id,x,y,z")
        try:
            panel_id = int(row[0])
        except ValueError:
            raise DataError(f"{path}:{line_no}: panel_id is not an integer: {row[0]!r}") from None
        pos = [_parse_float(c, path, line_no, name) for c, name in zip(row[1:], "xyz")]
        if panel_id in panels:
            raise DataError(f"{path}:{line_no}: duplicate panel_id {panel_id}")
        panels[panel_id] = PanelGeometry(panel_id=panel_id, position=np.array(pos))
    if not panels:
        raise DataError(f"{path}: no panels")
    return panels


def load_trajectory(path) -> Dict[int, np.ndarray]:
    """Trajectory CSV `snapshot,x,y,z`; a header row is tolerated."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"trajectory file not found: {path}")
    out: Dict[int, np.ndarray] = {}
    for line_no, row in _data_rows(path):
        if line_no == 1 and row and not row[0].strip().lstrip("-").isdigit():
            continue
        if len(row) != 4:
            raise DataError(f"{path}:{line_no}: expected snapshot,x,y,z")
        try:
            snap = int(row[0])
        except ValueError:
            raise DataError(f"{path}:{line_no}: snapshot is not an integer: {row[0]!r}") from None
        out[snap] = np.array([_parse_float(c, path, line_no, name)
                              for c, name in zip(row[1:], "xyz")])
    if not out:
        raise DataError(f"{path}: empty trajectory")
    return out


MPC_CSV_COLUMNS = ["snapshot", "panel", "delay_s", "az_rad", "el_rad", "doppler_hz",
                   "amp_v_re", "amp_v_im", "amp_h_re", "amp_h_im"]


def _mpc_from_fields(fields: dict, path, line_no: int) -> MpcRecord:
    try:
        mpc = MpcRecord(
            snapshot=int(fields["snapshot"]),
            panel=int(fields["panel"]),
            delay=float(fields["delay_s"]),
            azimuth=float(fields["az_rad"]),
            elevation=float(fields["el_rad"]),
            doppler=float(fields["doppler_hz"]),
            amp_v=complex(*fields["amp_v"]),
            amp_h=complex(*fields["amp_h"]),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"{path}:{line_no}: malformed MPC record ({exc})") from None
    try:
        mpc.validate()
    except ValueError as exc:
        raise DataError(f"{path}:{line_no}: invalid MPC record: {exc}") from None
    return mpc


def load_mpcs(path) -> List[MpcRecord]:
    """MPC records from JSONL (schema keys) or CSV (MPC_CSV_COLUMNS order)."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"MPC file not found: {path}")
    records: List[MpcRecord] = []
    if path.suffix.lower() in (".jsonl", ".json", ".ndjson"):
        with open(path) as fh:
            for line_no, line in enumerate(fh, start=1):
                line = line.strip()
                if not line:
                    continue
                try:
                    obj = json.loads(line)
                except json.JSONDecodeError as exc:
                    raise DataError(f"{path}:{line_no}: invalid JSON ({exc.msg})") from None
                records.append(_mpc_from_fields(obj, path, line_no))
    else:
        for line_no, row in _data_rows(path):
            if line_no == 1 and row and row[0].strip() == "snapshot":
                continue
            if len(row) != len(MPC_CSV_COLUMNS):
                raise DataError(
                    f"{path}:{line_no}: expected {len(MPC_CSV_COLUMNS)} columns "
                    f"({','.join(MPC_CSV_COLUMNS)})"
                )
            vals = [v.strip() for v in row]
            fields = {
                "snapshot": vals[0],
                "panel": vals[1],
                "delay_s": _parse_float(vals[2], path, line_no, "delay_s"),
                "az_rad": _parse_float(vals[3], path, line_no, "az_rad"),
                "el_rad": _parse_float(vals[4], path, line_no, "el_rad"),
                "doppler_hz": _parse_float(vals[5], path, line_no, "doppler_hz"),
                "amp_v": (_parse_float(vals[6], path, line_no, "amp_v_re"),
                          _parse_float(vals[7], path, line_no, "amp_v_im")),
                "amp_h": (_parse_float(vals[8], path, line_no, "amp_h_re"),
                          _parse_float(vals[9], path, line_no, "amp_h_im")),
            }
            records.append(_mpc_from_fields(fields, path, line_no))
    if not records:
        raise DataError(f"{path}: no MPC records")
    return records


# ---------------------------------------------------------------------------
# writers
# ---------------------------------------------------------------------------

def write_json(path, obj) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def write_jsonl(path, rows: Iterable[dict]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for row in rows:
            fh.write(json.dumps(row, sort_keys=True))
            fh.write("\n")


def write_csv(path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([repr(float(v)) if isinstance(v, float) else v for v in row])


def write_mpcs_jsonl(path, mpcs: Sequence[MpcRecord]) -> None:
    write_jsonl(path, (
        {
            "snapshot": m.snapshot,
            "panel": m.panel,
            "delay_s": m.delay,
            "az_rad": m.azimuth,
            "el_rad": m.elevation,
            "doppler_hz": m.doppler,
            "amp_v": [m.amp_v.real, m.amp_v.imag],
            "amp_h": [m.amp_h.real, m.amp_h.imag],
        }
        for m in mpcs
    ))


def write_point_cloud_csv(path, points: np.ndarray) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for p in points:
            fh.write(f"{float(p[0])!r},{float(p[1])!r},{float(p[2])!r}\n")


def write_panels_csv(path, panels: Dict[int, PanelGeometry]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("panel_id,x,y,z\n")
        for pid in sorted(panels):
            p = panels[pid].position
            fh.write(f"{pid},{float(p[0])!r},{float(p[1])!r},{float(p[2])!r}\n")


def write_trajectory_csv(path, trajectory: Dict[int, np.ndarray]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("snapshot,x,y,z\n")
        for snap in sorted(trajectory):
            p = trajectory[snap]
            fh.write(f"{snap},{float(p[0])!r},{float(p[1])!r},{float(p[2])!r}\n")


@dataclass
class ChannelDataset:
    """Validated in-memory inputs plus ingestion bookkeeping."""

    mpcs: List[MpcRecord]
    cloud: PointCloud
    panels: Dict[int, PanelGeometry]
    trajectory: Optional[Dict[int, np.ndarray]] = None
    counts: Dict[str, dict] = field(default_factory=dict)
    checksums: Dict[str, str] = field(default_factory=dict)


def ingest(mpc_path, cloud_path, panel_path, trajectory_path=None) -> ChannelDataset:
    """Load and validate all inputs; reports per-link/per-snapshot MPC counts."""
    mpcs = load_mpcs(mpc_path)
    cloud = load_point_cloud(cloud_path)
    panels = load_panels(panel_path)
    trajectory = load_trajectory(trajectory_path) if trajectory_path else None
    known = set(panels)
    for i, m in enumerate(mpcs):
        if m.panel not in known:
            raise DataError(f"MPC record {i}: unknown panel {m.panel}")
    per_link: Dict[str, int] = {}
    per_snapshot: Dict[str, int] = {}
    for m in mpcs:
        per_link[str(m.panel)] = per_link.get(str(m.panel), 0) + 1
        per_snapshot[str(m.snapshot)] = per_snapshot.get(str(m.snapshot), 0) + 1
    checksums = {
        "mpcs": sha256_file(mpc_path),
        "point_cloud": sha256_file(cloud_path),
        "panels": sha256_file(panel_path),
    }
    if trajectory_path:
        checksums["trajectory"] = sha256_file(trajectory_path)
    return ChannelDataset(
        mpcs=mpcs,
        cloud=cloud,
        panels=panels,
        trajectory=trajectory,
        counts={"per_link": per_link, "per_snapshot": per_snapshot,
                "total": {"mpcs": len(mpcs), "cloud_points": len(cloud)}},
        checksums=checksums,
    )
