"""Command-line interface.

Subcommands mirror the pipeline stages (each consumes the previous stage's
artifacts from the output directory) plus `synth` for generating validated
synthetic input bundles and `pipeline` for the full run.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numerical
failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import dataio, synth
from .config import PipelineConfig, apply_overrides, load_config
from .errors import PipelineError
from .pipeline import STAGES, run_pipeline, run_stage

log = logging.getLogger(__name__)


def _add_config_options(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="YAML config file")
    parser.add_argument("--out", help="output directory (overrides config)")
    parser.add_argument("--mpcs", help="MPC JSONL/CSV input")
    parser.add_argument("--cloud", help="point cloud PLY/CSV input")
    parser.add_argument("--panels", help="panel CSV input")
    parser.add_argument("--trajectory", help="UE trajectory CSV input")
    parser.add_argument("--delta0", type=float, help="ray candidate threshold, m")
    parser.add_argument("--delta-mcd", type=float, help="clustering MCD threshold")
    parser.add_argument("--zeta", type=float, help="delay scaling factor")
    parser.add_argument("--n-th", type=int, help="track death threshold, snapshots")
    parser.add_argument("--delta-c-th", type=float, help="cluster power ratio threshold")
    parser.add_argument("--delta-p-th", type=float, help="link power ratio threshold")
    parser.add_argument("--tau-cut", type=float, help="regression delay cutoff, s")
    parser.add_argument("--no-tracking", action="store_true",
                        help="skip tracking; visibility keys clusters per snapshot")


def _build_config(args) -> PipelineConfig:
    config = load_config(args.config) if args.config else PipelineConfig()
    overrides = {
        "output_dir": args.out,
        "inputs.mpcs": args.mpcs,
        "inputs.point_cloud": args.cloud,
        "inputs.panels": args.panels,
        "inputs.trajectory": args.trajectory,
        "geometry.delta0_m": args.delta0,
        "clustering.delta_mcd": args.delta_mcd,
        "clustering.zeta": args.zeta,
        "tracking.n_th": args.n_th,
        "visibility.delta_c_th": args.delta_c_th,
        "visibility.delta_p_th": args.delta_p_th,
        "stats.tau_cut_s": args.tau_cut,
    }
    config = apply_overrides(config, overrides)
    if args.no_tracking:
        config.tracking.enabled = False
    return config


def _cmd_synth(args) -> int:
    scene = synth.SceneConfig(
        n_panels=args.panels_count,
        n_snapshots=args.snapshots,
        n_groups=args.groups,
        mpcs_per_group_link=args.mpcs_per_group_link,
        windowed_visibility=not args.full_visibility,
    )
    bundle = synth.gen_clustered_mpcs(scene, seed=args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    dataio.write_mpcs_jsonl(out / "mpcs.jsonl", bundle.mpcs)
    dataio.write_point_cloud_csv(out / "cloud.csv", bundle.cloud_points)
    dataio.write_panels_csv(out / "panels.csv", bundle.panels)
    dataio.write_trajectory_csv(out / "trajectory.csv", bundle.trajectory)
    dataio.write_json(out / "truth.json", {
        "seed": args.seed,
        "scene": {
            "n_panels": scene.n_panels,
            "n_snapshots": scene.n_snapshots,
            "n_groups": scene.n_groups,
            "mpcs_per_group_link": scene.mpcs_per_group_link,
        },
        "group_centers": [[float(v) for v in c] for c in bundle.group_centers],
        "group_windows": bundle.group_windows,
        "labels": bundle.truth_labels,
    })
    config_text = "\n".join([
        "inputs:",
        f"  mpcs: {out / 'mpcs.jsonl'}",
        f"  point_cloud: {out / 'cloud.csv'}",
        f"  panels: {out / 'panels.csv'}",
        f"  trajectory: {out / 'trajectory.csv'}",
        f"output_dir: {out / 'reports'}",
        f"seed: {args.seed}",
        "",
    ])
    (out / "config.yaml").write_text(config_text, encoding="utf-8")
    print(f"synthetic bundle written to {out} ({len(bundle.mpcs)} MPCs, "
          f"{len(bundle.cloud_points)} cloud points)")
    return 0


def _cmd_stage(name: str):
    def runner(args) -> int:
        config = _build_config(args)
        out_dir = Path(config.output_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        summary = run_stage(name, config, out_dir)
        print(json.dumps({"stage": name, "summary": summary}, sort_keys=True, default=str))
        return 0

    return runner


def _cmd_pipeline(args) -> int:
    config = _build_config(args)
    manifest = run_pipeline(config)
    print(json.dumps({"stages": sorted(manifest["stages"])}, sort_keys=True))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dmimo-clusters",
        description="Multipath cluster identification, tracking, and statistics "
                    "for multi-link distributed MIMO channels",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_synth = sub.add_parser("synth", help="generate a synthetic input bundle")
    p_synth.add_argument("--out", required=True, help="bundle output directory")
    p_synth.add_argument("--seed", type=int, default=0)
    p_synth.add_argument("--panels-count", type=int, default=8)
    p_synth.add_argument("--snapshots", type=int, default=12)
    p_synth.add_argument("--groups", type=int, default=3)
    p_synth.add_argument("--mpcs-per-group-link", type=int, default=6)
    p_synth.add_argument("--full-visibility", action="store_true",
                         help="every group active on all panels and snapshots")
    p_synth.set_defaults(func=_cmd_synth)

    for name, _ in STAGES:
        p = sub.add_parser(name, help=f"run the {name} stage")
        _add_config_options(p)
        p.set_defaults(func=_cmd_stage(name))

    p_all = sub.add_parser("pipeline", help="run all stages in order")
    _add_config_options(p_all)
    p_all.set_defaults(func=_cmd_pipeline)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except PipelineError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
