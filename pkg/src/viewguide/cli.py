"""Command-line entry point.

Subcommands:
    run             simulate a scripted capture and write dataset/snapshot/report
    serve           run the HTTP/WebSocket backend
    eval            viewpoint-coverage statistics for two pose-set files
    sample-gt       sample seeded ground-truth viewpoints for a scene
    export-prompts  print the five category-scoring prompts

Exit codes: 0 success, 1 runtime failure, 2 missing/invalid input.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from . import __version__

BIND_ENV_VAR = "VIEWGUIDE_BIND"


def _session_flags(parser: argparse.ArgumentParser):
    group = parser.add_argument_group("session configuration overrides")
    group.add_argument("--capture-interval", type=float, help="seconds between captures")
    group.add_argument("--keyframe-interval", type=float, help="seconds between keyframes")
    group.add_argument("--sphere-scale", type=float, help="bbox-to-sphere scale factor")
    group.add_argument("--subsurfaces", type=int, dest="subsurface_count", help="per sphere")
    group.add_argument("--radius-cap", type=float, dest="sphere_radius_cap", help="meters")
    group.add_argument("--merge-mode", choices=["midpoint", "enclosing"])
    group.add_argument("--score-threshold", type=float, help="complexity gate, 0-100")
    group.add_argument("--depth-tolerance", type=float, help="occlusion fade, meters")
    group.add_argument("--voxel-size", type=float, help="occupancy voxel edge, meters")


def _collect_overrides(args: argparse.Namespace) -> dict:
    keys = (
        "capture_interval",
        "keyframe_interval",
        "sphere_scale",
        "subsurface_count",
        "sphere_radius_cap",
        "merge_mode",
        "score_threshold",
        "depth_tolerance",
        "voxel_size",
    )
    return {k: getattr(args, k) for k in keys if getattr(args, k, None) is not None}


def _require_file(path: str) -> Path:
    p = Path(path)
    if not p.exists():
        print(f"error: file not found: {p}", file=sys.stderr)
        raise SystemExit(2)
    return p


def cmd_run(args: argparse.Namespace) -> int:
    from .detection import SyntheticDetector
    from .evaluation import coverage_report, format_report
    from .scoring import PriorTable, load_default_table
    from .session import CaptureSession, SessionConfig
    from .simulator import DatasetRecorder, load_scene, load_trajectory, run_trajectory

    scene = load_scene(_require_file(args.scene))
    trajectory = load_trajectory(_require_file(args.trajectory))
    table = PriorTable.from_csv(_require_file(args.prior_table)) if args.prior_table else load_default_table()
    config = SessionConfig(seed=args.seed).with_overrides(
        {**scene.session_overrides, **_collect_overrides(args)}
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    session = CaptureSession(config, SyntheticDetector(scene), table)
    recorder = DatasetRecorder(out / "dataset") if not args.no_dataset else None
    run_trajectory(scene, trajectory, session, recorder)
    (out / "session.snap").write_bytes(session.snapshot())
    report = coverage_report(session)
    (out / "report.json").write_text(json.dumps(report, indent=1, sort_keys=True))
    (out / "report.txt").write_text(format_report(report) + "\n")
    print(format_report(report))
    return 0


def cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    from .scoring import PriorTable
    from .server import create_app, flush_snapshots
    from .session import SessionConfig
    from .simulator import load_scene

    scene = load_scene(_require_file(args.scene)) if args.scene else None
    table = PriorTable.from_csv(_require_file(args.prior_table)) if args.prior_table else None
    app = create_app(scene, table, SessionConfig().with_overrides(_collect_overrides(args)))
    if args.static_dir:
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=args.static_dir, html=True), name="ui")
    bind = args.bind or os.environ.get(BIND_ENV_VAR, "127.0.0.1:8787")
    host, _, port = bind.rpartition(":")
    try:
        uvicorn.run(app, host=host or "127.0.0.1", port=int(port))
    finally:
        if args.snapshot_dir:
            written = flush_snapshots(app, args.snapshot_dir)
            for path in written:
                print(f"snapshot written: {path}")
    return 0


def cmd_eval(args: argparse.Namespace) -> int:
    from .evaluation import PoseSet, viewpoint_statistics

    train = PoseSet.load(_require_file(args.train))
    gt = PoseSet.load(_require_file(args.gt))
    if train.convention != gt.convention:
        print(
            f"warning: pose conventions differ ({train.convention!r} vs {gt.convention!r})",
            file=sys.stderr,
        )
    if not (train.metric_scale and gt.metric_scale):
        print(
            "warning: pose sets are not both metric scale; align them first",
            file=sys.stderr,
        )
    stats = viewpoint_statistics(train, gt, pairing=args.pairing)
    pooled = stats["pooled"]
    print(
        f"nearest view distance: {pooled['distance_m']['mean']:.4f} "
        f"+- {pooled['distance_m']['sd']:.4f} m"
    )
    print(
        f"nearest view angle:    {pooled['angle_deg']['mean']:.3f} "
        f"+- {pooled['angle_deg']['sd']:.3f} deg"
    )
    if args.out:
        Path(args.out).write_text(json.dumps(stats, indent=1, sort_keys=True))
    return 0


def cmd_sample_gt(args: argparse.Namespace) -> int:
    from .evaluation import LABEL_GROUND_TRUTH, PoseSet
    from .simulator import load_scene, sample_ground_truth

    scene = load_scene(_require_file(args.scene))
    poses = sample_ground_truth(scene, args.count, args.seed)
    pose_set = PoseSet(poses, [LABEL_GROUND_TRUTH] * len(poses))
    pose_set.save(args.out)
    print(f"wrote {len(poses)} ground-truth poses to {args.out}")
    return 0


def cmd_export_prompts(args: argparse.Namespace) -> int:
    from .detection import load_vocabulary
    from .scoring import METRICS, render_prompt

    categories = load_vocabulary(args.vocabulary)
    for metric in METRICS:
        print(f"--- prompt: {metric} ---")
        print(render_prompt(metric, categories))
        print()
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="viewguide", description=__doc__)
    parser.add_argument("--version", action="version", version=f"viewguide {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="simulate a scripted capture session")
    run.add_argument("--scene", required=True, help="scene JSON file")
    run.add_argument("--trajectory", required=True, help="trajectory JSON file")
    run.add_argument("--seed", type=int, default=0)
    run.add_argument("--out", default="out", help="output directory")
    run.add_argument("--prior-table", help="category score CSV (default: bundled)")
    run.add_argument("--no-dataset", action="store_true", help="skip frame recording")
    _session_flags(run)
    run.set_defaults(func=cmd_run)

    serve = sub.add_parser("serve", help="run the guidance backend")
    serve.add_argument("--bind", help=f"host:port (or ${BIND_ENV_VAR}, default 127.0.0.1:8787)")
    serve.add_argument("--scene", help="default scene JSON for new sessions")
    serve.add_argument("--prior-table", help="category score CSV (default: bundled)")
    serve.add_argument("--snapshot-dir", help="flush session snapshots here on shutdown")
    serve.add_argument("--static-dir", help="serve a built walkthrough UI from this directory")
    _session_flags(serve)
    serve.set_defaults(func=cmd_serve)

    ev = sub.add_parser("eval", help="viewpoint statistics for train vs ground truth")
    ev.add_argument("--train", required=True, help="training pose-set JSON")
    ev.add_argument("--gt", required=True, help="ground-truth pose-set JSON")
    ev.add_argument("--pairing", choices=["nearest_position", "min_angle"], default="nearest_position")
    ev.add_argument("--out", help="write full statistics JSON here")
    ev.set_defaults(func=cmd_eval)

    gt = sub.add_parser("sample-gt", help="sample seeded ground-truth viewpoints")
    gt.add_argument("--scene", required=True)
    gt.add_argument("--count", type=int, default=20)
    gt.add_argument("--seed", type=int, default=0)
    gt.add_argument("--out", required=True)
    gt.set_defaults(func=cmd_sample_gt)

    prompts = sub.add_parser("export-prompts", help="print the scoring prompts")
    prompts.add_argument("--vocabulary", help="category list file (default: bundled)")
    prompts.set_defaults(func=cmd_export_prompts)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except SystemExit:
        raise
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
