"""Command-line interface.

Subcommands:
  phantom init / phantom render   scene files and volume rendering
  project                         axial projection to 16-bit PGM (+ sidecar)
  slice                           tool-aligned virtual B-scan to PGM
  estimate                        pose estimation from a volume file
  run                             closed-loop trials (plan preview unless --yes)
  bench                           estimate/plan stage timings
  serve                           HTTP API for the operator console

Report paths (``--report-dir``) render matplotlib figures next to the
delimited output.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from octnav import phantom as ph
from octnav import pipeline as pl
from octnav.images import write_pgm16
from octnav.projection import axial_projection, OPERATORS
from octnav.slicing import tool_aligned_plane, virtual_bscan
from octnav.volume import load_volume, save_volume


def _load_config(path) -> pl.PipelineConfig:
    if path is None:
        return pl.PipelineConfig()
    return pl.PipelineConfig.from_json(Path(path).read_text())


def _load_scene(path) -> ph.PhantomScene:
    return ph.scene_from_json(Path(path).read_text())


def cmd_phantom_init(args) -> int:
    scene = ph.default_scene(seed=args.seed, speckle_sigma=args.speckle,
                             dropout_prob=args.dropout)
    Path(args.out).write_text(ph.scene_to_json(scene))
    print(f"wrote {args.out}")
    return 0


def cmd_phantom_render(args) -> int:
    scene = _load_scene(args.scene)
    volume = ph.render_volume(scene)
    save_volume(volume, args.out)
    print(f"rendered {scene.name}: dims={volume.dims} -> {args.out}")
    return 0


def cmd_project(args) -> int:
    volume = load_volume(args.infile)
    proj = axial_projection(volume, args.op)
    write_pgm16(proj.pixels, args.out)
    print(f"projection ({args.op}) {proj.pixels.shape[1]}x{proj.pixels.shape[0]} -> {args.out}")
    return 0


def cmd_slice(args) -> int:
    volume = load_volume(args.infile)
    plane = tool_aligned_plane(np.deg2rad(args.theta_z), args.tx, args.ty,
                               lateral_extent_um=volume.extent_um)
    bscan = virtual_bscan(volume, plane)
    write_pgm16(bscan.image, args.out)
    print(f"virtual B-scan {bscan.frame.width}x{bscan.frame.height} -> {args.out}")
    return 0


def cmd_estimate(args) -> int:
    volume = load_volume(args.infile)
    config = _load_config(args.config)
    scene = _load_scene(args.scene) if args.scene else None
    segmenter = pl.make_segmenter(config, scene)
    try:
        est = pl.estimate(volume, config, segmenter)
    except pl.StageError as exc:
        print(f"estimation failed at stage {exc.stage!r}: {exc.cause}", file=sys.stderr)
        return 1
    pose_json = est.pose.to_json()
    if args.out:
        Path(args.out).write_text(pose_json)
        print(f"pose -> {args.out}")
    else:
        print(pose_json)
    if args.masks_dir:
        from octnav.images import write_pgm8
        masks_dir = Path(args.masks_dir)
        masks_dir.mkdir(parents=True, exist_ok=True)
        write_pgm8(est.projection_mask.scores, masks_dir / "projection_needle.pgm")
        for name, mask in est.slice_masks.items():
            write_pgm8(mask.scores, masks_dir / f"bscan_{name}.pgm")
        print(f"masks -> {masks_dir}")
    if args.report_dir:
        from octnav import report
        for p in report.save_estimate_figures(est, args.report_dir):
            print(f"figure -> {p}")
    return 0


def cmd_run(args) -> int:
    scene = _load_scene(args.scene)
    config = _load_config(args.config)
    target = np.array([float(v) for v in args.target.split(",")])
    if target.shape != (3,):
        print("--target must be X,Y,Z in micrometres", file=sys.stderr)
        return 2

    if not args.yes:
        # plan preview only; execution needs explicit approval
        segmenter = pl.make_segmenter(config, scene)
        volume = ph.render_volume(scene)
        try:
            est = pl.estimate(volume, config, segmenter)
            planned = pl.plan(est.pose, target, volume, config, segmenter)
        except pl.StageError as exc:
            print(f"failed at stage {exc.stage!r}: {exc.cause}", file=sys.stderr)
            return 1
        print(planned.plan.to_json())
        if args.report_dir:
            from octnav import report
            report.save_estimate_figures(est, args.report_dir)
            print(f"figure -> {report.save_plan_figure(planned, args.report_dir)}")
        print("preview only; re-run with --yes to execute", file=sys.stderr)
        return 0

    records = []
    for i in range(args.trials):
        rec = pl.run_trial(scene, target, config, trial_id=f"trial-{i}",
                           robot_seed=config.rng_seed + i, log_path=args.log)
        records.append(rec)
        status = "ok" if rec.failure_stage is None else f"FAILED at {rec.failure_stage}"
        print(f"{rec.trial_id}: error {rec.error_um:.2f} um "
              f"(estimate {rec.t_estimate_ms:.0f} ms, plan {rec.t_plan_ms:.0f} ms) {status}")
    finite = [r.error_um for r in records if np.isfinite(r.error_um)]
    if finite:
        print(f"mean error over {len(finite)} trials: {np.mean(finite):.2f} um")
    if args.report_dir:
        from octnav import report
        print(f"figure -> {report.save_trials_figure(records, args.report_dir)}")
    return 0 if all(r.failure_stage is None for r in records) else 1


def cmd_bench(args) -> int:
    scene = _load_scene(args.scene) if args.scene else ph.default_scene()
    config = _load_config(args.config)
    rep = pl.benchmark(scene, config, repetitions=args.reps)
    print(rep.to_json())
    if args.out:
        out = Path(args.out)
        if out.suffix == ".csv":
            lines = ["stage,mean_ms,sd_ms",
                     f"estimate,{rep.estimate_ms[0]:.3f},{rep.estimate_ms[1]:.3f}",
                     f"plan,{rep.plan_ms[0]:.3f},{rep.plan_ms[1]:.3f}",
                     f"acquire,{rep.acquire_ms[0]:.3f},{rep.acquire_ms[1]:.3f}"]
            out.write_text("\n".join(lines) + "\n")
        else:
            out.write_text(rep.to_json())
        print(f"timings -> {out}")
    if args.report_dir:
        from octnav import report
        print(f"figure -> {report.save_benchmark_figure(rep, args.report_dir)}")
    return 0


def cmd_serve(args) -> int:
    import uvicorn
    from octnav.server import create_app

    scene = _load_scene(args.scene)
    config = _load_config(args.config)
    app = create_app(scene, config)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="octnav", description=__doc__,
                                formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("phantom", help="phantom scenes")
    psub = sp.add_subparsers(dest="phantom_command", required=True)
    q = psub.add_parser("init", help="write a default scene JSON")
    q.add_argument("--out", required=True)
    q.add_argument("--seed", type=int, default=0)
    q.add_argument("--speckle", type=float, default=0.15)
    q.add_argument("--dropout", type=float, default=0.0)
    q.set_defaults(func=cmd_phantom_init)
    q = psub.add_parser("render", help="render a scene to a .ioct volume")
    q.add_argument("--scene", required=True)
    q.add_argument("--out", required=True)
    q.set_defaults(func=cmd_phantom_render)

    q = sub.add_parser("project", help="axial projection to 16-bit PGM")
    q.add_argument("--in", dest="infile", required=True)
    q.add_argument("--op", choices=OPERATORS, default="mean")
    q.add_argument("--out", required=True)
    q.set_defaults(func=cmd_project)

    q = sub.add_parser("slice", help="tool-aligned virtual B-scan to PGM")
    q.add_argument("--in", dest="infile", required=True)
    q.add_argument("--theta-z", dest="theta_z", type=float, required=True,
                   help="yaw in degrees")
    q.add_argument("--tx", type=float, required=True, help="tip x (um)")
    q.add_argument("--ty", type=float, required=True, help="tip y (um)")
    q.add_argument("--out", required=True)
    q.set_defaults(func=cmd_slice)

    q = sub.add_parser("estimate", help="needle pose from a volume file")
    q.add_argument("--in", dest="infile", required=True)
    q.add_argument("--config")
    q.add_argument("--scene", help="needed for the oracle segmenter")
    q.add_argument("--out", help="pose JSON path (default: stdout)")
    q.add_argument("--masks-dir", help="export segmentation masks as 8-bit PGM")
    q.add_argument("--report-dir")
    q.set_defaults(func=cmd_estimate)

    q = sub.add_parser("run", help="closed-loop trials against a phantom")
    q.add_argument("--scene", required=True)
    q.add_argument("--target", required=True, help="X,Y,Z in um (volume frame)")
    q.add_argument("--config")
    q.add_argument("--log", help="trial CSV (appended)")
    q.add_argument("--trials", type=int, default=1)
    q.add_argument("--yes", action="store_true",
                   help="approve execution (otherwise plan preview only)")
    q.add_argument("--report-dir")
    q.set_defaults(func=cmd_run)

    q = sub.add_parser("bench", help="estimate/plan stage timings")
    q.add_argument("--scene")
    q.add_argument("--config")
    q.add_argument("--reps", type=int, default=20)
    q.add_argument("--out", help="timings file (.json or .csv)")
    q.add_argument("--report-dir")
    q.set_defaults(func=cmd_bench)

    q = sub.add_parser("serve", help="HTTP API for the operator console")
    q.add_argument("--scene", required=True)
    q.add_argument("--config")
    q.add_argument("--host", default="127.0.0.1")
    q.add_argument("--port", type=int, default=8424)
    q.set_defaults(func=cmd_serve)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
