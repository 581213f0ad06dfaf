"""Command-line front end: scenario runs, desk demos, and artifact export.

Exit codes: 0 success, 2 validation failure (bad documents, bad flags),
3 runtime failure (transit did not reach the goal, bind errors).
"""

import argparse
import os
import sys
from pathlib import Path

import numpy as np
import yaml

from .control import ThrustSpeedTable, default_driver_config, navigate, run_speed_hold
from .dwa import DwaConfigError, load_dwa_config, write_candidates_csv
from .dynamics import (
    MassMatrixError,
    ModelFormatError,
    Pose,
    ThrusterConfigError,
    load_model,
)
from .radar import RadarConfig, frame_from_scan, rasterize, write_metadata, write_pgm, write_png
from .rlenv import EnvConfigError
from .scenario import (
    ScenarioFormatError,
    load_scenario,
    resolve_scenario_path,
    run_scenario,
    vessel_from_doc,
    world_from_doc,
    write_trajectory_csv,
)
from .service import DEFAULT_PORT, SimSession, VesselService
from .world import (
    PcgParams,
    PcgParamsError,
    WorldFormatError,
    generate_channel,
    moored_rectangles,
    raycast_scan,
    write_preview_csv,
    write_preview_svg,
)

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_RUNTIME = 3

VALIDATION_ERRORS = (
    ScenarioFormatError,
    ModelFormatError,
    MassMatrixError,
    ThrusterConfigError,
    WorldFormatError,
    PcgParamsError,
    DwaConfigError,
    EnvConfigError,
    ValueError,
    OverflowError,  # out-of-range --port
)


def _out_dir(args):
    path = Path(args.out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _gains(text):
    parts = text.split(",")
    if len(parts) != 3:
        raise argparse.ArgumentTypeError("gains must be kp,ki,kd")
    try:
        return tuple(float(p) for p in parts)
    except ValueError:
        raise argparse.ArgumentTypeError(f"gains must be numbers, got {text!r}")


def cmd_run(args):
    path = resolve_scenario_path(args.scenario)
    doc = load_scenario(path)
    if args.dt is not None:
        doc["dt"] = args.dt
    result = run_scenario(doc, base_dir=path.resolve().parent)
    out = _out_dir(args)
    csv_path = out / "trajectory.csv"
    write_trajectory_csv(result.trajectory, csv_path)
    summary_path = out / "summary.yaml"
    summary_path.write_text(yaml.safe_dump(result.summary, sort_keys=True))
    for key, value in sorted(result.summary.items()):
        print(f"{key}: {value}")
    print(f"wrote {csv_path} ({len(result.trajectory)} rows) and {summary_path}")
    return EXIT_OK


def cmd_pid_demo(args):
    params = load_model(args.vessel)
    times, speeds, thrusts = run_speed_hold(
        params, args.target, duration=args.duration, gains=args.gains)
    for t, s, f in zip(times, speeds, thrusts):
        print(f"t={t:7.2f}  speed={s:.4f}  thrust={f:.4f}")
    out = _out_dir(args)
    csv_path = out / "pid_demo.csv"
    lines = ["t,speed,thrust"]
    lines += [f"{float(t)!r},{float(s)!r},{float(f)!r}"
              for t, s, f in zip(times, speeds, thrusts)]
    csv_path.write_text("\n".join(lines) + "\n")
    tail = speeds[-max(1, len(speeds) // 6):]
    print(f"target {args.target} m/s, settled mean {np.mean(tail):.4f} m/s")
    print(f"wrote {csv_path}")
    return EXIT_OK


def _scan_file_frames(path):
    doc = yaml.safe_load(Path(path).read_text())
    if not isinstance(doc, dict):
        raise WorldFormatError(f"{path}: scan file must be a mapping")
    if "points" in doc and "frames" not in doc:
        doc = {"max_range": doc.get("max_range", 100.0),
               "frames": [{"timestamp": 0.0, "radar": [0.0, 0.0],
                           "points": doc["points"]}]}
    frames = doc.get("frames")
    if not isinstance(frames, list) or not frames:
        raise WorldFormatError(f"{path}: scan file needs frames or points")
    max_range = float(doc.get("max_range", 100.0))
    out = []
    for i, fr in enumerate(frames):
        pts = np.asarray(fr.get("points", []), dtype=float).reshape(-1, 2)
        radar = tuple(float(v) for v in fr.get("radar", (0.0, 0.0)))
        out.append((float(fr.get("timestamp", i)), radar, pts))
    return max_range, out


def cmd_radar_render(args):
    if (args.scan_file is None) == (args.scenario is None):
        print("error: give exactly one of a scan file or --scenario",
              file=sys.stderr)
        return EXIT_VALIDATION
    out = _out_dir(args)
    config_kwargs = dict(image_size=args.image_size, extent_mode="fixed")

    frames = []
    if args.scan_file is not None:
        max_range, raw = _scan_file_frames(args.scan_file)
        config = RadarConfig(max_range=max_range, **config_kwargs)
        for timestamp, radar, pts in raw:
            frames.append(rasterize(pts, config, radar_pos=radar,
                                    timestamp=timestamp))
    else:
        path = resolve_scenario_path(args.scenario)
        result = run_scenario(load_scenario(path), base_dir=path.resolve().parent)
        config = RadarConfig(max_range=args.max_range, **config_kwargs)
        period = 60.0 / config.rotation_rpm
        tr = result.trajectory
        n_frames = int(tr[-1, 0] / period) + 1
        for k in range(n_frames):
            t_k = k * period
            row = tr[np.argmin(np.abs(tr[:, 0] - t_k))]
            pose = Pose(row[1], row[2], row[3])
            scan = raycast_scan(result.world, pose, n_beams=360,
                                max_range=config.max_range, timestamp=t_k)
            frames.append(frame_from_scan(scan, config))

    for i, frame in enumerate(frames):
        stem = out / f"frame_{i:04d}"
        write_pgm(frame, stem.with_suffix(".pgm"))
        write_png(frame, stem.with_suffix(".png"))
        write_metadata(frame, config, stem.with_suffix(".yaml"))
    print(f"wrote {len(frames)} frame(s) to {out}")
    return EXIT_OK


def cmd_dwa_demo(args):
    path = resolve_scenario_path(args.scenario)
    doc = load_scenario(path)
    if doc["controller"]["type"] != "dwa":
        raise ScenarioFormatError(
            f"dwa-demo needs a dwa controller scenario, got "
            f"{doc['controller']['type']!r}")
    params = vessel_from_doc(doc)
    world = world_from_doc(doc, path.resolve().parent)
    table = ThrustSpeedTable.calibrate(params)
    if "config" in doc["controller"]:
        config = load_dwa_config(doc["controller"]["config"])
    else:
        config = default_driver_config(table)

    trace = []
    result = navigate(world, params, table, config=config,
                      t_max=float(doc.get("duration", 600.0)),
                      sim_dt=args.dt if args.dt is not None else 0.02,
                      trace=trace, record_candidates=True)

    out = _out_dir(args)
    csv_path = out / "trajectory.csv"
    write_trajectory_csv(np.array(trace), csv_path)
    cand_dir = out / "candidates"
    cand_dir.mkdir(exist_ok=True)
    for i, plan in enumerate(result.plan_log):
        write_candidates_csv(plan.candidates, cand_dir / f"step_{i:04d}.csv")
    print(f"wrote {csv_path} and {len(result.plan_log)} candidate dump(s)")

    if result.reached_goal:
        print(f"goal reached in {result.sim_time:.1f} s, "
              f"min clearance {result.min_clearance:.2f} m")
        return EXIT_OK
    if result.collided:
        print(f"collision after {result.sim_time:.1f} s", file=sys.stderr)
    elif result.aborted == "time limit":
        print(f"goal not reached within {result.sim_time:.1f} s (time limit)",
              file=sys.stderr)
    else:
        print(result.aborted, file=sys.stderr)
    return EXIT_RUNTIME


def cmd_pcg_preview(args):
    params = PcgParams(n_segments=args.segments, seed=args.seed)
    world = generate_channel(params)
    if args.moored:
        world = world.with_extra_polygons(
            moored_rectangles(world.channel, count=args.moored, seed=args.seed))
    out = _out_dir(args)
    csv_path = out / f"channel_seed{args.seed}.csv"
    svg_path = out / f"channel_seed{args.seed}.svg"
    write_preview_csv(world, csv_path)
    write_preview_svg(world, svg_path)
    print(f"{args.segments} segments, seed {args.seed}: "
          f"goal at ({world.goal[0]:.1f}, {world.goal[1]:.1f}), "
          f"{len(world.polygons)} moored polygon(s)")
    print(f"wrote {csv_path} and {svg_path}")
    return EXIT_OK


def cmd_serve(args):
    if args.lockstep and args.realtime:
        print("error: --lockstep and --realtime are mutually exclusive",
              file=sys.stderr)
        return EXIT_VALIDATION
    mode = "realtime" if args.realtime else "lockstep"
    world = None
    params = None
    if args.scenario is not None:
        doc = load_scenario(args.scenario)
        params = vessel_from_doc(doc)
        world = world_from_doc(
            doc, resolve_scenario_path(args.scenario).resolve().parent)
    session = SimSession(world=world, params=params, mode=mode,
                         dt=args.dt if args.dt is not None else 0.02)
    service = VesselService(session, host=args.host, port=args.port)
    print(f"listening on {service.address[0]}:{service.address[1]} "
          f"({mode} mode)", flush=True)
    service.run()
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(
        prog="fairwaysim",
        description="Surface-vessel simulation toolkit",
        epilog="exit codes: 0 success, 2 validation failure, 3 runtime failure",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    out_default = os.environ.get("FAIRWAYSIM_OUT", ".")
    port_default = int(os.environ.get("FAIRWAYSIM_PORT", DEFAULT_PORT))

    def add_out(p):
        p.add_argument("--out", default=out_default,
                       help="output directory (env FAIRWAYSIM_OUT; default %(default)s)")

    p = sub.add_parser("run", help="run a scenario file to a trajectory CSV")
    p.add_argument("scenario", help="scenario path or bundled name")
    p.add_argument("--dt", type=float, default=None, help="integration step override (s)")
    add_out(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("pid-demo", help="hold a target speed with the PID loop")
    p.add_argument("--vessel", default="harbor-ferry-5m",
                   help="vessel model path or bundled name")
    p.add_argument("--target", type=float, default=0.51, help="speed to hold (m/s)")
    p.add_argument("--duration", type=float, default=60.0)
    p.add_argument("--gains", type=_gains, default=(1.5, 1.0, 0.2),
                   help="PID gains as kp,ki,kd")
    add_out(p)
    p.set_defaults(func=cmd_pid_demo)

    p = sub.add_parser("radar-render",
                       help="rasterize radar frames from a scan file or scenario")
    p.add_argument("scan_file", nargs="?", default=None,
                   help="YAML scan file with frames/points")
    p.add_argument("--scenario", default=None,
                   help="render along a scenario run instead of a scan file")
    p.add_argument("--image-size", type=int, default=256)
    p.add_argument("--max-range", type=float, default=100.0,
                   help="radar range for scenario rendering (m)")
    add_out(p)
    p.set_defaults(func=cmd_radar_render)

    p = sub.add_parser("dwa-demo",
                       help="closed-loop channel transit with candidate dumps")
    p.add_argument("--scenario", default="channel-transit",
                   help="scenario path or bundled name (dwa controller)")
    p.add_argument("--dt", type=float, default=None)
    add_out(p)
    p.set_defaults(func=cmd_dwa_demo)

    p = sub.add_parser("pcg-preview", help="generate a channel and export previews")
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--segments", type=int, default=6)
    p.add_argument("--moored", type=int, default=0,
                   help="also place this many moored vessels")
    add_out(p)
    p.set_defaults(func=cmd_pcg_preview)

    p = sub.add_parser("serve", help="expose a session over line-delimited JSON/TCP")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=port_default,
                   help="TCP port (env FAIRWAYSIM_PORT; default %(default)s)")
    p.add_argument("--lockstep", action="store_true",
                   help="time advances only via sim_step/env_step (default)")
    p.add_argument("--realtime", action="store_true",
                   help="wall-clock paced stepping instead of lockstep")
    p.add_argument("--dt", type=float, default=None)
    p.add_argument("--scenario", default=None,
                   help="preload this scenario's vessel and world")
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except VALIDATION_ERRORS as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
