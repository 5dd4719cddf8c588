"""Command line entry points: serve, simulate, calibrate, validate, replay."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .calibration import (
    CalibrationError,
    DisconnectedGraphError,
    align_viewpoints,
    load_measurements,
)
from .eventlog import LogFormatError, ReplayMismatchError, replay
from .protocol import DEFAULT_PORT
from .room import (
    ManifestError,
    load_manifest,
    save_manifest,
    validate_room,
    with_viewpoint_poses,
)
from .server import DEFAULT_TICK_HZ
from .sim import ScenarioError, load_scenario, run_scenario


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="panomeet",
        description="Multi-user meeting rooms built from calibrated spherical panoramas.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    serve = sub.add_parser("serve", help="run the live session server")
    serve.add_argument("--manifest", required=True, help="room manifest (*.room.json)")
    serve.add_argument("--host", default="0.0.0.0")
    serve.add_argument("--port", type=int, default=DEFAULT_PORT)
    serve.add_argument("--tick-hz", type=float, default=DEFAULT_TICK_HZ)
    serve.add_argument("--log", help="write a replayable event log here")
    serve.add_argument("--static", help="directory with the built web viewer")

    simulate = sub.add_parser("simulate", help="run a scripted scenario on a virtual clock")
    simulate.add_argument("scenario", help="scenario JSON file")
    simulate.add_argument("--log", help="write the server event log here")
    simulate.add_argument("--report", help="also write the metrics report here")

    calibrate = sub.add_parser("calibrate", help="register seat poses from relative measurements")
    calibrate.add_argument("measurements", help="measurement JSON file")
    calibrate.add_argument("manifest", help="room manifest to update")
    calibrate.add_argument("--out", help="write the updated manifest here instead of in place")

    validate = sub.add_parser("validate", help="check a room manifest")
    validate.add_argument("manifest", help="room manifest (*.room.json)")

    rep = sub.add_parser("replay", help="re-run an event log and verify the outputs")
    rep.add_argument("log", help="event log file")
    rep.add_argument("--manifest", help="manifest, required when the log has no ROOM header")
    rep.add_argument("--tick-hz", type=float, default=DEFAULT_TICK_HZ)
    return parser


def _cmd_serve(args) -> int:
    from .net import run_server

    run_server(
        args.manifest,
        host=args.host,
        port=args.port,
        tick_hz=args.tick_hz,
        log_path=args.log,
        static_dir=args.static,
    )
    return 0


def _cmd_simulate(args) -> int:
    try:
        scenario = load_scenario(args.scenario)
        report = run_scenario(scenario, log_path=args.log)
    except (ScenarioError, ManifestError, OSError) as exc:
        print(f"simulate: {exc}", file=sys.stderr)
        return 1
    text = report.to_json()
    print(text)
    if args.report:
        Path(args.report).write_text(text + "\n", encoding="utf-8")
    return 0


def _cmd_calibrate(args) -> int:
    try:
        room = load_manifest(args.manifest)
        measurements = load_measurements(args.measurements)
    except (ManifestError, CalibrationError, OSError) as exc:
        print(f"calibrate: {exc}", file=sys.stderr)
        return 1
    seat_ids = {vp.id for vp in room.viewpoints}
    mentioned = {m.from_id for m in measurements} | {m.to_id for m in measurements}
    unknown = sorted(mentioned - seat_ids)
    if unknown:
        print(f"calibrate: measurements name unknown seats: {unknown}", file=sys.stderr)
        return 1
    uncovered = sorted(seat_ids - mentioned)
    if uncovered:
        print(
            f"calibrate: no measurements reach these seats (graph disconnected): {uncovered}",
            file=sys.stderr,
        )
        return 1
    try:
        result = align_viewpoints(measurements)
    except (DisconnectedGraphError, CalibrationError) as exc:
        print(f"calibrate: {exc}", file=sys.stderr)
        return 1
    updated = with_viewpoint_poses(room, result.poses)
    out_path = args.out or args.manifest
    save_manifest(updated, out_path)
    print(f"residual_rms: {result.residual_rms:.9g}")
    print(f"anchor: {result.anchor_id}")
    print(f"iterations: {result.iterations_used}")
    print(f"wrote {out_path}")
    return 0


def _cmd_validate(args) -> int:
    try:
        room = load_manifest(args.manifest)
    except (ManifestError, OSError) as exc:
        print(f"validate: {exc}", file=sys.stderr)
        return 1
    violations = validate_room(room, base_dir=Path(args.manifest).parent)
    for violation in violations:
        print(violation)
    errors = [v for v in violations if v.level == "ERROR"]
    if errors:
        print(f"{len(errors)} error(s)", file=sys.stderr)
        return 1
    print(f"ok: {room.room_id} ({len(room.viewpoints)} viewpoints, {len(room.elements)} elements)")
    return 0


def _cmd_replay(args) -> int:
    room = None
    if args.manifest:
        try:
            room = load_manifest(args.manifest)
        except (ManifestError, OSError) as exc:
            print(f"replay: {exc}", file=sys.stderr)
            return 1
    try:
        data = Path(args.log).read_bytes()
        engine = replay(data, room=room, tick_hz=args.tick_hz)
    except (ReplayMismatchError, LogFormatError, OSError) as exc:
        print(f"replay: {exc}", file=sys.stderr)
        return 1
    summary = {
        "digest": engine.digest(),
        "tick_count": engine.state.tick_count,
        "sessions": sorted(engine.state.sessions),
        "seats": {k: v for k, v in sorted(engine.state.seat_map.items())},
        "elements": {k: v.to_dict() for k, v in sorted(engine.state.element_states.items())},
    }
    print(json.dumps(summary, indent=2, sort_keys=True))
    return 0


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    handlers = {
        "serve": _cmd_serve,
        "simulate": _cmd_simulate,
        "calibrate": _cmd_calibrate,
        "validate": _cmd_validate,
        "replay": _cmd_replay,
    }
    return handlers[args.command](args)


if __name__ == "__main__":
    sys.exit(main())
