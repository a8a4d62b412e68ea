"""Command-line entry point: ``homebot run|batch|metrics|export-trajectory|glyph``.

Exit codes: 0 success, 1 configuration or input error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

from . import motion
from .scenario import (
    ConfigError,
    MalformedLog,
    ScenarioRuntimeError,
    compute_metrics,
    load_config,
    parse_config,
    run_batch,
    run_scenario,
)

log = logging.getLogger("homebot")

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2


def _emit(obj, out=None):
    text = json.dumps(obj, indent=2, sort_keys=True)
    if out is None:
        print(text)
    else:
        Path(out).write_text(text + "\n")


def cmd_run(args) -> int:
    cfg = load_config(args.config)
    if args.seed is not None:
        data = cfg.to_dict()
        data["seed"] = args.seed
        cfg = parse_config(data, cfg.base_dir)
    out = Path(args.out) if args.out else None
    try:
        event_log, metrics = run_scenario(cfg)
    except ScenarioRuntimeError as exc:
        log.error("run failed: %s", exc)
        return EXIT_RUNTIME
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        event_log.write(out / f"{cfg.name}_seed{cfg.seed}.jsonl")
        _emit(metrics.to_dict(), out / f"{cfg.name}_seed{cfg.seed}_metrics.json")
        log.info("wrote %d records to %s", len(event_log), out)
    else:
        sys.stdout.write(event_log.to_jsonl())
    return EXIT_OK


def cmd_batch(args) -> int:
    cfg = load_config(args.config)
    try:
        logs, batch = run_batch(cfg, args.runs, exclude_rooms=tuple(args.exclude_room))
    except ScenarioRuntimeError as exc:
        log.error("batch failed: %s", exc)
        return EXIT_RUNTIME
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        for i, lg in enumerate(logs):
            lg.write(out / f"{cfg.name}_run{i:03d}.jsonl")
        _emit(batch.to_dict(), out / f"{cfg.name}_batch_metrics.json")
    _emit({k: v for k, v in batch.to_dict().items() if k != "per_run"} if not args.per_run else batch.to_dict())
    return EXIT_OK


def cmd_metrics(args) -> int:
    path = Path(args.log)
    if not path.exists():
        raise ConfigError(f"log file not found: {path}")
    truth = json.loads(Path(args.truth).read_text()) if args.truth else None
    _emit(compute_metrics(path.read_text(), truth).to_dict())
    return EXIT_OK


def _trajectory_from_params(path: Path):
    try:
        d = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON at line {exc.lineno}") from exc
    start = d.pop("start", [0.0, 0.0])
    goal = d.pop("goal", [1.0, 0.0])
    n = int(d.pop("waypoints", 21))
    fields = {f.name for f in dataclasses.fields(motion.PlayfulParams)}
    unknown = set(d) - fields
    if unknown:
        raise ConfigError(f"unknown trajectory parameters: {sorted(unknown)}")
    if "bounds" in d:
        d["bounds"] = tuple(d["bounds"])
    try:
        p = motion.PlayfulParams(**d)
        seed = motion.seed_straight(start, goal, n)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    return seed, p


def cmd_export_trajectory(args) -> int:
    seed, p = _trajectory_from_params(Path(args.params))
    try:
        traj, report = motion.optimize(seed, p)
    except motion.ObjectiveNotFinite as exc:
        log.error("optimizer failed: %s", exc)
        return EXIT_RUNTIME
    log.info("optimizer: %s after %d iterations", report.stop_reason, report.iterations)
    text = motion.trajectory_csv(traj)
    if args.output:
        Path(args.output).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_glyph(args) -> int:
    try:
        text = motion.glyph_csv(args.text)
    except motion.UnsupportedCharacter as exc:
        raise ConfigError(str(exc)) from exc
    if args.output:
        Path(args.output).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="homebot", description="Home emergency-response robot simulator")
    ap.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run one scenario and write its event log")
    p.add_argument("config", help="scenario JSON (path, or the name of a bundled scenario)")
    p.add_argument("--seed", type=int, help="override the config seed")
    p.add_argument("--out", help="directory for the log and metrics (default: log to stdout)")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("batch", help="run a scenario K times with seeds seed..seed+K-1")
    p.add_argument("config")
    p.add_argument("--runs", type=int, required=True)
    p.add_argument("--out", help="directory for per-run logs and batch metrics")
    p.add_argument("--exclude-room", action="append", default=None, help="room left out of timing (default: bathroom)")
    p.add_argument("--per-run", action="store_true", help="include per-run metrics in the printed summary")
    p.set_defaults(func=cmd_batch)

    p = sub.add_parser("metrics", help="compute metrics from an event log")
    p.add_argument("log")
    p.add_argument("--truth", help="JSON file overriding the ground truth recorded in the log")
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("export-trajectory", help="optimize a playful reach and print it as CSV")
    p.add_argument("params", help="JSON with start, goal, waypoints and optimizer parameters")
    p.add_argument("--csv", dest="output", nargs="?", const=None, default=None, help="write CSV to this file (default stdout)")
    p.set_defaults(func=cmd_export_trajectory)

    p = sub.add_parser("glyph", help="print the stroke segments of characters as CSV")
    p.add_argument("text")
    p.add_argument("--csv", dest="output", nargs="?", const=None, default=None, help="write CSV to this file (default stdout)")
    p.set_defaults(func=cmd_glyph)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if getattr(args, "exclude_room", None) is None and args.command == "batch":
        args.exclude_room = ["bathroom"]
    try:
        return args.func(args)
    except (ConfigError, MalformedLog) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
