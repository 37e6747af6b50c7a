"""Command line interface.

Exit codes: 0 success, 1 usage error, 2 data error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from collections import Counter
from pathlib import Path
from typing import Dict, List, Optional, Sequence, TextIO

import numpy as np

from .config import ConfigError, RunConfig, config_to_dict, load_config
from .geometry import RigidTransform, Rotation, SimilarityTransform
from .metrics import evaluate as evaluate_streams
from .pipeline import (AXES, CalibrationState, OnlineCalibrator, Rejection,
                       rescale_trajectory, run)
from .sync import SyncedSample, drop_stationary, make_windows, synchronize
from .synth import PROFILES, NoiseModel, RigConfig, generate
from .trajio import FORMATS, TrajectoryFormatError, parse_trajectory, write_tum

SCHEMA_VERSION = 1
EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 1, 2

log = logging.getLogger("robust_handeye")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


# ---- JSON helpers -------------------------------------------------------

def transform_to_dict(x: SimilarityTransform) -> Dict[str, object]:
    return {"quaternion_wxyz": [float(v) for v in x.rotation.quat],
            "translation": [float(v) for v in x.translation],
            "scale": float(x.scale)}


def transform_from_dict(d: dict) -> SimilarityTransform:
    try:
        q = np.array(d["quaternion_wxyz"], dtype=float)
        t = np.array(d["translation"], dtype=float)
        s = float(d.get("scale", 1.0))
    except (KeyError, TypeError, ValueError) as exc:
        raise ValueError(f"bad transform record: {exc}") from None
    if q.shape != (4,) or t.shape != (3,):
        raise ValueError("bad transform record: need 4 quaternion and 3 translation values")
    return SimilarityTransform(Rotation(q), t, s)


def load_transform(path: str) -> SimilarityTransform:
    with open(path) as fh:
        try:
            d = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValueError(f"{path}: {exc}") from None
    return transform_from_dict(d.get("extrinsic", d))


def window_statistics(state: CalibrationState) -> Dict[str, int]:
    counts = Counter(h.rejection_reason.value for h in state.window_history)
    stats = {"total": len(state.window_history)}
    stats.update({r.value: int(counts.get(r.value, 0)) for r in Rejection})
    return stats


def calibration_record(state: CalibrationState) -> Dict[str, object]:
    out = {"schema_version": SCHEMA_VERSION}
    out.update(transform_to_dict(state.consolidated))
    out["observable_axes"] = {a: bool(o) for a, o in zip(AXES, state.observable_axes)}
    out["inlier_count"] = int(state.inlier_count)
    out["windows"] = window_statistics(state)
    return out


def _dump(obj, fh: TextIO) -> None:
    json.dump(obj, fh, indent=2, sort_keys=True)
    fh.write("\n")


# ---- CSV outputs --------------------------------------------------------

WINDOW_COLUMNS = ("index", "t_start", "t_end", "pair_count", "accepted", "rejection_reason",
                  "converged", "cost", "cost_per_pair", "qw", "qx", "qy", "qz",
                  "tx", "ty", "tz", "scale", "obs_x", "obs_y", "obs_z")


def write_window_csv(state: CalibrationState, fh: TextIO) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(WINDOW_COLUMNS)
    for h in state.window_history:
        if h.estimate is not None:
            est = [*h.estimate.rotation.quat, *h.estimate.translation, h.estimate.scale]
        else:
            est = [""] * 8
        per_pair = h.cost / h.pair_count if h.pair_count else float("nan")
        w.writerow([h.index, repr(h.t_start), repr(h.t_end), h.pair_count, int(h.accepted),
                    h.rejection_reason.value, int(h.converged), repr(float(h.cost)),
                    repr(float(per_pair)), *[repr(float(v)) if v != "" else "" for v in est],
                    *[int(a) for a in h.observable_axes]])


def write_scale_csv(history, fh: TextIO) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(("timestamp", "scale"))
    for t, s in history:
        w.writerow((repr(float(t)), repr(float(s))))


def read_scale_csv(path: str):
    out = []
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or row[0].startswith("#") or row[0] == "timestamp":
                continue
            try:
                t, s = float(row[0]), float(row[1])
            except (IndexError, ValueError):
                raise ValueError(f"{path}:{lineno}: expected 'timestamp,scale'") from None
            if not s > 0:
                raise ValueError(f"{path}:{lineno}: scale must be positive")
            out.append((t, s))
    if not out:
        raise ValueError(f"{path}: empty scale history")
    return out


# ---- subcommands --------------------------------------------------------

def _overrides(items: Optional[Sequence[str]]) -> Dict[str, str]:
    out = {}
    for item in items or ():
        if "=" not in item:
            raise UsageError(f"--set expects KEY=VALUE, got {item!r}")
        k, v = item.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def _run_config(args) -> RunConfig:
    over = _overrides(args.set)
    if args.seed is not None:
        over["seed"] = str(args.seed)
    if getattr(args, "window_length", None) is not None:
        over["window_length"] = str(args.window_length)
    if getattr(args, "stride", None) is not None:
        over["stride"] = str(args.stride)
    if getattr(args, "fix_scale", False):
        over["fix_scale"] = "true"
    try:
        return load_config(args.config, over)
    except ConfigError as exc:
        raise UsageError(f"config: {exc}") from None


def cmd_calibrate(args) -> int:
    cfg = _run_config(args)
    a = parse_trajectory(args.traj_a, args.format, "A", args.rate)
    b = parse_trajectory(args.traj_b, args.format, "B", args.rate)
    samples = synchronize(a, b, cfg.sync_tolerance, cfg.interpolate)
    if cfg.drop_stationary:
        samples = drop_stationary(samples)
    windows = make_windows(samples, cfg.window_length, cfg.stride)
    if not windows:
        raise ValueError(f"only {len(samples)} synchronized pairs; a window needs "
                         f"{cfg.window_length}")
    state = run(windows, cfg.pipeline)

    record = calibration_record(state)
    record["synchronized_pairs"] = len(samples)
    record["config"] = config_to_dict(cfg)
    if args.output:
        with open(args.output, "w") as fh:
            _dump(record, fh)
    else:
        _dump(record, sys.stdout)
    if args.windows_csv:
        with open(args.windows_csv, "w") as fh:
            write_window_csv(state, fh)
    if args.scale_csv:
        with open(args.scale_csv, "w") as fh:
            write_scale_csv(state.scale_history, fh)
    return EXIT_OK


def _pose_from_list(vals, lineno: int, key: str) -> RigidTransform:
    v = np.asarray(vals, dtype=float)
    if v.shape != (7,) or not np.all(np.isfinite(v)):
        raise ValueError(f"stdin:{lineno}: {key!r} needs 7 numbers tx ty tz qx qy qz qw")
    q = np.array([v[6], v[3], v[4], v[5]])
    n = np.linalg.norm(q)
    if abs(n - 1.0) > 1e-3:
        raise ValueError(f"stdin:{lineno}: quaternion norm {n:.6g} is not unit")
    return RigidTransform(Rotation(q), v[:3])


def parse_stream_line(line: str, lineno: int) -> SyncedSample:
    try:
        d = json.loads(line)
        t = float(d["timestamp"])
        a, b = d["a"], d["b"]
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise ValueError(f"stdin:{lineno}: {exc}") from None
    return SyncedSample(t, _pose_from_list(a, lineno, "a"), _pose_from_list(b, lineno, "b"))


def cmd_stream(args) -> int:
    cfg = _run_config(args)
    cal = OnlineCalibrator(cfg.pipeline, cfg.window_length, cfg.stride)
    last_t = -np.inf
    for lineno, line in enumerate(sys.stdin, start=1):
        if not line.strip():
            continue
        sample = parse_stream_line(line, lineno)
        if not sample.timestamp > last_t:
            raise ValueError(f"stdin:{lineno}: timestamps must increase")
        last_t = sample.timestamp
        state = cal.push(sample)
        if state is None:
            continue
        h = state.window_history[-1]
        out = {"window": h.index, "t_start": h.t_start, "t_end": h.t_end,
               "window_accepted": bool(h.accepted),
               "rejection_reason": h.rejection_reason.value}
        out.update(calibration_record(state))
        sys.stdout.write(json.dumps(out, sort_keys=True) + "\n")
        sys.stdout.flush()
    return EXIT_OK


def cmd_simulate(args) -> int:
    x = SimilarityTransform(Rotation.from_euler(*args.rpy), args.translation, args.scale)
    rig = RigConfig(x, args.profile, args.duration, args.rate_hz, motion_seed=args.seed)
    noise_a = NoiseModel(args.sigma_t_a, args.sigma_r_a, args.drift_a, 0.0, seed=args.seed + 1)
    noise_b = NoiseModel(args.sigma_t, args.sigma_r, args.drift, args.scale_drift,
                         (args.jump_probability, args.jump_size), seed=args.seed + 2)
    a, b, truth = generate(rig, noise_a, noise_b)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_tum(a, out / "a.tum")
    write_tum(b, out / "b.tum")
    write_tum(truth.stream_a, out / "a_truth.tum")
    write_tum(truth.stream_b_metric, out / "b_truth_metric.tum")
    record = {"schema_version": SCHEMA_VERSION, "extrinsic": transform_to_dict(x),
              "profile": args.profile, "duration": args.duration, "rate": args.rate_hz,
              "seed": args.seed}
    with open(out / "truth.json", "w") as fh:
        _dump(record, fh)
    return EXIT_OK


def cmd_evaluate(args) -> int:
    est = parse_trajectory(args.estimate, args.format, "est", args.rate)
    ref = parse_trajectory(args.reference, args.format, "ref", args.rate)
    x = load_transform(args.calibration) if args.calibration else None
    truth = load_transform(args.truth) if args.truth else None
    report = evaluate_streams(est, ref, args.delta, x, truth, args.tolerance)
    out = {"schema_version": SCHEMA_VERSION}
    out.update(report.to_dict())
    _dump(out, sys.stdout)
    return EXIT_OK


def cmd_rescale(args) -> int:
    traj = parse_trajectory(args.trajectory, args.format, "traj", args.rate)
    history = read_scale_csv(args.scale_history)
    write_tum(rescale_trajectory(traj, history), args.output or sys.stdout)
    return EXIT_OK


# ---- argument parsing ---------------------------------------------------

def _add_common(p: argparse.ArgumentParser, config: bool = True) -> None:
    p.add_argument("--format", choices=FORMATS, default="tum", help="trajectory file format")
    p.add_argument("--rate", type=float, default=10.0,
                   help="pose rate in Hz for kitti_matrix files (implicit timestamps)")
    if config:
        p.add_argument("--config", help="flat key = value configuration file")
        p.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="override a configuration key (repeatable)")
        p.add_argument("--seed", type=int, help="RANSAC seed")
        p.add_argument("--window-length", type=int)
        p.add_argument("--stride", type=int)
        p.add_argument("--fix-scale", action="store_true", help="solve a rigid extrinsic")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="robust-handeye", description="Robust hand-eye calibration with scale.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("calibrate", help="calibrate from two trajectory files")
    p.add_argument("traj_a", help="reference sensor trajectory (metric)")
    p.add_argument("traj_b", help="second sensor trajectory (any unit)")
    _add_common(p)
    p.add_argument("-o", "--output", help="calibration JSON (default: stdout)")
    p.add_argument("--windows-csv", help="per-window estimates")
    p.add_argument("--scale-csv", help="scale history")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("stream", help="JSON-lines pose pairs on stdin, estimates on stdout")
    _add_common(p)
    p.set_defaults(func=cmd_stream)

    p = sub.add_parser("simulate", help="write a synthetic trajectory pair")
    p.add_argument("--profile", choices=PROFILES, default="rich_6dof")
    p.add_argument("--duration", type=float, default=20.0)
    p.add_argument("--rate-hz", type=float, default=10.0)
    p.add_argument("--rpy", type=float, nargs=3, default=(30.0, -20.0, 45.0),
                   metavar=("ROLL", "PITCH", "YAW"), help="extrinsic rotation in degrees")
    p.add_argument("--translation", type=float, nargs=3, default=(0.3, -0.1, 0.5))
    p.add_argument("--scale", type=float, default=1.0)
    p.add_argument("--sigma-t", type=float, default=0.0, help="B translation noise (m/step)")
    p.add_argument("--sigma-r", type=float, default=0.0, help="B rotation noise (deg/step)")
    p.add_argument("--drift", type=float, default=0.0, help="B drift rate")
    p.add_argument("--scale-drift", type=float, default=0.0)
    p.add_argument("--jump-probability", type=float, default=0.0)
    p.add_argument("--jump-size", type=float, default=1.0)
    p.add_argument("--sigma-t-a", type=float, default=0.0)
    p.add_argument("--sigma-r-a", type=float, default=0.0)
    p.add_argument("--drift-a", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("evaluate", help="ATE/RPE of a trajectory against a reference")
    p.add_argument("estimate")
    p.add_argument("reference")
    _add_common(p, config=False)
    p.add_argument("--calibration", help="calibration JSON; maps the estimate into the reference frame")
    p.add_argument("--truth", help="ground-truth extrinsic JSON for calibration errors")
    p.add_argument("--delta", type=int, default=1, help="RPE step")
    p.add_argument("--tolerance", type=float, default=0.02, help="time association tolerance")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("rescale", help="apply a scale history to a trajectory")
    p.add_argument("trajectory")
    p.add_argument("scale_history", help="CSV with timestamp,scale rows")
    _add_common(p, config=False)
    p.add_argument("-o", "--output", help="rescaled TUM file (default: stdout)")
    p.set_defaults(func=cmd_rescale)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return EXIT_OK if not exc.code else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"robust-handeye: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (TrajectoryFormatError, ValueError, OSError) as exc:
        print(f"robust-handeye: data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
