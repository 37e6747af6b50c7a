"""Trajectory files: TUM (read/write) and KITTI 3x4 matrices (read only).

TUM lines are ``timestamp tx ty tz qx qy qz qw``; ``#`` starts a comment.
KITTI lines hold the 12 row-major entries of ``[R | t]`` and carry no
timestamp, so line ``i`` is stamped ``i / rate``.
"""

from __future__ import annotations

import logging
from pathlib import Path
from typing import Iterable, List, TextIO, Union

import numpy as np

from .geometry import Pose, RigidTransform, Rotation
from .sync import PoseStream

log = logging.getLogger(__name__)

FORMATS = ("tum", "kitti_matrix")
QUAT_TOLERANCE = 1e-3
_SILENT_RENORM = 1e-9  # printing round-off, not worth a warning
KITTI_RATE = 10.0

PathLike = Union[str, Path]


class TrajectoryFormatError(ValueError):
    """A malformed trajectory file; the message carries the location."""


def _quaternion(xyzw: np.ndarray, where: str) -> Rotation:
    n = float(np.linalg.norm(xyzw))
    if not np.isfinite(n) or abs(n - 1.0) > QUAT_TOLERANCE:
        raise TrajectoryFormatError(f"{where}: quaternion norm {n:.6g} is not unit")
    if abs(n - 1.0) > _SILENT_RENORM:
        log.warning("%s: renormalizing quaternion with norm %.9f", where, n)
    x, y, z, w = xyzw / n
    return Rotation(np.array([w, x, y, z]))


def _numbers(line: str, count: int, where: str) -> np.ndarray:
    fields = line.split()
    if len(fields) != count:
        raise TrajectoryFormatError(f"{where}: expected {count} values, got {len(fields)}")
    try:
        vals = np.array([float(f) for f in fields])
    except ValueError as exc:
        raise TrajectoryFormatError(f"{where}: {exc}") from None
    if not np.all(np.isfinite(vals)):
        raise TrajectoryFormatError(f"{where}: non-finite value")
    return vals


def _data_lines(lines: Iterable[str]):
    for lineno, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if line:
            yield lineno, line


def read_tum(lines: Iterable[str], name: str = "<tum>", sensor_id: str = "") -> PoseStream:
    poses = []
    for lineno, line in _data_lines(lines):
        where = f"{name}:{lineno}"
        v = _numbers(line, 8, where)
        rot = _quaternion(v[4:8], where)
        try:
            pose = Pose(float(v[0]), RigidTransform(rot, v[1:4]))
        except ValueError as exc:
            raise TrajectoryFormatError(f"{where}: {exc}") from None
        poses.append(pose)
    return _sorted_stream(poses, sensor_id or name, name)


def read_kitti(lines: Iterable[str], name: str = "<kitti>", sensor_id: str = "",
               rate: float = KITTI_RATE) -> PoseStream:
    if not rate > 0:
        raise ValueError("rate must be positive")
    poses = []
    for lineno, line in _data_lines(lines):
        where = f"{name}:{lineno}"
        M = _numbers(line, 12, where).reshape(3, 4)
        R = M[:, :3]
        if np.abs(R.T @ R - np.eye(3)).max() > QUAT_TOLERANCE or np.linalg.det(R) < 0:
            raise TrajectoryFormatError(f"{where}: rotation block is not orthonormal")
        poses.append(Pose(len(poses) / rate, RigidTransform(Rotation.from_matrix(R), M[:, 3])))
    return PoseStream(sensor_id or name, tuple(poses))


def _sorted_stream(poses: List[Pose], sensor_id: str, name: str) -> PoseStream:
    poses = sorted(poses, key=lambda p: p.timestamp)
    for a, b in zip(poses, poses[1:]):
        if a.timestamp == b.timestamp:
            raise TrajectoryFormatError(f"{name}: duplicate timestamp {a.timestamp!r}")
    return PoseStream(sensor_id, tuple(poses))


def parse_trajectory(path: PathLike, fmt: str = "tum", sensor_id: str = "",
                     rate: float = KITTI_RATE) -> PoseStream:
    """Read a trajectory file into a time-sorted stream."""
    if fmt not in FORMATS:
        raise ValueError(f"unknown trajectory format {fmt!r}")
    path = Path(path)
    with path.open() as fh:
        lines = fh.readlines()
    if fmt == "tum":
        return read_tum(lines, str(path), sensor_id)
    return read_kitti(lines, str(path), sensor_id, rate)


def format_tum(stream: PoseStream) -> str:
    out = []
    for p in stream.poses:
        w, x, y, z = p.transform.rotation.quat
        t = p.transform.translation
        vals = (p.timestamp, t[0], t[1], t[2], x, y, z, w)
        out.append(" ".join(repr(float(v)) for v in vals))
    return "\n".join(out) + ("\n" if out else "")


def write_tum(stream: PoseStream, dest: Union[PathLike, TextIO], header: str = "") -> None:
    text = format_tum(stream)
    if header:
        text = "".join(f"# {h}\n" for h in header.splitlines()) + text
    if hasattr(dest, "write"):
        dest.write(text)
    else:
        Path(dest).write_text(text)
