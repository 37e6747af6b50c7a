"""Time association of two pose streams and origin-rebased windows."""

from __future__ import annotations

import bisect
from dataclasses import dataclass, field
from typing import List, Sequence

import numpy as np
from scipy.spatial.transform import Rotation as _ScipyRotation, Slerp

from .geometry import Pose, RigidTransform, Rotation

DEFAULT_TOLERANCE = 0.02
DEFAULT_WINDOW_LENGTH = 50
DEFAULT_STRIDE = 10
STATIONARY_TRANSLATION = 1e-3
STATIONARY_ROTATION_DEG = 0.01


@dataclass(frozen=True)
class PoseStream:
    sensor_id: str
    poses: tuple

    def __post_init__(self):
        poses = tuple(self.poses)
        ts = [p.timestamp for p in poses]
        if any(b <= a for a, b in zip(ts, ts[1:])):
            raise ValueError(f"stream {self.sensor_id!r}: timestamps must be strictly increasing")
        object.__setattr__(self, "poses", poses)

    def __len__(self) -> int:
        return len(self.poses)

    @property
    def timestamps(self) -> np.ndarray:
        return np.array([p.timestamp for p in self.poses])

    def positions(self) -> np.ndarray:
        return np.array([p.transform.translation for p in self.poses]).reshape(-1, 3)


@dataclass(frozen=True)
class PoseSet:
    """Poses rebased so that the first one is the identity.

    ``origin`` is the raw pose at the start of the set; the raw pose ``k`` is
    ``origin @ poses[k]``.
    """

    poses: tuple
    timestamps: np.ndarray
    origin: RigidTransform = field(default_factory=RigidTransform.identity)

    def __len__(self) -> int:
        return len(self.poses)

    def raw(self) -> List[RigidTransform]:
        return [self.origin @ p for p in self.poses]

    def matrices(self) -> np.ndarray:
        """``(N, 4, 4)`` stack of the rebased poses."""
        return np.array([p.as_matrix() for p in self.poses]).reshape(-1, 4, 4)


@dataclass(frozen=True)
class SyncedPair:
    """Two equally long, time-aligned pose sets (one calibration window)."""

    set_a: PoseSet
    set_b: PoseSet
    max_time_residual: float = 0.0

    def __post_init__(self):
        if len(self.set_a) != len(self.set_b):
            raise ValueError("pose sets differ in length")

    def __len__(self) -> int:
        return len(self.set_a)

    @property
    def t_start(self) -> float:
        return float(self.set_a.timestamps[0])

    @property
    def t_end(self) -> float:
        return float(self.set_a.timestamps[-1])


@dataclass(frozen=True)
class SyncedSample:
    """One associated pose pair in raw (un-rebased) sensor frames."""

    timestamp: float
    a: RigidTransform
    b: RigidTransform
    residual: float = 0.0


def _interpolate(p0: Pose, p1: Pose, t: float) -> RigidTransform:
    u = (t - p0.timestamp) / (p1.timestamp - p0.timestamp)
    rots = _ScipyRotation.from_quat(
        [p0.transform.rotation.quat, p1.transform.rotation.quat], scalar_first=True)
    q = Slerp([0.0, 1.0], rots)([u]).as_quat(scalar_first=True)[0]
    tr = (1.0 - u) * p0.transform.translation + u * p1.transform.translation
    return RigidTransform(Rotation(q), tr)


def _associate(query: Sequence[Pose], target: Sequence[Pose], tolerance: float,
               interpolate: bool, max_gap: float):
    """For each query pose find the matching target transform and residual."""
    times = [p.timestamp for p in target]
    out = []
    for q in query:
        t = q.timestamp
        j = bisect.bisect_left(times, t)
        if j < len(times) and times[j] == t:
            out.append((q, target[j].transform, 0.0))
            continue
        if interpolate and 0 < j < len(times) and times[j] - times[j - 1] <= max_gap:
            out.append((q, _interpolate(target[j - 1], target[j], t), 0.0))
            continue
        cands = [k for k in (j - 1, j) if 0 <= k < len(times)]
        k = min(cands, key=lambda k: abs(times[k] - t))
        dt = abs(times[k] - t)
        if dt <= tolerance:
            out.append((q, target[k].transform, dt))
    return out


def synchronize(a: PoseStream, b: PoseStream, tolerance: float = DEFAULT_TOLERANCE,
                interpolate: bool = False, max_gap: float = 0.2) -> List[SyncedSample]:
    """Pair the two streams in time.

    Every pose of the sparser stream (within the common time span) is paired
    with the nearest pose of the denser one, or with a SLERP/linear
    interpolation of its bracketing poses when ``interpolate`` is set and the
    bracket is no wider than ``max_gap``.  Pairs further apart than
    ``tolerance`` are dropped.

    Raises ``ValueError("no temporal overlap")`` when the time spans of the
    two streams are disjoint.
    """
    if len(a) == 0 or len(b) == 0:
        raise ValueError("no temporal overlap")
    lo = max(a.poses[0].timestamp, b.poses[0].timestamp) - tolerance
    hi = min(a.poses[-1].timestamp, b.poses[-1].timestamp) + tolerance
    if lo > hi:
        raise ValueError("no temporal overlap")

    in_a = [p for p in a.poses if lo <= p.timestamp <= hi]
    in_b = [p for p in b.poses if lo <= p.timestamp <= hi]
    if len(in_a) <= len(in_b):
        matched = _associate(in_a, b.poses, tolerance, interpolate, max_gap)
        return [SyncedSample(q.timestamp, q.transform, tb, dt) for q, tb, dt in matched]
    matched = _associate(in_b, a.poses, tolerance, interpolate, max_gap)
    return [SyncedSample(q.timestamp, ta, q.transform, dt) for q, ta, dt in matched]


def rebase(window: Sequence[Pose]) -> PoseSet:
    """Express every pose of the window relative to its first pose."""
    if len(window) == 0:
        raise ValueError("empty window")
    origin = window[0].transform
    o_inv = origin.inverse()
    poses = [RigidTransform.identity()] + [o_inv @ p.transform for p in window[1:]]
    return PoseSet(tuple(poses), np.array([p.timestamp for p in window]), origin)


def to_pair(samples: Sequence[SyncedSample]) -> SyncedPair:
    """Rebase a run of synchronized samples into one window."""
    set_a = rebase([Pose(s.timestamp, s.a) for s in samples])
    set_b = rebase([Pose(s.timestamp, s.b) for s in samples])
    return SyncedPair(set_a, set_b, max((s.residual for s in samples), default=0.0))


def drop_stationary(samples: Sequence[SyncedSample],
                    min_translation: float = STATIONARY_TRANSLATION,
                    min_rotation_deg: float = STATIONARY_ROTATION_DEG) -> List[SyncedSample]:
    """Drop samples where neither sensor moved since the last kept sample."""
    if not samples:
        return []
    kept = [samples[0]]
    for s in samples[1:]:
        ref = kept[-1]
        moved = False
        for prev, cur in ((ref.a, s.a), (ref.b, s.b)):
            d = prev.inverse() @ cur
            if (np.linalg.norm(d.translation) >= min_translation
                    or d.rotation.angle() >= min_rotation_deg):
                moved = True
                break
        if moved:
            kept.append(s)
    return kept


def make_windows(pairs: Sequence[SyncedSample], window_length: int = DEFAULT_WINDOW_LENGTH,
                 stride: int = DEFAULT_STRIDE) -> List[SyncedPair]:
    """Cut overlapping windows, each rebased on its own first sample.

    Produces ``(N - window_length) // stride + 1`` windows, or none when
    fewer than ``window_length`` samples are available.
    """
    if window_length < 2:
        raise ValueError("window_length must be at least 2")
    if not 1 <= stride <= window_length:
        raise ValueError("stride must be in [1, window_length]")
    n = len(pairs)
    if n < window_length:
        return []
    return [to_pair(pairs[i:i + window_length])
            for i in range(0, n - window_length + 1, stride)]


def pair_to_samples(pair: SyncedPair) -> List[SyncedSample]:
    """Recover raw samples from a window (inverse of :func:`to_pair`)."""
    ra, rb = pair.set_a.raw(), pair.set_b.raw()
    return [SyncedSample(float(t), a, b) for t, a, b in zip(pair.set_a.timestamps, ra, rb)]
