"""Synthetic two-sensor rig with odometry-like noise.

Sensor A follows a smooth motion profile.  Sensor B is rigidly attached
through a similarity extrinsic ``X`` and reports ``B = X^-1 A X`` (so its
translations are in A units divided by the scale).  Noise is applied to the
relative pose increments of each stream and re-accumulated, so it compounds
like visual odometry drift.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .geometry import (Pose, RigidTransform, Rotation, SimilarityTransform,
                       conjugate_pose, so3_exp)
from .sync import PoseStream

PROFILES = ("rich_6dof", "planar_vehicle", "straight_line", "stationary", "handheld")


@dataclass(frozen=True)
class RigConfig:
    true_extrinsic: SimilarityTransform = field(default_factory=SimilarityTransform.identity)
    motion_profile: str = "rich_6dof"
    duration: float = 20.0
    rate: float = 10.0
    motion_seed: int = 0

    def __post_init__(self):
        if self.motion_profile not in PROFILES:
            raise ValueError(f"unknown motion profile {self.motion_profile!r}")
        if not (self.rate > 0 and self.duration > 0):
            raise ValueError("rate and duration must be positive")

    @property
    def timestamps(self) -> np.ndarray:
        n = int(round(self.duration * self.rate))
        return np.arange(n) / self.rate


@dataclass(frozen=True)
class NoiseModel:
    """Per-stream noise.

    Lengths are in meters.  ``translation_sigma`` and ``rotation_sigma`` (degrees) act
    on every pose increment.  ``drift_rate`` is the standard deviation, in
    m/s after one second, of a random-walk velocity bias integrated into the
    positions.  ``scale_drift`` makes the stream's unit shrink as
    ``exp(-scale_drift * t)``, so the recovered scale grows as
    ``exp(scale_drift * t)``.  ``discontinuity`` is ``(probability per
    window of window_length poses, jump magnitude in meters)``.
    """

    translation_sigma: float = 0.0
    rotation_sigma: float = 0.0
    drift_rate: float = 0.0
    scale_drift: float = 0.0
    discontinuity: Tuple[float, float] = (0.0, 0.0)
    window_length: int = 50
    seed: int = 0

    def __post_init__(self):
        values = (self.translation_sigma, self.rotation_sigma, self.drift_rate,
                  self.scale_drift, *self.discontinuity)
        if any(v < 0 for v in values):
            raise ValueError("noise parameters must be non-negative")

    @property
    def is_zero(self) -> bool:
        return (self.translation_sigma == 0 and self.rotation_sigma == 0
                and self.drift_rate == 0 and self.scale_drift == 0
                and self.discontinuity[0] == 0)


@dataclass(frozen=True)
class GroundTruth:
    extrinsic: SimilarityTransform
    stream_a: PoseStream
    stream_b: PoseStream
    # B expressed in metric (A) units, i.e. what B would report at scale 1.
    stream_b_metric: PoseStream


def _rich(t: np.ndarray, rng: np.random.Generator, handheld: bool = False):
    ph = rng.uniform(0, 2 * np.pi, size=6)
    if handheld:
        roll = 15 * (np.sin(1.1 * t + ph[0]) + 0.4 * np.sin(2.3 * t + ph[3]))
        pitch = 12 * (np.sin(0.8 * t + ph[1]) + 0.4 * np.sin(1.9 * t + ph[4]))
        yaw = 25 * np.sin(0.6 * t + ph[2])
        pos = np.stack([0.4 * np.sin(0.5 * t + ph[3]) + 0.1 * np.sin(1.7 * t),
                        0.3 * np.sin(0.6 * t + ph[4]) + 0.1 * np.cos(1.3 * t),
                        0.2 * np.sin(0.8 * t + ph[5])], axis=1)
    else:
        roll = 25 * np.sin(0.9 * t + ph[0])
        pitch = 20 * np.sin(1.1 * t + ph[1])
        yaw = 40 * np.sin(0.7 * t + ph[2])
        pos = np.stack([2.0 * np.sin(0.9 * t + ph[3]),
                        1.5 * np.sin(1.1 * t + ph[4]),
                        1.0 * np.sin(1.3 * t + ph[5])], axis=1)
    rots = [Rotation.from_euler(r, p, y) for r, p, y in zip(roll, pitch, yaw)]
    return rots, pos


def _planar_yaw_rate(t: np.ndarray) -> np.ndarray:
    # Left and right turns separated by straight stretches.  The rate is
    # modulated so no window is a pure constant-rate circle: on a circle the
    # turn centre is stationary and the scale becomes unobservable.
    s = np.sin(2 * np.pi * t / 30.0)
    envelope = np.sign(s) * np.clip(2.0 * np.abs(s) - 0.5, 0.0, None) / 1.5
    return 0.56 * envelope * (1.0 + 0.4 * np.sin(2 * np.pi * t / 3.7))


def _planar(t: np.ndarray, rng: np.random.Generator, speed: float = 1.0):
    # Integrate heading and position on a fine grid.
    fine = np.linspace(0.0, t[-1] if len(t) else 0.0, max(10 * len(t), 2))
    heading0 = rng.uniform(-np.pi, np.pi)
    w = _planar_yaw_rate(fine)
    dt = np.diff(fine)
    heading = heading0 + np.concatenate([[0.0], np.cumsum(0.5 * (w[1:] + w[:-1]) * dt)])
    vx, vy = speed * np.cos(heading), speed * np.sin(heading)
    x = np.concatenate([[0.0], np.cumsum(0.5 * (vx[1:] + vx[:-1]) * dt)])
    y = np.concatenate([[0.0], np.cumsum(0.5 * (vy[1:] + vy[:-1]) * dt)])
    h = np.interp(t, fine, heading)
    pos = np.stack([np.interp(t, fine, x), np.interp(t, fine, y), np.zeros_like(t)], axis=1)
    rots = [Rotation(np.array([np.cos(a / 2), 0.0, 0.0, np.sin(a / 2)])) for a in h]
    return rots, pos


def motion(rig: RigConfig) -> List[RigidTransform]:
    """Noiseless world poses of sensor A."""
    t = rig.timestamps
    rng = np.random.default_rng(rig.motion_seed)
    if rig.motion_profile == "rich_6dof":
        rots, pos = _rich(t, rng)
    elif rig.motion_profile == "handheld":
        rots, pos = _rich(t, rng, handheld=True)
    elif rig.motion_profile == "planar_vehicle":
        rots, pos = _planar(t, rng)
    elif rig.motion_profile == "straight_line":
        rots = [Rotation.identity()] * len(t)
        pos = np.stack([t, np.zeros_like(t), np.zeros_like(t)], axis=1)
    else:
        rots = [Rotation.identity()] * len(t)
        pos = np.zeros((len(t), 3))
    return [RigidTransform(r, p) for r, p in zip(rots, pos)]


def _stream(sensor_id: str, times: Sequence[float], poses: Sequence[RigidTransform]) -> PoseStream:
    return PoseStream(sensor_id, tuple(Pose(float(t), p) for t, p in zip(times, poses)))


def apply_noise(poses: Sequence[RigidTransform], times: np.ndarray,
                noise: NoiseModel, unit: float = 1.0) -> List[RigidTransform]:
    """Perturb pose increments and re-accumulate them.

    ``unit`` is the length of one stream unit in meters; metric noise
    magnitudes are divided by it.
    """
    if noise.is_zero or len(poses) == 0:
        return list(poses)
    rng = np.random.default_rng(noise.seed)
    p_jump = noise.discontinuity[0] / max(noise.window_length, 1)
    sig_r = np.radians(noise.rotation_sigma)

    out = [poses[0]]
    bias = np.zeros(3)
    offset = np.zeros(3)
    cur = poses[0]
    for k in range(1, len(poses)):
        dt = float(times[k] - times[k - 1])
        inc = poses[k - 1].inverse() @ poses[k]
        R = inc.rotation.as_matrix() @ so3_exp(rng.normal(0.0, sig_r, 3))
        tr = inc.translation + rng.normal(0.0, noise.translation_sigma / unit, 3)
        tr = tr * np.exp(-noise.scale_drift * 0.5 * (times[k] + times[k - 1]))
        cur = cur @ RigidTransform(Rotation.from_matrix(R), tr)
        if noise.drift_rate > 0.0:
            bias = bias + rng.normal(0.0, noise.drift_rate / unit * np.sqrt(dt), 3)
            offset = offset + bias * dt
        if p_jump > 0.0 and rng.random() < p_jump:
            direction = rng.normal(size=3)
            jump = RigidTransform(Rotation.identity(),
                                  noise.discontinuity[1] / unit * direction / np.linalg.norm(direction))
            cur = jump @ cur
        out.append(RigidTransform(cur.rotation, cur.translation + offset))
    return out


def generate(rig: RigConfig, noise_a: NoiseModel = NoiseModel(),
             noise_b: NoiseModel = NoiseModel()) -> Tuple[PoseStream, PoseStream, GroundTruth]:
    """Simulate both sensor streams and return them with the ground truth."""
    times = rig.timestamps
    a_true = motion(rig)
    x = rig.true_extrinsic
    b_true = [conjugate_pose(x, a) for a in a_true]
    x_metric = replace(x, scale=1.0)
    b_metric = [conjugate_pose(x_metric, a) for a in a_true]

    a_noisy = apply_noise(a_true, times, noise_a)
    b_noisy = apply_noise(b_true, times, noise_b, unit=x.scale)
    truth = GroundTruth(x, _stream("A", times, a_true), _stream("B", times, b_true),
                        _stream("B", times, b_metric))
    return _stream("A", times, a_noisy), _stream("B", times, b_noisy), truth


def inject_discontinuity(stream: PoseStream, at: float, jump: RigidTransform) -> PoseStream:
    """Left-multiply every pose strictly after ``at`` by ``jump``."""
    if len(stream) and not (stream.poses[0].timestamp <= at <= stream.poses[-1].timestamp):
        raise ValueError("discontinuity time outside the stream")
    poses = tuple(Pose(p.timestamp, jump @ p.transform) if p.timestamp > at else p
                  for p in stream.poses)
    return PoseStream(stream.sensor_id, poses)
