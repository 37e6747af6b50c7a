"""Trajectory and calibration error metrics (ATE, RPE)."""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Optional, Tuple

import numpy as np
from scipy.spatial.transform import Rotation as _ScipyRotation

from .geometry import (Pose, SimilarityTransform, conjugate_pose,
                       rotation_angle_between, translation_error)
from .sync import DEFAULT_TOLERANCE, PoseStream, synchronize


@dataclass(frozen=True)
class EvalReport:
    ate_rmse: float
    rpe_rmse_trans: float
    rpe_rmse_rot: float
    calib_translation_error: Optional[float] = None
    calib_rotation_error: Optional[float] = None
    scale_error: Optional[float] = None

    def __post_init__(self):
        for k, v in asdict(self).items():
            if v is not None and not v >= 0.0:
                raise ValueError(f"{k} must be non-negative, got {v}")

    def to_dict(self) -> dict:
        return asdict(self)


def _associated(est: PoseStream, ref: PoseStream, tolerance: float):
    samples = synchronize(est, ref, tolerance)
    return [s.a for s in samples], [s.b for s in samples]


def align_rigid(P: np.ndarray, Q: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Rotation and translation minimizing ``sum |R p + t - q|^2``."""
    P, Q = np.asarray(P, float), np.asarray(Q, float)
    mp, mq = P.mean(axis=0), Q.mean(axis=0)
    if np.allclose(P, mp) or np.allclose(Q, mq):
        R = np.eye(3)
    else:
        rot, _ = _ScipyRotation.align_vectors(Q - mq, P - mp)
        R = rot.as_matrix()
    return R, mq - R @ mp


def ate(est: PoseStream, ref: PoseStream, tolerance: float = DEFAULT_TOLERANCE) -> float:
    """Position RMSE after the best rigid alignment of ``est`` onto ``ref``."""
    a, b = _associated(est, ref, tolerance)
    if len(a) < 3:
        raise ValueError("ATE needs at least 3 associated poses")
    P = np.array([p.translation for p in a])
    Q = np.array([q.translation for q in b])
    R, t = align_rigid(P, Q)
    r = P @ R.T + t - Q
    return float(np.sqrt((r ** 2).sum(axis=1).mean()))


def rpe(est: PoseStream, ref: PoseStream, delta: int = 1,
        tolerance: float = DEFAULT_TOLERANCE) -> Tuple[float, float]:
    """RMSE of relative-pose errors over ``delta`` steps: (meters, degrees)."""
    if delta < 1:
        raise ValueError("delta must be positive")
    P, Q = _associated(est, ref, tolerance)
    if delta >= len(P):
        raise ValueError("delta must be smaller than the trajectory length")
    tr, rot = [], []
    for i in range(len(P) - delta):
        E = (Q[i].inverse() @ Q[i + delta]).inverse() @ (P[i].inverse() @ P[i + delta])
        tr.append(np.linalg.norm(E.translation))
        rot.append(E.rotation.angle())
    return (float(np.sqrt(np.mean(np.square(tr)))), float(np.sqrt(np.mean(np.square(rot)))))


def to_reference_frame(stream: PoseStream, x: SimilarityTransform) -> PoseStream:
    """Map a B trajectory into A's frame and units: ``X B X^-1`` per pose."""
    xi = x.inverse()
    poses = tuple(Pose(p.timestamp, conjugate_pose(xi, p.transform)) for p in stream.poses)
    return PoseStream(stream.sensor_id, poses)


def calibration_errors(est: SimilarityTransform, truth: SimilarityTransform) -> Tuple[float, float, float]:
    """(translation m, rotation deg, relative scale) errors of an extrinsic."""
    return (translation_error(est, truth),
            rotation_angle_between(est.rotation, truth.rotation),
            abs(est.scale / truth.scale - 1.0))


def evaluate(est: PoseStream, ref: PoseStream, delta: int = 1,
             estimate: Optional[SimilarityTransform] = None,
             truth: Optional[SimilarityTransform] = None,
             tolerance: float = DEFAULT_TOLERANCE) -> EvalReport:
    """Score a trajectory against a reference, and optionally an extrinsic.

    When ``estimate`` is given, ``est`` is taken to be the B trajectory and
    is first mapped into A's frame through it.
    """
    if estimate is not None:
        est = to_reference_frame(est, estimate)
    a = ate(est, ref, tolerance)
    t, r = rpe(est, ref, delta, tolerance)
    calib = (None, None, None)
    if estimate is not None and truth is not None:
        calib = calibration_errors(estimate, truth)
    return EvalReport(a, t, r, *calib)
