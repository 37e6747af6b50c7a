"""Rotation, rigid and similarity transform algebra.

Conventions
-----------
Quaternions are stored scalar-first ``(w, x, y, z)`` and always unit norm.

A :class:`SimilarityTransform` with rotation ``R``, translation ``t`` and
scale ``s`` has the homogeneous matrix::

    X = [[s R, t],
         [0,   1]]

``t`` is expressed in the units of the reference sensor (sensor A).  The
hand-eye relation ``A X = X B`` then maps a pose ``B`` reported in the
second sensor's units into the first sensor's frame via ``X B X^-1``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np
from scipy.spatial.transform import Rotation as _ScipyRotation


def _frozen(a) -> np.ndarray:
    arr = np.array(a, dtype=float)
    arr.setflags(write=False)
    return arr


def skew(v: np.ndarray) -> np.ndarray:
    """Cross-product matrix ``[v]x``."""
    return np.array([
        [0.0, -v[2], v[1]],
        [v[2], 0.0, -v[0]],
        [-v[1], v[0], 0.0],
    ])


def so3_exp(rotvec: np.ndarray) -> np.ndarray:
    """Rodrigues' formula, with a second-order expansion near zero."""
    rotvec = np.asarray(rotvec, dtype=float)
    theta = float(np.linalg.norm(rotvec))
    K = skew(rotvec)
    if theta < 1e-8:
        return np.eye(3) + K + 0.5 * K @ K
    return (np.eye(3) + (np.sin(theta) / theta) * K
            + ((1.0 - np.cos(theta)) / theta**2) * K @ K)


def quat_multiply(p: np.ndarray, q: np.ndarray) -> np.ndarray:
    pw, px, py, pz = p
    qw, qx, qy, qz = q
    return np.array([
        pw * qw - px * qx - py * qy - pz * qz,
        pw * qx + px * qw + py * qz - pz * qy,
        pw * qy - px * qz + py * qw + pz * qx,
        pw * qz + px * qy - py * qx + pz * qw,
    ])


@dataclass(frozen=True, eq=False)
class Rotation:
    """A 3D rotation stored as a unit quaternion ``(w, x, y, z)``."""

    quat: np.ndarray

    def __post_init__(self):
        q = np.asarray(self.quat, dtype=float).reshape(4)
        n = np.linalg.norm(q)
        if not np.isfinite(n) or n == 0.0:
            raise ValueError("quaternion must be finite and non-zero")
        object.__setattr__(self, "quat", _frozen(q / n))

    @classmethod
    def identity(cls) -> "Rotation":
        return cls(np.array([1.0, 0.0, 0.0, 0.0]))

    @classmethod
    def from_matrix(cls, R: np.ndarray) -> "Rotation":
        return cls(_ScipyRotation.from_matrix(R).as_quat(scalar_first=True))

    @classmethod
    def from_rotvec(cls, rotvec) -> "Rotation":
        return cls(_ScipyRotation.from_rotvec(rotvec).as_quat(scalar_first=True))

    @classmethod
    def from_euler(cls, roll: float, pitch: float, yaw: float,
                   degrees: bool = True) -> "Rotation":
        """Intrinsic yaw-pitch-roll, i.e. ``R = Rz(yaw) Ry(pitch) Rx(roll)``."""
        r = _ScipyRotation.from_euler("ZYX", [yaw, pitch, roll], degrees=degrees)
        return cls(r.as_quat(scalar_first=True))

    def as_matrix(self) -> np.ndarray:
        w, x, y, z = self.quat
        return np.array([
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ])

    def as_rotvec(self) -> np.ndarray:
        return _ScipyRotation.from_quat(self.quat, scalar_first=True).as_rotvec()

    def as_euler(self, degrees: bool = True) -> np.ndarray:
        """Return ``(roll, pitch, yaw)``, inverse of :meth:`from_euler`."""
        r = _ScipyRotation.from_quat(self.quat, scalar_first=True)
        yaw, pitch, roll = r.as_euler("ZYX", degrees=degrees)
        return np.array([roll, pitch, yaw])

    def angle(self) -> float:
        """Rotation magnitude in degrees, in ``[0, 180]``."""
        w = min(1.0, abs(float(self.quat[0])))
        v = float(np.linalg.norm(self.quat[1:]))
        return float(np.degrees(2.0 * np.arctan2(v, w)))

    def inverse(self) -> "Rotation":
        return Rotation(self.quat * np.array([1.0, -1.0, -1.0, -1.0]))

    def __mul__(self, other: "Rotation") -> "Rotation":
        return Rotation(quat_multiply(self.quat, other.quat))

    def apply(self, v) -> np.ndarray:
        return np.asarray(v, dtype=float) @ self.as_matrix().T

    def __eq__(self, other) -> bool:
        if not isinstance(other, Rotation):
            return NotImplemented
        return abs(float(np.dot(self.quat, other.quat))) >= 1.0 - 1e-15

    def isclose(self, other: "Rotation", atol_deg: float = 1e-9) -> bool:
        return rotation_angle_between(self, other) <= atol_deg

    def __repr__(self) -> str:
        return f"Rotation(wxyz={np.array2string(self.quat, precision=6)})"


@dataclass(frozen=True, eq=False)
class RigidTransform:
    """Rotation plus translation; homogeneous form ``[[R, t], [0, 1]]``."""

    rotation: Rotation
    translation: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.translation, dtype=float).reshape(3)
        object.__setattr__(self, "translation", _frozen(t))

    @classmethod
    def identity(cls) -> "RigidTransform":
        return cls(Rotation.identity(), np.zeros(3))

    @classmethod
    def from_matrix(cls, M: np.ndarray) -> "RigidTransform":
        M = np.asarray(M, dtype=float)
        return cls(Rotation.from_matrix(M[:3, :3]), M[:3, 3])

    @property
    def scale(self) -> float:
        return 1.0

    def as_matrix(self) -> np.ndarray:
        M = np.eye(4)
        M[:3, :3] = self.rotation.as_matrix()
        M[:3, 3] = self.translation
        return M

    def inverse(self) -> "RigidTransform":
        r_inv = self.rotation.inverse()
        return RigidTransform(r_inv, -r_inv.apply(self.translation))

    def __matmul__(self, other: "RigidTransform") -> "RigidTransform":
        return RigidTransform(self.rotation * other.rotation,
                              self.rotation.apply(other.translation) + self.translation)

    def __repr__(self) -> str:
        return (f"RigidTransform(wxyz={np.array2string(self.rotation.quat, precision=6)}, "
                f"t={np.array2string(self.translation, precision=6)})")


@dataclass(frozen=True, eq=False)
class SimilarityTransform:
    """Rotation, translation and positive uniform scale.

    ``as_matrix`` gives ``[[s R, t], [0, 1]]`` with ``t`` in the reference
    sensor's units.
    """

    rotation: Rotation
    translation: np.ndarray
    scale: float = 1.0

    def __post_init__(self):
        t = np.asarray(self.translation, dtype=float).reshape(3)
        object.__setattr__(self, "translation", _frozen(t))
        s = float(self.scale)
        if not (s > 0.0 and np.isfinite(s)):
            raise ValueError(f"scale must be positive and finite, got {s}")
        object.__setattr__(self, "scale", s)

    @classmethod
    def identity(cls) -> "SimilarityTransform":
        return cls(Rotation.identity(), np.zeros(3), 1.0)

    @classmethod
    def from_rigid(cls, T: RigidTransform, scale: float = 1.0) -> "SimilarityTransform":
        return cls(T.rotation, T.translation, scale)

    @classmethod
    def from_matrix(cls, M: np.ndarray) -> "SimilarityTransform":
        M = np.asarray(M, dtype=float)
        sR = M[:3, :3]
        s = float(np.cbrt(np.linalg.det(sR)))
        if not s > 0.0:
            raise ValueError("matrix does not hold a positive-scale similarity")
        return cls(Rotation.from_matrix(sR / s), M[:3, 3], s)

    def as_matrix(self) -> np.ndarray:
        M = np.eye(4)
        M[:3, :3] = self.scale * self.rotation.as_matrix()
        M[:3, 3] = self.translation
        return M

    def rigid(self) -> RigidTransform:
        return RigidTransform(self.rotation, self.translation)

    def inverse(self) -> "SimilarityTransform":
        r_inv = self.rotation.inverse()
        return SimilarityTransform(r_inv, -r_inv.apply(self.translation) / self.scale,
                                   1.0 / self.scale)

    def __matmul__(self, other):
        return compose(self, other)

    def __repr__(self) -> str:
        return (f"SimilarityTransform(wxyz={np.array2string(self.rotation.quat, precision=6)}, "
                f"t={np.array2string(self.translation, precision=6)}, s={self.scale:.6g})")


Transform = Union[RigidTransform, SimilarityTransform]


@dataclass(frozen=True)
class Pose:
    """A timestamped rigid transform sample from one sensor."""

    timestamp: float
    transform: RigidTransform

    def __post_init__(self):
        t = float(self.timestamp)
        if not np.isfinite(t) or t < 0.0:
            raise ValueError(f"timestamp must be finite and non-negative, got {t}")
        object.__setattr__(self, "timestamp", t)


def compose(a: Transform, b: Transform) -> Transform:
    """Matrix product ``a @ b`` mapped back to the type of ``a``.

    Composing two similarity transforms multiplies their scales.
    """
    M = a.as_matrix() @ b.as_matrix()
    if isinstance(a, SimilarityTransform) or isinstance(b, SimilarityTransform):
        s = a.scale * b.scale
        R = M[:3, :3] / s
        return SimilarityTransform(Rotation.from_matrix(R), M[:3, 3], s)
    return RigidTransform(a.rotation * b.rotation, M[:3, 3])


def inverse(a: Transform) -> Transform:
    return a.inverse()


def conjugate_pose(x: SimilarityTransform, a: RigidTransform) -> RigidTransform:
    """Return ``X^-1 A X``: the pose ``a`` seen through the extrinsic ``x``.

    The result is rigid: the scale cancels in the rotation and divides the
    translation.
    """
    R = x.rotation.as_matrix()
    RA = a.rotation.as_matrix()
    rot = x.rotation.inverse() * a.rotation * x.rotation
    t = R.T @ (RA @ x.translation + a.translation - x.translation) / x.scale
    return RigidTransform(rot, t)


def rotation_angle_between(a: Rotation, b: Rotation) -> float:
    """Geodesic angle between two rotations in degrees, in ``[0, 180]``."""
    d = min(1.0, abs(float(np.dot(a.quat, b.quat))))
    # arccos loses precision near 1; use the sine of the half angle instead.
    rel = quat_multiply(a.inverse().quat, b.quat)
    s = float(np.linalg.norm(rel[1:]))
    return float(np.degrees(2.0 * np.arctan2(s, d)))


def average_rotations(rs: Sequence[Rotation]) -> Rotation:
    """Chordal quaternion mean.

    All quaternions are flipped into the hemisphere of the first, averaged
    componentwise and renormalized.
    """
    if len(rs) == 0:
        raise ValueError("no rotations")
    Q = np.array([r.quat for r in rs])
    signs = np.where(Q @ Q[0] < 0.0, -1.0, 1.0)
    mean = (Q * signs[:, None]).sum(axis=0)
    return Rotation(mean)


def translation_error(a: Transform, b: Transform) -> float:
    return float(np.linalg.norm(np.asarray(a.translation) - np.asarray(b.translation)))
