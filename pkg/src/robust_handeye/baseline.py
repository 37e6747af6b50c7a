"""Closed-form dual-quaternion hand-eye solver (Daniilidis, 1999).

Rigid only: the scale is fixed at one.  Used as the comparison method.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import RigidTransform, Rotation, quat_multiply, skew
from .sync import SyncedPair


class DegenerateMotionError(ValueError):
    pass


@dataclass(frozen=True)
class DualQuaternion:
    real: np.ndarray
    dual: np.ndarray

    @classmethod
    def from_transform(cls, T: RigidTransform) -> "DualQuaternion":
        q = T.rotation.quat
        d = 0.5 * quat_multiply(np.concatenate([[0.0], T.translation]), q)
        return cls(np.array(q), d)

    def to_transform(self) -> RigidTransform:
        n = np.linalg.norm(self.real)
        q, d = self.real / n, self.dual / n
        conj = q * np.array([1.0, -1.0, -1.0, -1.0])
        t = 2.0 * quat_multiply(d, conj)[1:]
        return RigidTransform(Rotation(q), t)

    def __mul__(self, other: "DualQuaternion") -> "DualQuaternion":
        return DualQuaternion(
            quat_multiply(self.real, other.real),
            quat_multiply(self.real, other.dual) + quat_multiply(self.dual, other.real))

    def is_unit(self, tol: float = 1e-9) -> bool:
        return (abs(np.linalg.norm(self.real) - 1.0) < tol
                and abs(float(self.real @ self.dual)) < tol)


def _motion_rows(a: DualQuaternion, b: DualQuaternion) -> np.ndarray:
    """6x8 block of ``a q - q b = 0`` acting on ``(q_real, q_dual)``."""
    if a.real[0] * b.real[0] < 0.0:
        b = DualQuaternion(-b.real, -b.dual)
    ar, br, ad, bd = a.real[1:], b.real[1:], a.dual[1:], b.dual[1:]
    S = np.zeros((6, 8))
    S[:3, 0] = ar - br
    S[:3, 1:4] = skew(ar + br)
    S[3:, 0] = ad - bd
    S[3:, 1:4] = skew(ad + bd)
    S[3:, 4] = ar - br
    S[3:, 5:8] = skew(ar + br)
    return S


def _solve_quadratic(a: float, b: float, c: float):
    disc = max(b * b - 4.0 * a * c, 0.0)
    r = np.sqrt(disc)
    return (-b + r) / (2.0 * a), (-b - r) / (2.0 * a)


def solve_dual_quaternion(pair: SyncedPair, null_tol: float = 1e-6) -> RigidTransform:
    """Solve ``A X = X B`` for a rigid ``X`` from consecutive relative motions.

    Raises :class:`DegenerateMotionError` when the constraint matrix does not
    have a two-dimensional null space (e.g. rotation about a single axis).
    """
    A = pair.set_a.poses
    B = pair.set_b.poses
    if len(A) < 3:
        raise DegenerateMotionError("degenerate motion for closed form")
    rows = []
    for k in range(len(A) - 1):
        a = DualQuaternion.from_transform(A[k].inverse() @ A[k + 1])
        b = DualQuaternion.from_transform(B[k].inverse() @ B[k + 1])
        rows.append(_motion_rows(a, b))
    T = np.vstack(rows)

    _, sv, Vt = np.linalg.svd(T)
    if len(sv) < 8 or sv[0] == 0.0 or sv[5] < null_tol * sv[0]:
        raise DegenerateMotionError("degenerate motion for closed form")

    v7, v8 = Vt[6], Vt[7]
    u1, w1 = v7[:4], v7[4:]
    u2, w2 = v8[:4], v8[4:]

    # Orthogonality real.dual = 0 as a quadratic in the ratio of the weights.
    a = float(u1 @ w1)
    b = float(u1 @ w2 + u2 @ w1)
    c = float(u2 @ w2)
    norm = lambda l1, l2: float(np.linalg.norm(l1 * u1 + l2 * u2) ** 2)
    if abs(a) >= abs(c):
        # l1 = m * l2
        roots = _solve_quadratic(a, b, c) if abs(a) > 1e-300 else (0.0, 0.0)
        cands = [(m, 1.0) for m in roots]
    else:
        # l2 = m * l1
        roots = _solve_quadratic(c, b, a)
        cands = [(1.0, m) for m in roots]
    l1, l2 = max(cands, key=lambda p: norm(*p))
    k = 1.0 / np.sqrt(norm(l1, l2))
    q = k * (l1 * v7 + l2 * v8)
    return DualQuaternion(q[:4], q[4:]).to_transform()
