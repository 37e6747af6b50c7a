"""Scaled hand-eye calibration by Levenberg-Marquardt.

The unknown is a similarity transform ``X = [[s R, t], [0, 1]]``.  For every
synchronized, origin-rebased pose pair ``(A_k, B_k)`` the residual is the top
3x4 block of ``A_k X - X B_k`` (the bottom row is identically zero)::

    rotation block:    s (R_A R - R R_B)
    translation part:  (R_A - I) t + t_A - s R t_B

The reported window cost is the sum of the per-pair Frobenius norms, plus
``alpha * | |t| - d |`` when a measured sensor distance ``d`` is supplied.
LM minimizes the sum of squared residual entries (with the distance term as
one extra residual ``sqrt(alpha) * | |t| - d |``), which shares its zero set
and minimizer with the cost on consistent data.

Parameters are updated on the manifold: ``R <- R exp([dtheta]x)``,
``t <- t + dt`` and ``s <- s exp(dsigma)``, so the scale stays positive.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple, Union

import numpy as np

from .geometry import Rotation, SimilarityTransform, skew, so3_exp
from .sync import SyncedPair

_GENERATORS = np.array([skew(e) for e in np.eye(3)])
_SMOOTH_EPS = 1e-12
_COST_FLOOR = 1e-28
_MAX_LOG_STEP = 10.0
# Scale drifting this far (log ratio) from the initial guess is treated as a
# collapse onto the degenerate s -> 0 family, which makes A X - X B vanish
# whenever the motion has a stationary point (e.g. constant-rate turning).
_SCALE_RUNAWAY = np.log(1e3)

Pairs = Union[SyncedPair, Sequence[SyncedPair]]


@dataclass(frozen=True)
class SolverOptions:
    fix_scale: bool = False
    initial_guess: SimilarityTransform = field(default_factory=SimilarityTransform.identity)
    regularizer_weight: float = 0.0
    measured_distance: Optional[float] = None
    max_iterations: int = 200
    convergence_tol: float = 1e-12
    damping_init: float = 1e-3

    def __post_init__(self):
        if self.regularizer_weight < 0.0:
            raise ValueError("regularizer_weight must be non-negative")
        if self.regularizer_weight > 0.0 and self.measured_distance is None:
            raise ValueError("a positive regularizer_weight needs measured_distance")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be positive")

    @property
    def regularized(self) -> bool:
        return self.regularizer_weight > 0.0


@dataclass(frozen=True)
class SolveResult:
    estimate: SimilarityTransform
    final_cost: float
    iterations: int
    converged: bool
    cost_history: Tuple[float, ...] = ()
    pair_count: int = 0


@dataclass(frozen=True)
class _Stack:
    RA: np.ndarray
    tA: np.ndarray
    RB: np.ndarray
    tB: np.ndarray

    def __len__(self) -> int:
        return len(self.RA)


def _stack(pairs: Pairs) -> _Stack:
    if isinstance(pairs, SyncedPair):
        pairs = [pairs]
    A, B = [], []
    for p in pairs:
        if len(p.set_a) != len(p.set_b):
            raise ValueError("pose sets differ in length")
        A.append(p.set_a.matrices())
        B.append(p.set_b.matrices())
    A = np.concatenate(A) if A else np.zeros((0, 4, 4))
    B = np.concatenate(B) if B else np.zeros((0, 4, 4))
    return _Stack(A[:, :3, :3], A[:, :3, 3], B[:, :3, :3], B[:, :3, 3])


def _unpack(x: SimilarityTransform):
    return x.rotation.as_matrix(), np.array(x.translation), x.scale


def _blocks(R, t, s, st: _Stack):
    rot = s * (st.RA @ R - R @ st.RB)
    tr = st.RA @ t - t + st.tA - s * (st.tB @ R.T)
    return rot, tr


def _pair_residuals(R, t, s, st: _Stack) -> np.ndarray:
    rot, tr = _blocks(R, t, s, st)
    return np.concatenate([rot, tr[:, :, None]], axis=2).reshape(-1)


def _distance_term(t, options: Optional[SolverOptions]) -> Optional[float]:
    if options is None or not options.regularized:
        return None
    return float(np.sqrt((np.linalg.norm(t) - options.measured_distance) ** 2 + _SMOOTH_EPS))


def _residual_vector(R, t, s, st, options) -> np.ndarray:
    r = _pair_residuals(R, t, s, st)
    w = _distance_term(t, options)
    if w is None:
        return r
    return np.append(r, np.sqrt(options.regularizer_weight) * w)


def residuals(x: SimilarityTransform, pair: Pairs,
              options: Optional[SolverOptions] = None) -> np.ndarray:
    """Stacked residual vector (12 entries per pose pair, plus the distance term)."""
    R, t, s = _unpack(x)
    return _residual_vector(R, t, s, _stack(pair), options)


def cost(x: SimilarityTransform, pair: Pairs,
         options: Optional[SolverOptions] = None) -> float:
    """Sum over pose pairs of ``||A_k X - X B_k||_F``, plus ``alpha * omega``."""
    st = _stack(pair)
    if len(st) == 0:
        raise ValueError("empty pose sets")
    R, t, s = _unpack(x)
    rot, tr = _blocks(R, t, s, st)
    per_pair = np.sqrt((rot ** 2).sum(axis=(1, 2)) + (tr ** 2).sum(axis=1))
    total = float(per_pair.sum())
    if options is not None and options.regularized:
        total += options.regularizer_weight * abs(
            float(np.linalg.norm(t)) - options.measured_distance)
    return total


def _jacobian(R, t, s, st: _Stack, options, fix_scale: bool) -> np.ndarray:
    n = len(st)
    cols = []
    for G in _GENERATORS:
        RG = R @ G
        d_rot = s * (st.RA @ RG - RG @ st.RB)
        d_tr = -s * (st.tB @ RG.T)
        cols.append(np.concatenate([d_rot, d_tr[:, :, None]], axis=2).reshape(-1))
    for j in range(3):
        d_rot = np.zeros((n, 3, 3))
        d_tr = st.RA[:, :, j].copy()
        d_tr[:, j] -= 1.0
        cols.append(np.concatenate([d_rot, d_tr[:, :, None]], axis=2).reshape(-1))
    if not fix_scale:
        rot, tr = _blocks(R, t, s, st)
        d_tr = -s * (st.tB @ R.T)
        cols.append(np.concatenate([rot, d_tr[:, :, None]], axis=2).reshape(-1))
    J = np.stack(cols, axis=1)
    if options is not None and options.regularized:
        nt = float(np.linalg.norm(t))
        row = np.zeros(J.shape[1])
        if nt > 0.0:
            w = _distance_term(t, options)
            row[3:6] = np.sqrt(options.regularizer_weight) * (nt - options.measured_distance) / w * t / nt
        J = np.vstack([J, row])
    return J


def _retract(R, t, s, delta, fix_scale: bool):
    R_new = R @ so3_exp(delta[:3])
    t_new = t + delta[3:6]
    s_new = s if fix_scale else s * float(np.exp(np.clip(delta[6], -_MAX_LOG_STEP, _MAX_LOG_STEP)))
    return R_new, t_new, s_new


def analytic_jacobian(x: SimilarityTransform, pair: Pairs,
                      options: Optional[SolverOptions] = None,
                      fix_scale: bool = False) -> np.ndarray:
    """Residual Jacobian w.r.t. ``(dtheta, dt, dsigma)`` at ``x``."""
    R, t, s = _unpack(x)
    return _jacobian(R, t, s, _stack(pair), options, fix_scale)


def numeric_jacobian(x: SimilarityTransform, pair: Pairs,
                     options: Optional[SolverOptions] = None,
                     fix_scale: bool = False, step: float = 1e-6) -> np.ndarray:
    """Central finite differences of :func:`residuals` with the same update rule."""
    R, t, s = _unpack(x)
    st = _stack(pair)
    n_params = 6 if fix_scale else 7
    cols = []
    for k in range(n_params):
        d = np.zeros(7)
        d[k] = step
        rp = _residual_vector(*_retract(R, t, s, d, fix_scale), st, options)
        rm = _residual_vector(*_retract(R, t, s, -d, fix_scale), st, options)
        cols.append((rp - rm) / (2.0 * step))
    return np.stack(cols, axis=1)


def solve(pair: Pairs, options: SolverOptions = SolverOptions()) -> SolveResult:
    """Minimize the hand-eye cost over a similarity transform.

    ``pair`` may be one window or a sequence of windows whose costs are
    pooled.  Failure to converge is reported through ``converged=False``
    rather than raised; so is a scale that ran away by more than three
    orders of magnitude from the initial guess.
    """
    st = _stack(pair)
    if len(st) < 3:
        raise ValueError("need at least 3 pose pairs")
    fix_scale = options.fix_scale
    R, t, s = _unpack(options.initial_guess)

    r = _residual_vector(R, t, s, st, options)
    F = float(r @ r)
    history = [F]
    lam = options.damping_init
    converged = False
    it = 0

    for it in range(1, options.max_iterations + 1):
        if F <= _COST_FLOOR:
            converged = True
            break
        J = _jacobian(R, t, s, st, options, fix_scale)
        if not np.all(np.isfinite(J)):
            break
        g = J.T @ r
        H = J.T @ J
        diag = np.diag(H).copy()
        diag = np.maximum(diag, 1e-12 * max(float(diag.max()), 1e-300))

        accepted = False
        while lam < 1e16:
            try:
                delta = np.linalg.solve(H + lam * np.diag(diag), -g)
            except np.linalg.LinAlgError:
                lam *= 10.0
                continue
            if not np.all(np.isfinite(delta)):
                lam *= 10.0
                continue
            if fix_scale:
                delta = np.append(delta, 0.0)
            Rn, tn, sn = _retract(R, t, s, delta, fix_scale)
            rn = _residual_vector(Rn, tn, sn, st, options)
            Fn = float(rn @ rn)
            if np.isfinite(Fn) and Fn < F:
                accepted = True
                break
            lam *= 10.0

        if not accepted:
            # No descent direction left at machine precision: a stationary point.
            converged = bool(np.isfinite(F))
            break

        rel = (F - Fn) / F
        R, t, s, r, F = Rn, tn, sn, rn, Fn
        history.append(F)
        lam = max(lam / 10.0, 1e-15)
        if rel < options.convergence_tol or F <= _COST_FLOOR:
            converged = True
            break

    if abs(np.log(s / options.initial_guess.scale)) > _SCALE_RUNAWAY:
        converged = False
    estimate = SimilarityTransform(Rotation.from_matrix(R), t, s)
    return SolveResult(
        estimate=estimate,
        final_cost=cost(estimate, pair, options),
        iterations=it,
        converged=converged,
        cost_history=tuple(history),
        pair_count=len(st),
    )
