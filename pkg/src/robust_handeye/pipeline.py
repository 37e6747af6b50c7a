"""Windowed, robust and continuously refined calibration.

Each window goes through: motion diagnosis and gating, a warm-started
solve, early rejection on the per-pair cost, RANSAC over all surviving
window estimates, and consolidation of the inliers into the running
calibration.
"""

from __future__ import annotations

import enum
from collections import deque
from dataclasses import dataclass, field, replace
from typing import Deque, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .geometry import (Pose, RigidTransform, Rotation, SimilarityTransform,
                       average_rotations)
from .solver import SolverOptions, solve
from .sync import (DEFAULT_STRIDE, DEFAULT_WINDOW_LENGTH, PoseStream, SyncedPair,
                   SyncedSample, to_pair)

AXES = ("x", "y", "z")
_REFIT_ROUNDS = 5


class Rejection(str, enum.Enum):
    NONE = "none"
    INSUFFICIENT_MOTION = "insufficient_motion"
    HIGH_COST = "high_cost"
    RANSAC_OUTLIER = "ransac_outlier"


@dataclass(frozen=True)
class MotionDiagnostics:
    position_eigenvalues: np.ndarray
    rotation_axis_eigenvalues: np.ndarray
    total_rotation: float
    stationary: bool
    # Eigenvectors (columns) matching rotation_axis_eigenvalues.
    rotation_axes: np.ndarray = field(default_factory=lambda: np.eye(3))
    max_displacement: float = 0.0

    @property
    def position_ratio(self) -> float:
        l1, l2 = self.position_eigenvalues[:2]
        return float(l2 / l1) if l1 > 1e-15 else 0.0


@dataclass(frozen=True)
class GateResult:
    accepted: bool
    reason: Rejection
    observable_axes: Tuple[bool, bool, bool]


@dataclass(frozen=True)
class PipelineOptions:
    min_eigen_ratio: float = 0.05
    min_total_rotation: float = 5.0
    cost_threshold: float = 0.05
    ransac_iterations: int = 100
    ransac_translation_inlier: float = 0.05
    ransac_rotation_inlier: float = 1.0
    ransac_scale_inlier: float = 0.10
    history_capacity: int = 500
    # A rotation axis counts as excited when its second-moment eigenvalue is
    # at least this fraction of the largest one.
    min_rotation_axis_ratio: float = 0.01
    # Sensor axis i is unobservable when |n_i| of the sole rotation axis n
    # reaches this value.
    axis_alignment: float = 0.2
    seed: int = 0
    solver_options: SolverOptions = field(default_factory=SolverOptions)

    def __post_init__(self):
        positive = (self.min_eigen_ratio, self.min_total_rotation, self.cost_threshold,
                    self.ransac_iterations, self.ransac_translation_inlier,
                    self.ransac_rotation_inlier, self.ransac_scale_inlier,
                    self.history_capacity, self.min_rotation_axis_ratio, self.axis_alignment)
        if any(not v > 0 for v in positive):
            raise ValueError("pipeline thresholds must be positive")


@dataclass(frozen=True)
class WindowEstimate:
    index: int
    estimate: Optional[SimilarityTransform]
    cost: float
    diagnostics: MotionDiagnostics
    accepted: bool
    rejection_reason: Rejection
    observable_axes: Tuple[bool, bool, bool] = (True, True, True)
    pair_count: int = 0
    t_start: float = 0.0
    t_end: float = 0.0
    converged: bool = True

    def __post_init__(self):
        if self.accepted != (self.rejection_reason is Rejection.NONE):
            raise ValueError("accepted must match an empty rejection reason")

    @property
    def t_mid(self) -> float:
        return 0.5 * (self.t_start + self.t_end)


@dataclass(frozen=True)
class CalibrationState:
    consolidated: SimilarityTransform = field(default_factory=SimilarityTransform.identity)
    inlier_count: int = 0
    window_history: Tuple[WindowEstimate, ...] = ()
    observable_axes: Tuple[bool, bool, bool] = (False, False, False)
    scale_history: Tuple[Tuple[float, float], ...] = ()
    windows_seen: int = 0
    updated: bool = False

    @classmethod
    def initial(cls, options: PipelineOptions) -> "CalibrationState":
        return cls(consolidated=options.solver_options.initial_guess)


def _rotvec_from_matrix(R: np.ndarray) -> np.ndarray:
    return Rotation.from_matrix(R).as_rotvec()


def diagnose_motion(pair: SyncedPair) -> MotionDiagnostics:
    """Motion statistics of the reference (A) side of a window."""
    if len(pair) == 0:
        raise ValueError("empty window")
    M = pair.set_a.matrices()
    P = M[:, :3, 3]
    cov = np.cov(P.T, bias=True) if len(P) > 1 else np.zeros((3, 3))
    pos_eig = np.clip(np.linalg.eigvalsh(cov)[::-1], 0.0, None)

    if len(M) > 1:
        rel = np.einsum("kji,kjl->kil", M[:-1, :3, :3], M[1:, :3, :3])
        omegas = np.array([_rotvec_from_matrix(R) for R in rel])
    else:
        omegas = np.zeros((1, 3))
    second = omegas.T @ omegas / len(omegas)
    w, V = np.linalg.eigh(second)
    order = np.argsort(w)[::-1]
    rot_eig = np.clip(w[order], 0.0, None)
    total = float(np.degrees(np.linalg.norm(omegas, axis=1).sum()))
    disp = float(np.linalg.norm(P, axis=1).max())
    return MotionDiagnostics(
        position_eigenvalues=pos_eig,
        rotation_axis_eigenvalues=rot_eig,
        total_rotation=total,
        stationary=disp < 1e-3 and total < 0.01,
        rotation_axes=V[:, order],
        max_displacement=disp,
    )


def observable_axes(d: MotionDiagnostics, opts: PipelineOptions) -> Tuple[bool, bool, bool]:
    """Which translation axes of the extrinsic the window's rotations excite.

    Two or more excited rotation axes make every translation axis
    observable.  With a single rotation axis ``n`` the extrinsic translation
    along ``n`` is unconstrained, so sensor axes with a large ``n`` component
    are flagged.
    """
    lam = d.rotation_axis_eigenvalues
    if lam[0] <= 0.0:
        return (False, False, False)
    excited = int(np.sum(lam / lam[0] >= opts.min_rotation_axis_ratio))
    if excited >= 2:
        return (True, True, True)
    n = d.rotation_axes[:, 0]
    return tuple(bool(abs(n[i]) < opts.axis_alignment) for i in range(3))


def _sole_rotation_axis(d: MotionDiagnostics, opts: PipelineOptions) -> Optional[np.ndarray]:
    lam = d.rotation_axis_eigenvalues
    if lam[0] <= 0.0 or np.sum(lam / lam[0] >= opts.min_rotation_axis_ratio) != 1:
        return None
    return d.rotation_axes[:, 0]


def gate(d: MotionDiagnostics, opts: PipelineOptions) -> GateResult:
    axes = observable_axes(d, opts)
    ok = not (d.stationary or d.total_rotation < opts.min_total_rotation
              or d.position_ratio < opts.min_eigen_ratio)
    return GateResult(ok, Rejection.NONE if ok else Rejection.INSUFFICIENT_MOTION, axes)


def early_reject(e: WindowEstimate, opts: PipelineOptions) -> bool:
    """True when the per-pair cost exceeds the threshold (ties are kept)."""
    per_pair = e.cost / max(e.pair_count, 1)
    return not (np.isfinite(per_pair) and per_pair <= opts.cost_threshold)


def _effective_axes(e: WindowEstimate, opts: PipelineOptions) -> np.ndarray:
    axes = np.array(e.observable_axes, dtype=bool)
    # The distance prior pins down one otherwise free translation component.
    if opts.solver_options.regularized and (~axes).sum() == 1:
        axes[:] = True
    return axes


def ransac_filter(history: Sequence[WindowEstimate], opts: PipelineOptions,
                  rng: Optional[np.random.Generator] = None) -> np.ndarray:
    """Boolean inlier mask over ``history``.

    Every hypothesis is a single window estimate.  A candidate agrees with it
    when translations (on commonly observable axes), rotations and, if the
    scale is solved, scales are within the configured bands.  The largest
    consensus wins; ties go to the lower summed translation residual, then
    to the hypothesis seen first.
    """
    n = len(history)
    if n == 0:
        return np.zeros(0, dtype=bool)
    T = np.array([e.estimate.translation for e in history])
    Q = np.array([e.estimate.rotation.quat for e in history])
    S = np.log([e.estimate.scale for e in history])
    axes = np.array([_effective_axes(e, opts) for e in history])

    if n <= opts.ransac_iterations:
        hyps = np.arange(n)
    else:
        rng = rng if rng is not None else np.random.default_rng(opts.seed)
        hyps = rng.choice(n, size=opts.ransac_iterations, replace=False)

    cos_half = np.cos(np.radians(opts.ransac_rotation_inlier) / 2.0)

    def agree(t, q, s, ax):
        dist = np.linalg.norm((T - t) * (axes & ax), axis=1)
        mask = (dist <= opts.ransac_translation_inlier) & (np.abs(Q @ q) >= cos_half)
        if not opts.solver_options.fix_scale:
            mask &= np.abs(np.expm1(S - s)) <= opts.ransac_scale_inlier
        return mask, (-int(mask.sum()), float(dist[mask].sum()))

    best_key, best_mask = None, None
    for h in hyps:
        mask, key = agree(T[h], Q[h], S[h], axes[h])
        if best_key is None or key < best_key:
            best_key, best_mask = key, mask

    # Local refit: re-test against the mean of the consensus set, kept only
    # while it does not lose support.
    for _ in range(_REFIT_ROUNDS):
        inl = [history[k] for k in np.flatnonzero(best_mask)]
        mean = consolidate(inl, inl[0].estimate, opts)
        mask, key = agree(np.array(mean.translation), mean.rotation.quat,
                          np.log(mean.scale), np.ones(3, dtype=bool))
        if key[0] > best_key[0] or np.array_equal(mask, best_mask):
            break
        best_key, best_mask = key, mask
    return best_mask


def consolidate(inliers: Sequence[WindowEstimate], prior: SimilarityTransform,
                opts: Optional[PipelineOptions] = None) -> SimilarityTransform:
    """Mean of the inlier estimates.

    Translation is averaged per axis over the windows in which that axis is
    observable (other axes keep ``prior``), rotation by the chordal mean and
    scale by the geometric mean.  With no inliers ``prior`` is returned.
    """
    if len(inliers) == 0:
        return prior
    opts = opts or PipelineOptions()
    T = np.array([e.estimate.translation for e in inliers])
    axes = np.array([_effective_axes(e, opts) for e in inliers])
    counts = axes.sum(axis=0)
    sums = (T * axes).sum(axis=0)
    t = np.where(counts > 0, sums / np.maximum(counts, 1), prior.translation)
    rot = average_rotations([e.estimate.rotation for e in inliers])
    scale = float(np.exp(np.mean(np.log([e.estimate.scale for e in inliers]))))
    return SimilarityTransform(rot, t, scale)


def _solve_window(pair: SyncedPair, d: MotionDiagnostics, solver_opts: SolverOptions,
                  opts: PipelineOptions):
    res = solve(pair, solver_opts)
    n = _sole_rotation_axis(d, opts)
    if n is None or not solver_opts.regularized:
        return res
    # Rotation about a single axis n leaves t + c n free; the distance prior
    # then has two roots, mirrored through the plane normal to n.  The data
    # cannot tell them apart, so keep the one nearer the warm start.
    t = np.array(res.estimate.translation)
    mirrored = replace(res.estimate, translation=t - 2.0 * (t @ n) * n)
    alt = solve(pair, replace(solver_opts, initial_guess=mirrored))
    guess = np.array(solver_opts.initial_guess.translation)
    if alt.converged and (np.linalg.norm(alt.estimate.translation - guess)
                          < np.linalg.norm(t - guess)):
        return alt
    return res


def step(state: CalibrationState, pair: SyncedPair,
         opts: PipelineOptions = PipelineOptions()) -> CalibrationState:
    """Feed one window through the pipeline and return the new state.

    Never raises on bad data; failures become rejected window estimates.
    """
    index = state.windows_seen
    base = dict(index=index, pair_count=len(pair), t_start=pair.t_start, t_end=pair.t_end)
    try:
        d = diagnose_motion(pair)
        g = gate(d, opts)
    except (ValueError, np.linalg.LinAlgError):
        d = MotionDiagnostics(np.zeros(3), np.zeros(3), 0.0, True)
        g = GateResult(False, Rejection.INSUFFICIENT_MOTION, (False, False, False))

    history: Deque[WindowEstimate] = deque(state.window_history, maxlen=opts.history_capacity)
    scale_history = state.scale_history

    if not g.accepted:
        history.append(WindowEstimate(estimate=None, cost=float("nan"), diagnostics=d,
                                      accepted=False, rejection_reason=g.reason,
                                      observable_axes=g.observable_axes, **base))
        return replace(state, window_history=tuple(history), windows_seen=index + 1,
                       updated=False)

    solver_opts = replace(opts.solver_options, initial_guess=state.consolidated)
    try:
        res = _solve_window(pair, d, solver_opts, opts)
        estimate, win_cost, converged = res.estimate, res.final_cost, res.converged
    except (ValueError, np.linalg.LinAlgError):
        estimate, win_cost, converged = state.consolidated, float("inf"), False

    e = WindowEstimate(estimate=estimate, cost=win_cost, diagnostics=d, accepted=True,
                       rejection_reason=Rejection.NONE, observable_axes=g.observable_axes,
                       converged=converged, **base)
    if not converged or early_reject(e, opts):
        e = replace(e, accepted=False, rejection_reason=Rejection.HIGH_COST)
    else:
        scale_history = scale_history + ((e.t_mid, estimate.scale),)
    history.append(e)

    cand_idx = [k for k, h in enumerate(history)
                if h.rejection_reason in (Rejection.NONE, Rejection.RANSAC_OUTLIER)]
    entries = list(history)
    inliers: List[WindowEstimate] = []
    if cand_idx:
        rng = np.random.default_rng([opts.seed, index])
        mask = ransac_filter([entries[k] for k in cand_idx], opts, rng)
        for k, inl in zip(cand_idx, mask):
            reason = Rejection.NONE if inl else Rejection.RANSAC_OUTLIER
            entries[k] = replace(entries[k], accepted=bool(inl), rejection_reason=reason)
            if inl:
                inliers.append(entries[k])

    consolidated = consolidate(inliers, state.consolidated, opts)
    if inliers:
        axes = np.any([_effective_axes(h, opts) for h in inliers], axis=0)
        obs = tuple(bool(a) for a in axes)
    else:
        obs = state.observable_axes
    return CalibrationState(
        consolidated=consolidated,
        inlier_count=len(inliers),
        window_history=tuple(entries),
        observable_axes=obs,
        scale_history=scale_history,
        windows_seen=index + 1,
        updated=bool(inliers),
    )


def run(windows: Iterable[SyncedPair], opts: PipelineOptions = PipelineOptions(),
        state: Optional[CalibrationState] = None) -> CalibrationState:
    """Process a sequence of windows in order."""
    state = state if state is not None else CalibrationState.initial(opts)
    for w in windows:
        state = step(state, w, opts)
    return state


def refine(windows: Sequence[SyncedPair], state: CalibrationState,
           opts: PipelineOptions = PipelineOptions()):
    """One pooled solve over the current inlier windows.

    ``windows[i]`` must be the window that produced history index ``i``.
    Returns the solver result, warm-started from the consolidated estimate.
    """
    chosen = [windows[e.index] for e in state.window_history if e.accepted]
    if not chosen:
        raise ValueError("no inlier windows to refine over")
    solver_opts = replace(opts.solver_options, initial_guess=state.consolidated)
    return solve(chosen, solver_opts)


class OnlineCalibrator:
    """Buffer synchronized samples and step the pipeline every ``stride`` samples."""

    def __init__(self, options: PipelineOptions = PipelineOptions(),
                 window_length: int = DEFAULT_WINDOW_LENGTH, stride: int = DEFAULT_STRIDE):
        if window_length < 2 or not 1 <= stride <= window_length:
            raise ValueError("invalid window_length/stride")
        self.options = options
        self.window_length = window_length
        self.stride = stride
        self.state = CalibrationState.initial(options)
        self._buffer: Deque[SyncedSample] = deque(maxlen=window_length)
        self._since = 0

    def push(self, sample: SyncedSample) -> Optional[CalibrationState]:
        """Add a sample; returns the new state when a window was processed."""
        self._buffer.append(sample)
        self._since += 1
        if len(self._buffer) < self.window_length:
            return None
        if self._since < self.stride and self.state.windows_seen > 0:
            return None
        self._since = 0
        self.state = step(self.state, to_pair(list(self._buffer)), self.options)
        return self.state


def scale_at(scale_history: Sequence[Tuple[float, float]], t: float) -> float:
    """Step interpolation: the latest scale at or before ``t`` (else the first)."""
    times = [h[0] for h in scale_history]
    k = int(np.searchsorted(times, t, side="right")) - 1
    return float(scale_history[max(k, 0)][1])


def rescale_trajectory(stream: PoseStream,
                       scale_history: Sequence[Tuple[float, float]]) -> PoseStream:
    """Multiply each translation increment by the scale in effect at its end time."""
    if len(scale_history) == 0:
        raise ValueError("empty scale history")
    hist = sorted(scale_history)
    if len(stream) == 0:
        return stream
    out = [stream.poses[0]]
    cur = stream.poses[0].transform
    for prev, nxt in zip(stream.poses, stream.poses[1:]):
        inc = prev.transform.inverse() @ nxt.transform
        s = scale_at(hist, nxt.timestamp)
        cur = cur @ RigidTransform(inc.rotation, inc.translation * s)
        out.append(Pose(nxt.timestamp, cur))
    return PoseStream(stream.sensor_id, tuple(out))
