"""Robust, windowed hand-eye calibration with scale recovery."""

from .baseline import DegenerateMotionError, DualQuaternion, solve_dual_quaternion
from .config import ConfigError, RunConfig, load_config
from .geometry import (Pose, RigidTransform, Rotation, SimilarityTransform, average_rotations,
                       compose, conjugate_pose, inverse, rotation_angle_between,
                       translation_error)
from .metrics import EvalReport, ate, evaluate, rpe, to_reference_frame
from .pipeline import (CalibrationState, MotionDiagnostics, OnlineCalibrator, PipelineOptions,
                       Rejection, WindowEstimate, consolidate, diagnose_motion, early_reject,
                       gate, ransac_filter, refine, rescale_trajectory, run, step)
from .solver import SolveResult, SolverOptions, cost, solve
from .sync import (PoseSet, PoseStream, SyncedPair, SyncedSample, make_windows, rebase,
                   synchronize)
from .synth import GroundTruth, NoiseModel, RigConfig, generate, inject_discontinuity
from .trajio import TrajectoryFormatError, parse_trajectory, write_tum

__version__ = "0.1.0"
