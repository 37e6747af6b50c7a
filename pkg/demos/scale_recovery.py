"""Recover a scale-2 extrinsic from a noisy rich-motion pair.

Sensor B reports lengths in half-meters, as a monocular odometry front end
might.  The windowed pipeline solves the scale along with the rigid part.
"""

import numpy as np

from robust_handeye import (NoiseModel, PipelineOptions, RigConfig, Rotation, SimilarityTransform,
                            generate, make_windows, rotation_angle_between, run, synchronize,
                            translation_error)

truth = SimilarityTransform(Rotation.from_euler(30.0, -20.0, 45.0), [0.3, -0.1, 0.5], 2.0)
a, b, _ = generate(RigConfig(truth, "rich_6dof", 40.0, 10.0),
                   noise_b=NoiseModel(translation_sigma=0.005, rotation_sigma=0.1, seed=1))
windows = make_windows(synchronize(a, b), 48, 8)
state = run(windows, PipelineOptions())

est = state.consolidated
print(f"windows: {len(windows)}, inliers: {state.inlier_count}")
print("translation", np.round(est.translation, 4), "truth", truth.translation)
print(f"scale {est.scale:.4f} (truth 2)")
print(f"errors: {translation_error(est, truth) * 100:.2f} cm, "
      f"{rotation_angle_between(est.rotation, truth.rotation):.3f} deg")
