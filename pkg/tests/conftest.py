import numpy as np
import pytest
from dataclasses import replace

from robust_handeye.geometry import Rotation, SimilarityTransform
from robust_handeye.sync import make_windows, synchronize
from robust_handeye.synth import NoiseModel, RigConfig, generate

X0 = SimilarityTransform(Rotation.from_euler(30.0, -20.0, 45.0), [0.3, -0.1, 0.5], 1.0)
X2 = replace(X0, scale=2.0)

# Filled by test_acceptance; printed once at the end of the run.
ACCEPTANCE_LINES = {}


def rich_windows(x=X0, duration=20.0, noise_b=NoiseModel(), seed=0, length=48, stride=8):
    a, b, truth = generate(RigConfig(x, "rich_6dof", duration, 10.0, motion_seed=seed),
                           NoiseModel(), noise_b)
    return make_windows(synchronize(a, b), length, stride), (a, b, truth)


@pytest.fixture(scope="session")
def rich_pair():
    windows, _ = rich_windows()
    return windows[0]


@pytest.fixture(scope="session")
def rich_pair_scaled():
    windows, _ = rich_windows(X2)
    return windows[0]


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[k])
