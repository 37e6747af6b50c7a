import numpy as np
import pytest

from robust_handeye.config import (KEYS, ConfigError, RunConfig, build_config, config_to_dict,
                                   load_config, read_config)
from robust_handeye.pipeline import PipelineOptions
from robust_handeye.solver import SolverOptions


def test_defaults():
    cfg = load_config()
    assert config_to_dict(cfg) == config_to_dict(RunConfig())
    assert cfg.pipeline.cost_threshold == PipelineOptions().cost_threshold


def test_every_option_field_has_a_key():
    names = {f for f in PipelineOptions.__dataclass_fields__ if f != "solver_options"}
    names |= {f for f in SolverOptions.__dataclass_fields__ if f != "initial_guess"}
    assert names <= set(KEYS)


def test_file_values_and_overrides(tmp_path):
    f = tmp_path / "run.cfg"
    f.write_text("# comment\ncost_threshold = 0.1  ; inline\nfix_scale = yes\n"
                 "window_length = 60\ninitial_translation = 0.1, 0.2, 0.3\n"
                 "regularizer_weight = 0.1\nmeasured_distance = 0.6\n")
    assert read_config(f)["cost_threshold"] == "0.1"
    cfg = load_config(f, {"cost_threshold": "0.2", "stride": "5"})
    assert cfg.pipeline.cost_threshold == 0.2
    assert cfg.pipeline.solver_options.fix_scale is True
    assert cfg.window_length == 60 and cfg.stride == 5
    assert np.allclose(cfg.pipeline.solver_options.initial_guess.translation, [0.1, 0.2, 0.3])
    assert cfg.pipeline.solver_options.measured_distance == 0.6


def test_initial_guess_keys():
    cfg = build_config({"initial_rotation": "0 0 0 1", "initial_scale": "2.5"})
    g = cfg.pipeline.solver_options.initial_guess
    assert g.rotation.angle() == pytest.approx(180.0)
    assert g.scale == 2.5


@pytest.mark.parametrize("values", [
    {"no_such_key": "1"},
    {"cost_threshold": "abc"},
    {"cost_threshold": "-1"},
    {"fix_scale": "maybe"},
    {"regularizer_weight": "0.1"},
    {"initial_translation": "1 2"},
    {"window_length": "10", "stride": "20"},
    {"initial_scale": "0"},
])
def test_invalid_values(values):
    with pytest.raises(ConfigError):
        build_config(values)


def test_round_trip_through_dict():
    cfg = build_config({"ransac_iterations": "7", "interpolate": "true", "initial_scale": "3"})
    flat = config_to_dict(cfg)
    text = {k: (" ".join(map(str, v)) if isinstance(v, list) else
                ("" if v is None else str(v))) for k, v in flat.items()}
    assert config_to_dict(build_config(text)) == flat
    assert sorted(flat) == sorted(KEYS)
