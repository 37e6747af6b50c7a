"""Flat ``key = value`` configuration for calibration runs.

Every field of :class:`PipelineOptions` and :class:`SolverOptions` has a key
of the same name, plus the windowing and synchronization settings.  The
initial guess is given as ``initial_rotation`` (quaternion w x y z),
``initial_translation`` and ``initial_scale``.  Vectors are comma or space
separated.  ``#`` and ``;`` start comments.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Dict, Mapping, Optional, Union

import numpy as np

from .geometry import Rotation, SimilarityTransform
from .pipeline import PipelineOptions
from .solver import SolverOptions
from .sync import DEFAULT_STRIDE, DEFAULT_TOLERANCE, DEFAULT_WINDOW_LENGTH

_SECTION = "calibration"


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    pipeline: PipelineOptions = field(default_factory=PipelineOptions)
    window_length: int = DEFAULT_WINDOW_LENGTH
    stride: int = DEFAULT_STRIDE
    sync_tolerance: float = DEFAULT_TOLERANCE
    interpolate: bool = False
    drop_stationary: bool = True


_RUN_KEYS = {"window_length": int, "stride": int, "sync_tolerance": float,
             "interpolate": bool, "drop_stationary": bool}
_GUESS_KEYS = ("initial_rotation", "initial_translation", "initial_scale")


def _scalar_keys(cls, skip=()) -> Dict[str, type]:
    out = {}
    for f in fields(cls):
        if f.name in skip:
            continue
        tp = f.type if isinstance(f.type, type) else {"bool": bool, "int": int}.get(f.type, float)
        out[f.name] = tp
    return out


_PIPELINE_KEYS = _scalar_keys(PipelineOptions, skip=("solver_options",))
_SOLVER_KEYS = _scalar_keys(SolverOptions, skip=("initial_guess",))
KEYS = sorted({**_RUN_KEYS, **_PIPELINE_KEYS, **_SOLVER_KEYS}.keys() | set(_GUESS_KEYS))


def _to_bool(key: str, v: str) -> bool:
    s = v.strip().lower()
    if s in ("1", "true", "yes", "on"):
        return True
    if s in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"{key}: expected a boolean, got {v!r}")


def _convert(key: str, tp: type, v: str):
    if tp is bool:
        return _to_bool(key, v)
    if key == "measured_distance" and v.strip().lower() in ("", "none"):
        return None
    try:
        return int(v) if tp is int else float(v)
    except ValueError:
        raise ConfigError(f"{key}: expected {tp.__name__}, got {v!r}") from None


def _vector(key: str, v: str, n: int) -> np.ndarray:
    try:
        vals = np.array([float(x) for x in v.replace(",", " ").split()])
    except ValueError:
        raise ConfigError(f"{key}: expected {n} numbers, got {v!r}") from None
    if len(vals) != n:
        raise ConfigError(f"{key}: expected {n} numbers, got {len(vals)}")
    return vals


def read_config(source: Union[str, Path]) -> Dict[str, str]:
    """Raw key/value pairs from a config file."""
    text = Path(source).read_text()
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"), interpolation=None)
    try:
        parser.read_string(f"[{_SECTION}]\n" + text, source=str(source))
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from None
    return dict(parser[_SECTION])


def build_config(values: Mapping[str, str], base: Optional[RunConfig] = None) -> RunConfig:
    """Apply string ``values`` on top of ``base`` (defaults when omitted)."""
    base = base or RunConfig()
    unknown = sorted(set(values) - set(KEYS))
    if unknown:
        raise ConfigError(f"unknown config key(s): {', '.join(unknown)}")

    run = {k: _convert(k, tp, values[k]) for k, tp in _RUN_KEYS.items() if k in values}
    pipe = {k: _convert(k, tp, values[k]) for k, tp in _PIPELINE_KEYS.items() if k in values}
    solv = {k: _convert(k, tp, values[k]) for k, tp in _SOLVER_KEYS.items() if k in values}

    guess = base.pipeline.solver_options.initial_guess
    if any(k in values for k in _GUESS_KEYS):
        q = (_vector("initial_rotation", values["initial_rotation"], 4)
             if "initial_rotation" in values else guess.rotation.quat)
        t = (_vector("initial_translation", values["initial_translation"], 3)
             if "initial_translation" in values else guess.translation)
        s = (_convert("initial_scale", float, values["initial_scale"])
             if "initial_scale" in values else guess.scale)
        try:
            solv["initial_guess"] = SimilarityTransform(Rotation(np.asarray(q, float)), t, s)
        except ValueError as exc:
            raise ConfigError(f"initial guess: {exc}") from None

    try:
        solver = replace(base.pipeline.solver_options, **solv)
        pipeline = replace(base.pipeline, solver_options=solver, **pipe)
        cfg = replace(base, pipeline=pipeline, **run)
    except (ValueError, TypeError) as exc:
        raise ConfigError(str(exc)) from None
    if cfg.window_length < 2 or not 1 <= cfg.stride <= cfg.window_length:
        raise ConfigError("need window_length >= 2 and 1 <= stride <= window_length")
    if not cfg.sync_tolerance >= 0:
        raise ConfigError("sync_tolerance must be non-negative")
    return cfg


def load_config(path: Optional[Union[str, Path]] = None,
                overrides: Optional[Mapping[str, str]] = None) -> RunConfig:
    """File values first, then ``overrides`` (e.g. from the command line)."""
    values = read_config(path) if path is not None else {}
    values.update(overrides or {})
    return build_config(values)


def config_to_dict(cfg: RunConfig) -> Dict[str, object]:
    """Flat view of every key, for echoing the effective configuration."""
    out: Dict[str, object] = {k: getattr(cfg, k) for k in _RUN_KEYS}
    out.update({k: getattr(cfg.pipeline, k) for k in _PIPELINE_KEYS})
    so = cfg.pipeline.solver_options
    out.update({k: getattr(so, k) for k in _SOLVER_KEYS})
    g = so.initial_guess
    out["initial_rotation"] = [float(v) for v in g.rotation.quat]
    out["initial_translation"] = [float(v) for v in g.translation]
    out["initial_scale"] = float(g.scale)
    return dict(sorted(out.items()))
