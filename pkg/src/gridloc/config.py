"""JSON configuration: sections map onto the library's dataclasses.

A config file is an object whose keys are section names; every key inside a
section must name a field of that section's dataclass.  Omitted keys keep
their defaults.  Angles are in radians.
"""
from __future__ import annotations

import copy
import dataclasses
import json
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Optional

from .detect import DetectorConfig
from .simulator import NoiseSpec, RenderOptions, Scenario, TrajectoryConfig
from .types import CameraModel, GridSpec, PipelineConfig


class ConfigError(ValueError):
    """Invalid configuration; the message starts with the offending field path."""


@dataclass(frozen=True)
class RunSection:
    name: str = "default"
    path_length: float = 60.0
    fps: float = 30.0
    # None: the largest speed allowed by trajectory.eps_s
    speed: Optional[float] = None
    n_frames: Optional[int] = None


@dataclass(frozen=True)
class AppConfig:
    seed: int = 42
    run: RunSection = RunSection()
    camera: CameraModel = CameraModel()
    grid: GridSpec = GridSpec()
    pipeline: PipelineConfig = PipelineConfig()
    detector: DetectorConfig = DetectorConfig()
    noise: NoiseSpec = NoiseSpec(duplicates_per_line=(3, 5))
    trajectory: TrajectoryConfig = TrajectoryConfig()
    render: RenderOptions = RenderOptions()

    def scenario(self, force: bool = False) -> Scenario:
        r = self.run
        return Scenario(name=r.name, path_length=r.path_length, fps=r.fps, speed=r.speed,
                        n_frames=r.n_frames, camera=self.camera, grid=self.grid,
                        noise=self.noise, traj=self.trajectory, render=self.render,
                        pipeline=self.pipeline, force=force, seed=self.seed)

    def to_dict(self) -> dict:
        out: dict[str, Any] = {"seed": self.seed}
        for f in fields(self):
            if f.name != "seed":
                out[f.name] = dataclasses.asdict(getattr(self, f.name))
        return json.loads(json.dumps(out))


MODERATE_NOISE = {"sigma_rho": 1.0, "sigma_theta": 0.005, "duplicates_per_line": [3, 5],
                  "outlier_fraction": 0.1}

PRESETS: dict[str, dict] = {
    "default": {},
    "trial1": {"run": {"name": "trial1", "path_length": 264.60}, "noise": MODERATE_NOISE},
    "trial2": {"run": {"name": "trial2", "path_length": 639.34}, "noise": MODERATE_NOISE},
    "trial3": {"run": {"name": "trial3", "path_length": 1020.73}, "noise": MODERATE_NOISE},
    # 1.5x the speed limit: each cell is seen in only 2 frames
    "overspeed": {"run": {"name": "overspeed", "path_length": 60.0, "speed": 15.0}},
}


def _coerce(value: Any, default: Any, path: str) -> Any:
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{path}: expected true or false, got {value!r}")
        return value
    if isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{path}: expected an integer, got {value!r}")
        return value
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{path}: expected a number, got {value!r}")
        return float(value)
    if isinstance(default, str):
        if not isinstance(value, str):
            raise ConfigError(f"{path}: expected a string, got {value!r}")
        return value
    if isinstance(default, tuple):
        if not isinstance(value, list) or len(value) != len(default):
            raise ConfigError(f"{path}: expected a list of {len(default)} values, got {value!r}")
        return tuple(_coerce(v, d, f"{path}[{k}]") for k, (v, d) in enumerate(zip(value, default)))
    if default is None:
        # optional numeric fields
        if value is None:
            return None
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{path}: expected a number or null, got {value!r}")
        return value
    raise ConfigError(f"{path}: unsupported field type")


def _section(obj: Any, data: Any, path: str) -> Any:
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: expected an object, got {type(data).__name__}")
    known = {f.name: f for f in fields(obj)}
    changes = {}
    for key, value in data.items():
        if key not in known:
            raise ConfigError(f"{path}.{key}: unknown key")
        changes[key] = _coerce(value, getattr(obj, key), f"{path}.{key}")
    try:
        return replace(obj, **changes)
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from None


def parse_config(data: Any, base: AppConfig = AppConfig()) -> AppConfig:
    """Overlay a parsed JSON object onto ``base``."""
    if not isinstance(data, dict):
        raise ConfigError("config: expected a JSON object")
    out = base
    for key, value in data.items():
        if key == "seed":
            out = replace(out, seed=_coerce(value, 0, "config.seed"))
        elif key in {f.name for f in fields(AppConfig)}:
            out = replace(out, **{key: _section(getattr(out, key), value, f"config.{key}")})
        else:
            raise ConfigError(f"config.{key}: unknown key")
    return out


def preset(name: str) -> AppConfig:
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}")
    return parse_config(copy.deepcopy(PRESETS[name]))


def load_config(path: Optional[str] = None, preset_name: Optional[str] = None) -> AppConfig:
    """Preset (default "default") overlaid with the JSON file at ``path``, if any."""
    base = preset(preset_name or "default")
    if path is None:
        return base
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from None
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror}") from None
    return parse_config(data, base)


__all__ = ["ConfigError", "RunSection", "AppConfig", "PRESETS", "parse_config", "preset",
           "load_config"]
