"""Pipeline configuration: one JSON document holds every tunable."""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field, fields
from importlib import resources
from pathlib import Path
from typing import Optional, Union

from .detect import GrowParams
from .evaluate import MatchCriterion, MatchMode
from .filters import BilateralParams
from .track import TrackParams


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending key path."""


@dataclass(frozen=True)
class PipelineConfig:
    bilateral: BilateralParams = field(default_factory=BilateralParams)
    grow_bilateral: GrowParams = field(default_factory=lambda: GrowParams(dark_threshold=90))
    grow_laplacian: GrowParams = field(default_factory=lambda: GrowParams(dark_threshold=80))
    track: TrackParams = field(default_factory=TrackParams)
    eval: MatchCriterion = field(default_factory=MatchCriterion)

    def to_dict(self) -> dict:
        out = {name: asdict(getattr(self, name)) for name in _SECTIONS}
        out["eval"]["mode"] = self.eval.mode.value
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "PipelineConfig":
        if not isinstance(data, dict):
            raise ConfigError("config: expected a JSON object")
        unknown = sorted(set(data) - set(_SECTIONS))
        if unknown:
            raise ConfigError(f"config.{unknown[0]}: unknown key")
        sections = {}
        for name, kind in _SECTIONS.items():
            if name in data:
                sections[name] = _build(kind, data[name], f"config.{name}")
        return cls(**sections)


_SECTIONS = {
    "bilateral": BilateralParams,
    "grow_bilateral": GrowParams,
    "grow_laplacian": GrowParams,
    "track": TrackParams,
    "eval": MatchCriterion,
}

# expected JSON types per field; None allowed where the default is None
_NUMBER = (int, float)
_TYPES = {
    (BilateralParams, "sigma_s"): _NUMBER,
    (BilateralParams, "sigma_r"): _NUMBER,
    (BilateralParams, "radius"): (int, type(None)),
    (GrowParams, "dark_threshold"): (int,),
    (GrowParams, "max_diameter"): (int,),
    (GrowParams, "min_area"): (int,),
    (GrowParams, "connectivity"): (int,),
    (TrackParams, "xy_tolerance"): _NUMBER,
    (TrackParams, "rescue_threshold_delta"): (int,),
    (TrackParams, "rescue_max_diameter"): (int, type(None)),
    (MatchCriterion, "mode"): (str,),
    (MatchCriterion, "centroid_tol"): _NUMBER,
    (MatchCriterion, "min_iou"): _NUMBER,
}


def _build(kind, data, path: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: expected an object")
    names = {f.name for f in fields(kind)}
    for key, value in data.items():
        if key not in names:
            raise ConfigError(f"{path}.{key}: unknown key")
        allowed = _TYPES[(kind, key)]
        if isinstance(value, bool) or not isinstance(value, allowed):
            raise ConfigError(f"{path}.{key}: invalid type {type(value).__name__}")
    if kind is MatchCriterion and "mode" in data:
        try:
            MatchMode(data["mode"])
        except ValueError:
            raise ConfigError(
                f"{path}.mode: must be one of {', '.join(m.value for m in MatchMode)}"
            ) from None
    try:
        return kind(**data)
    except ValueError as exc:
        msg = str(exc)
        key = next((k for k in data if msg.startswith(k)), None)
        where = f"{path}.{key}" if key else path
        raise ConfigError(f"{where}: {msg}") from None


def load_config(path: Optional[Union[str, os.PathLike]]) -> PipelineConfig:
    if path is None:
        return PipelineConfig()
    p = Path(path)
    if not p.exists():
        raise FileNotFoundError(f"config not found: {p}")
    try:
        data = json.loads(p.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{p}: invalid JSON ({exc})") from None
    return PipelineConfig.from_dict(data)


def reference_config() -> PipelineConfig:
    """The bundled reference configuration used by the phantom suite."""
    text = resources.files("reticula").joinpath("data/reference_config.json").read_text(encoding="utf-8")
    return PipelineConfig.from_dict(json.loads(text))


def reference_phantom_spec():
    from .phantom import PhantomSpec

    text = resources.files("reticula").joinpath("data/reference_phantom.json").read_text(encoding="utf-8")
    return PhantomSpec.from_dict(json.loads(text))
