"""
Scenario configuration: schema, TOML loading and overrides.

Every field has the default of the reference scenario, so an empty file is a
valid configuration. Unknown keys are rejected.
"""
from __future__ import annotations

import hashlib
import pathlib
from enum import Enum
from typing import Any, Optional, Union

import tomli
from pydantic import (
    BaseModel,
    ConfigDict,
    Field,
    ValidationError,
    ValidationInfo,
    field_validator,
)

from workflow.pipeline.channel import (
    BUILTIN_PROFILES,
    ChannelProfile,
    LinkBudgetParams,
)
from workflow.pipeline.geometry import SatelliteGeometry
from workflow.pipeline.scheduler import Method
from workflow.pipeline.tdd_schedule import Policy, SlotGrid, SlotPattern

SWEEP_AXES = {
    "alpha_min": "alpha_min_deg",
    "altitude": "altitude_km",
    "pattern": "pattern",
}


class DelayScope(str, Enum):
    SELECTED = "selected"
    CELL = "cell"


class ConfigValidationError(ValueError):
    def __init__(self, message: str, fields: Optional[list] = None):
        super().__init__(message)
        self.fields = list(fields or [])


class ScenarioConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    altitude_km: float = Field(600.0, gt=0)
    earth_radius_km: float = Field(6371.0, gt=0)
    alpha_min_deg: float = Field(50.0, gt=0, le=90)
    alpha_max_deg: float = Field(90.0, gt=0, le=90)
    n_ue: int = Field(100, ge=1)
    n_s: int = Field(10, ge=1)
    link: LinkBudgetParams = Field(default_factory=LinkBudgetParams)
    profiles: dict[str, ChannelProfile] = Field(default_factory=dict)
    profile: str = "urban"
    grid: SlotGrid = Field(default_factory=SlotGrid)
    pattern: str = "dsu"
    policy: Policy = Policy.TA
    scheduler: Method = Method.MG
    delay_scope: DelayScope = DelayScope.SELECTED
    runs: int = Field(200, ge=1)
    seed: int = Field(0, ge=0, lt=2**64)

    @field_validator("policy", "scheduler", "delay_scope", mode="before")
    @classmethod
    def _lowercase(cls, value):
        return value.lower() if isinstance(value, str) else value

    @field_validator("pattern", mode="before")
    @classmethod
    def _normalize_pattern(cls, value):
        if not isinstance(value, str):
            raise ValueError("pattern must be a string such as 'dsu' or '4dsu'")
        return SlotPattern.parse(value).name

    @field_validator("alpha_max_deg")
    @classmethod
    def _alpha_order(cls, value, info: ValidationInfo):
        alpha_min = info.data.get("alpha_min_deg")
        if alpha_min is not None and value < alpha_min:
            raise ValueError(
                f"alpha_max_deg {value} is below alpha_min_deg {alpha_min}"
            )
        return value

    @field_validator("n_s")
    @classmethod
    def _n_s_within_population(cls, value, info: ValidationInfo):
        n_ue = info.data.get("n_ue")
        if n_ue is not None and value > n_ue:
            raise ValueError(f"n_s {value} exceeds n_ue {n_ue}")
        return value

    @field_validator("profile")
    @classmethod
    def _known_profile(cls, value, info: ValidationInfo):
        custom = info.data.get("profiles") or {}
        if value not in custom and value not in BUILTIN_PROFILES:
            known = sorted(set(custom) | set(BUILTIN_PROFILES))
            raise ValueError(f"Unknown channel profile '{value}', known: {known}")
        return value

    @property
    def slot_pattern(self) -> SlotPattern:
        return SlotPattern.parse(self.pattern)

    @property
    def channel_profile(self) -> ChannelProfile:
        return self.profiles.get(self.profile) or BUILTIN_PROFILES[self.profile]

    @property
    def satellite(self) -> SatelliteGeometry:
        return SatelliteGeometry(self.altitude_km, self.earth_radius_km)

    def digest(self) -> str:
        return hashlib.sha256(self.model_dump_json().encode("utf-8")).hexdigest()


def build_config(data: dict) -> ScenarioConfig:
    try:
        return ScenarioConfig.model_validate(data)
    except ValidationError as error:
        fields = [".".join(str(p) for p in err["loc"]) for err in error.errors()]
        raise ConfigValidationError(
            f"Invalid scenario configuration: {error.error_count()} error(s) in "
            f"{', '.join(fields)}",
            fields=fields,
        ) from error


def load_scenario_config(
    path: Union[str, pathlib.Path], overrides: Optional[dict[str, Any]] = None
) -> ScenarioConfig:
    path = pathlib.Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Scenario config not found ({path})")
    with open(path, "rb") as f:
        try:
            data = tomli.load(f)
        except tomli.TOMLDecodeError as error:
            raise ConfigValidationError(f"{path.name}: {error}", fields=[]) from error
    data.update({k: v for k, v in (overrides or {}).items() if v is not None})
    return build_config(data)


def with_overrides(config: ScenarioConfig, **overrides) -> ScenarioConfig:
    """A validated copy of `config` with top-level fields replaced."""
    data = config.model_dump()
    data.update({k: v for k, v in overrides.items() if v is not None})
    return build_config(data)


def apply_sweep_value(config: ScenarioConfig, axis: str, value) -> ScenarioConfig:
    if axis not in SWEEP_AXES:
        raise ConfigValidationError(
            f"Unknown sweep axis '{axis}', expected one of {sorted(SWEEP_AXES)}",
            fields=["sweep"],
        )
    return with_overrides(config, **{SWEEP_AXES[axis]: value})
