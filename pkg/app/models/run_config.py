"""Command-line run configuration: flags, optional `key = value` file, derived model."""

import hashlib
import json
import math
from enum import Enum
from pathlib import Path
from typing import Any, Dict, Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from app.config import settings
from app.core.errors import ConfigError
from app.models.schemas import ModelParams, PlanSpec, SolverSettings, preferred_step_length
from app.utils.kvparse import parse_assignments

HASH_LENGTH = 12
CONFIG_KEYS = (
    "alpha", "speed", "step_length", "policy", "leg_length", "pad",
    "seed", "out", "format", "terrain", "terrain_file", "strategy",
)


class OutputFormat(str, Enum):
    """Output file format."""
    CSV = "csv"
    JSON = "json"


class RunConfig(BaseModel):
    """Validated run configuration; speeds and lengths are in SI units here."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    alpha: Optional[float] = Field(default=None, gt=0.0, lt=math.pi / 2)
    speed: Optional[float] = Field(default=None, gt=0.0, description="Nominal walking speed (m/s)")
    step_length: Optional[float] = Field(default=None, gt=0.0, description="Step length (m)")
    policy: Optional[str] = Field(default=None, description="fixed:<m> or preferred")
    leg_length: float = Field(default_factory=lambda: settings.LEG_LENGTH_M, gt=0.0)
    pad: Optional[int] = Field(default=None, ge=0)
    seed: int = Field(default_factory=lambda: settings.ANALYSIS_SEED)
    out: Optional[str] = None
    format: OutputFormat = OutputFormat.CSV
    terrain: Optional[str] = None
    terrain_file: Optional[str] = None
    strategy: str = "min-energy"

    @field_validator("policy")
    @classmethod
    def check_policy(cls, v: Optional[str]) -> Optional[str]:
        if v is None or v == "preferred":
            return v
        kind, sep, value = v.partition(":")
        if kind != "fixed":
            raise ValueError("policy must be 'preferred' or 'fixed:<meters>'")
        if sep:
            try:
                length = float(value)
            except ValueError:
                raise ValueError(f"step length {value!r} in policy is not a number") from None
            if length <= 0:
                raise ValueError("fixed step length must be positive")
        return v

    @model_validator(mode="after")
    def check_sources(self) -> "RunConfig":
        if self.terrain is not None and self.terrain_file is not None:
            raise ValueError("give either terrain or terrain_file, not both")
        if self.policy == "preferred" and self.step_length is not None:
            raise ValueError("the preferred policy derives the step length; do not also set step_length")
        return self

    def require_terrain(self) -> None:
        if self.terrain is None and self.terrain_file is None:
            raise ConfigError("a terrain is required: --terrain NAME or --terrain-file PATH")

    @property
    def derives_gait(self) -> bool:
        return any(v is not None for v in (self.alpha, self.speed, self.step_length, self.policy))

    def resolved_step_length(self, speed_mps: float) -> float:
        if self.policy == "preferred":
            return preferred_step_length(speed_mps)
        if self.policy and ":" in self.policy:
            return float(self.policy.split(":", 1)[1])
        if self.step_length is not None:
            return self.step_length
        return settings.MODEL_STEP_LENGTH * self.leg_length

    def model_params(self) -> ModelParams:
        """Nominal walker unless a gait override is present, then derived from speed and step length."""
        try:
            if not self.derives_gait:
                return ModelParams.from_settings().model_copy(update={"leg_length": self.leg_length})
            speed = self.speed if self.speed is not None else settings.NOMINAL_SPEED_MPS
            return ModelParams.from_gait(
                speed,
                self.resolved_step_length(speed),
                alpha=self.alpha,
                leg_length=self.leg_length,
                gravity=settings.GRAVITY,
            )
        except ValueError as e:
            raise ConfigError(f"invalid gait parameters: {e}") from e

    def plan_spec(self, solver: Optional[SolverSettings] = None, **kwargs: Any) -> PlanSpec:
        try:
            return PlanSpec.parse(self.strategy, solver=solver or SolverSettings.from_settings(), **kwargs)
        except ValueError as e:
            raise ConfigError(str(e)) from e

    def config_hash(self) -> str:
        """First hex digits of SHA-256 over the canonical JSON of everything except the output path."""
        canonical = json.dumps(
            self.model_dump(mode="json", exclude={"out"}),
            sort_keys=True,
            separators=(",", ":"),
        )
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:HASH_LENGTH]


def read_config_file(path: Path) -> Dict[str, str]:
    """
    Read a `key = value` run-config file.

    Args:
        path: Config file path

    Returns:
        Raw string values keyed by config key

    Raises:
        ConfigError: Unreadable file, syntax error or unknown key
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError(f"cannot read config file {path}: {e}") from e

    def syntax_error(message: str, line: int, column: int) -> ConfigError:
        return ConfigError(f"{path}:{line}:{column}: {message}")

    values: Dict[str, str] = {}
    for a in parse_assignments(text, syntax_error):
        key = a.key.replace("-", "_")
        if key not in CONFIG_KEYS:
            raise syntax_error(f"unknown key {a.key!r}", a.line, 1)
        values[key] = a.value
    return values


def build_run_config(file_values: Optional[Dict[str, Any]] = None, **overrides: Any) -> RunConfig:
    """Merge config-file values with flags; flags that are not None win."""
    merged: Dict[str, Any] = dict(file_values or {})
    merged.update({k: v for k, v in overrides.items() if v is not None})
    try:
        return RunConfig(**merged)
    except ValidationError as e:
        problems = "; ".join(
            f"{'.'.join(str(p) for p in err['loc']) or 'config'}: {err['msg']}" for err in e.errors()
        )
        raise ConfigError(f"invalid configuration: {problems}") from e
