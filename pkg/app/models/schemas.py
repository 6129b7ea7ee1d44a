"""Pydantic models for the walker, terrains, plans and comparisons."""

import math
from enum import Enum
from typing import List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, computed_field, field_validator, model_validator

from app.config import settings


# Enums
class Strategy(str, Enum):
    """Push-off planning strategy."""
    NOMINAL = "nominal"
    TIGHT = "tight"
    REACTIVE = "reactive"
    MIN_ENERGY = "min-energy"
    HORIZON = "horizon"


class SpeedUnit(str, Enum):
    """Unit flag carried by speed series."""
    DIMENSIONLESS = "dimensionless"
    M_PER_S = "m_per_s"


# Base Models
class BaseSchema(BaseModel):
    """Base schema with common configurations."""
    model_config = ConfigDict(from_attributes=True, frozen=True)


def preferred_step_length(speed_mps: float) -> float:
    """Preferred step length (m) at a walking speed, S ~ v^0.42 through the configured anchor."""
    if speed_mps <= 0:
        raise ValueError("speed must be positive")
    ratio = speed_mps / settings.PREFERRED_ANCHOR_SPEED_MPS
    return settings.PREFERRED_ANCHOR_STEP_M * ratio ** settings.PREFERRED_STEP_EXPONENT


# Walker Models
class ModelParams(BaseSchema):
    """
    Dimensionless walker constants (base units M, g, L) plus the physical
    leg length and gravity used only for SI conversion.

    The nominal pre-transition speed, step time and mid-stance speed are
    derived from the level-ground fixed point of the step-to-step map, so the
    nominal gait is periodic to machine precision.
    """

    alpha: float = Field(default=0.41, gt=0.0, lt=math.pi / 2)
    nominal_pushoff: float = Field(default=0.0342, gt=0.0)
    step_length: float = Field(default=0.79, gt=0.0)
    leg_length: float = Field(default=1.0, gt=0.0)
    gravity: float = Field(default=9.81, gt=0.0)

    @model_validator(mode="after")
    def check_nominal_gait(self) -> "ModelParams":
        if self.pre_transition_speed <= self.alpha:
            raise ValueError(
                "nominal push-off too small: the level fixed-point speed does not exceed alpha"
            )
        return self

    @computed_field  # type: ignore[prop-decorator]
    @property
    def pre_transition_speed(self) -> float:
        """Fixed point v* of v -> v cos2a + sqrt(2u*) sin2a on level ground."""
        two_alpha = 2.0 * self.alpha
        return math.sqrt(2.0 * self.nominal_pushoff) * math.sin(two_alpha) / (1.0 - math.cos(two_alpha))

    @computed_field  # type: ignore[prop-decorator]
    @property
    def nominal_step_time(self) -> float:
        v = self.pre_transition_speed
        return math.log((self.alpha + v) / (v - self.alpha))

    @computed_field  # type: ignore[prop-decorator]
    @property
    def nominal_midstance_speed(self) -> float:
        v = self.pre_transition_speed
        return math.sqrt(v * v - self.alpha * self.alpha)

    @property
    def average_speed(self) -> float:
        """Step length over step time (dimensionless)."""
        return self.step_length / self.nominal_step_time

    # Unit conversion
    @property
    def speed_scale(self) -> float:
        return math.sqrt(self.gravity * self.leg_length)

    @property
    def time_scale(self) -> float:
        return math.sqrt(self.leg_length / self.gravity)

    @property
    def work_scale(self) -> float:
        """J per kg of body mass for one MgL."""
        return self.gravity * self.leg_length

    def to_si_speed(self, v: float) -> float:
        return v * self.speed_scale

    def from_si_speed(self, v_mps: float) -> float:
        return v_mps / self.speed_scale

    def to_si_time(self, t: float) -> float:
        return t * self.time_scale

    def from_si_time(self, t_s: float) -> float:
        return t_s / self.time_scale

    def to_si_work(self, w: float) -> float:
        return w * self.work_scale

    def from_si_work(self, w_jkg: float) -> float:
        return w_jkg / self.work_scale

    @classmethod
    def from_settings(cls) -> "ModelParams":
        """Nominal parameters from application settings."""
        return cls(
            alpha=settings.MODEL_ALPHA,
            nominal_pushoff=settings.MODEL_PUSHOFF,
            step_length=settings.MODEL_STEP_LENGTH,
            leg_length=settings.LEG_LENGTH_M,
            gravity=settings.GRAVITY,
        )

    @classmethod
    def from_gait(
        cls,
        speed_mps: float,
        step_length_m: float,
        alpha: Optional[float] = None,
        leg_length: float = 1.0,
        gravity: float = 9.81,
    ) -> "ModelParams":
        """
        Derive parameters for a walker with a given average speed and step length.

        Args:
            speed_mps: Average walking speed (m/s)
            step_length_m: Step length (m)
            alpha: Inter-leg half-angle; defaults to asin(S / 2)
            leg_length: Leg length (m)
            gravity: Gravitational acceleration (m/s^2)

        Returns:
            Parameters whose level gait takes steps of time S / v
        """
        if speed_mps <= 0 or step_length_m <= 0:
            raise ValueError("speed and step length must be positive")
        step = step_length_m / leg_length
        if alpha is None:
            if step >= 2.0:
                raise ValueError("step length must be shorter than two leg lengths")
            alpha = math.asin(step / 2.0)
        speed = speed_mps / math.sqrt(gravity * leg_length)
        step_time = step / speed
        v_plus = alpha / math.tanh(step_time / 2.0)
        two_alpha = 2.0 * alpha
        pushoff = 0.5 * (v_plus * (1.0 - math.cos(two_alpha)) / math.sin(two_alpha)) ** 2
        return cls(
            alpha=alpha,
            nominal_pushoff=pushoff,
            step_length=step,
            leg_length=leg_length,
            gravity=gravity,
        )


class StepState(BaseSchema):
    """Walker state entering a step, before its transition."""
    pre_transition_speed: float = Field(gt=0.0)
    cumulative_time: float = Field(default=0.0, ge=0.0)
    position: int = Field(default=0, ge=0, description="0-based padded position of the next step")


class StepRecord(BaseSchema):
    """Everything the walker does during one step."""
    position: int = Field(ge=0, description="0-based position in the padded walk")
    index: int = Field(description="Step index, 0 = first uneven step")
    height_multiple: int
    height: float
    disturbance: float
    pushoff: float = Field(ge=0.0)
    pre_transition_speed: float = Field(gt=0.0)
    post_transition_speed: float = Field(gt=0.0)
    step_time: float = Field(gt=0.0)
    midstance_speed: float
    midstance_time: float
    time_gain: float


class GaitTrajectory(BaseSchema):
    """Per-step records of one walk plus work and time totals."""
    params: ModelParams
    terrain_name: str = ""
    steps: Tuple[StepRecord, ...] = ()
    final_speed: float = Field(description="Pre-transition speed after the last step")

    @field_validator("steps")
    @classmethod
    def check_contiguous(cls, v: Tuple[StepRecord, ...]) -> Tuple[StepRecord, ...]:
        for expected, record in enumerate(v):
            if record.position != expected:
                raise ValueError("step positions must be contiguous from 0")
        return v

    @computed_field  # type: ignore[prop-decorator]
    @property
    def total_work(self) -> float:
        return float(math.fsum(s.pushoff for s in self.steps))

    @computed_field  # type: ignore[prop-decorator]
    @property
    def total_time(self) -> float:
        return float(math.fsum(s.step_time for s in self.steps))

    @property
    def nominal_work(self) -> float:
        return len(self.steps) * self.params.nominal_pushoff

    @property
    def work_excess(self) -> float:
        """Fraction of work above N nominal push-offs."""
        if not self.steps:
            return 0.0
        return self.total_work / self.nominal_work - 1.0

    @property
    def final_time_gain(self) -> float:
        return self.steps[-1].time_gain if self.steps else 0.0

    @property
    def indices(self) -> np.ndarray:
        return np.array([s.index for s in self.steps], dtype=int)

    @property
    def pushoffs(self) -> np.ndarray:
        return np.array([s.pushoff for s in self.steps], dtype=float)

    @property
    def midstance_speeds(self) -> np.ndarray:
        return np.array([s.midstance_speed for s in self.steps], dtype=float)


# Terrain Models
class TerrainProfile(BaseSchema):
    """Named sequence of integer step-height multiples with level padding."""
    name: str = Field(min_length=1)
    unit_height: float = Field(default=0.075, gt=0.0)
    height_multiples: Tuple[int, ...] = ()
    pad_before: int = Field(default=6, ge=0)
    pad_after: int = Field(default=6, ge=0)
    sustain: bool = Field(default=False, description="Keep the last multiple through pad_after")

    @property
    def step_count(self) -> int:
        return self.pad_before + len(self.height_multiples) + self.pad_after

    @property
    def final_level(self) -> int:
        if self.sustain and self.height_multiples:
            return self.height_multiples[-1]
        return 0

    @property
    def padded_multiples(self) -> Tuple[int, ...]:
        return (
            (0,) * self.pad_before
            + tuple(self.height_multiples)
            + (self.final_level,) * self.pad_after
        )

    @property
    def padded_heights(self) -> Tuple[float, ...]:
        return tuple(m * self.unit_height for m in self.padded_multiples)

    @property
    def max_step_delta(self) -> int:
        previous = 0
        largest = 0
        for m in self.padded_multiples:
            largest = max(largest, abs(m - previous))
            previous = m
        return largest


class CatalogEntry(BaseSchema):
    """Built-in terrain with a flag telling whether its geometry is canonical."""
    profile: TerrainProfile
    canonical: bool
    description: str


# Planner Models
class SolverSettings(BaseSchema):
    """Augmented-Lagrangian solver settings."""
    constraint_tolerance: float = Field(default=1e-8, gt=0.0)
    optimality_tolerance: float = Field(default=1e-8, gt=0.0)
    max_iterations: int = Field(default=500, gt=0)
    pushoff_upper_bound: float = Field(default=10.0, gt=0.0, description="Multiple of nominal push-off")
    gradient_step: float = Field(default=1e-7, gt=0.0)
    initial_penalty: float = Field(default=10.0, gt=0.0)
    penalty_growth: float = Field(default=10.0, gt=1.0)
    max_penalty: float = Field(default=1e8, gt=0.0)
    max_outer_iterations: int = Field(default=40, gt=0)

    @classmethod
    def from_settings(cls) -> "SolverSettings":
        return cls(
            constraint_tolerance=settings.SOLVER_CONSTRAINT_TOLERANCE,
            optimality_tolerance=settings.SOLVER_OPTIMALITY_TOLERANCE,
            max_iterations=settings.SOLVER_MAX_ITERATIONS,
            pushoff_upper_bound=settings.SOLVER_PUSHOFF_UPPER_BOUND,
            gradient_step=settings.SOLVER_GRADIENT_STEP,
            initial_penalty=settings.SOLVER_INITIAL_PENALTY,
            penalty_growth=settings.SOLVER_PENALTY_GROWTH,
            max_penalty=settings.SOLVER_MAX_PENALTY,
            max_outer_iterations=settings.SOLVER_MAX_OUTER_ITERATIONS,
        )


class PlanSpec(BaseSchema):
    """Strategy selector plus solver settings."""
    strategy: Strategy
    horizon: Optional[int] = Field(default=None, ge=1)
    solver: SolverSettings = Field(default_factory=SolverSettings.from_settings)
    reactive_full_map: bool = Field(default_factory=lambda: settings.REACTIVE_FULL_MAP)
    tight_preview: bool = Field(default_factory=lambda: settings.TIGHT_PREVIEW)
    terminal_speed: bool = Field(default_factory=lambda: settings.HORIZON_TERMINAL_SPEED)

    @model_validator(mode="after")
    def check_horizon(self) -> "PlanSpec":
        if self.strategy == Strategy.HORIZON and self.horizon is None:
            raise ValueError("finite-horizon strategy needs a horizon m >= 1")
        if self.strategy != Strategy.HORIZON and self.horizon is not None:
            raise ValueError("only the finite-horizon strategy takes a horizon")
        return self

    @property
    def label(self) -> str:
        if self.strategy == Strategy.HORIZON:
            return f"horizon:{self.horizon}"
        return self.strategy.value

    @classmethod
    def parse(cls, text: str, **kwargs) -> "PlanSpec":
        """Parse `nominal`, `tight`, `reactive`, `min-energy` or `horizon:<m>`."""
        name, _, arg = text.strip().lower().partition(":")
        aliases = {"min_energy": "min-energy", "min_energy_full": "min-energy", "full": "min-energy",
                   "finite_horizon": "horizon", "finite-horizon": "horizon"}
        name = aliases.get(name, name)
        try:
            strategy = Strategy(name)
        except ValueError:
            raise ValueError(f"unknown strategy {text!r}") from None
        if strategy == Strategy.HORIZON:
            if not arg:
                raise ValueError("horizon strategy needs a step count, e.g. horizon:8")
            return cls(strategy=strategy, horizon=int(arg), **kwargs)
        if arg:
            raise ValueError(f"strategy {name!r} takes no argument")
        return cls(strategy=strategy, **kwargs)


class ConstraintResiduals(BaseSchema):
    """Terminal-speed and total-time equality errors."""
    terminal_speed: float
    total_time: float

    @property
    def max_abs(self) -> float:
        return max(abs(self.terminal_speed), abs(self.total_time))


class PlanResult(BaseSchema):
    """Outcome of one planner run."""
    strategy: str
    trajectory: GaitTrajectory
    converged: bool
    constraint_residuals: ConstraintResiduals
    iterations: int = 0
    unconverged_steps: Tuple[int, ...] = ()
    message: str = ""

    @computed_field  # type: ignore[prop-decorator]
    @property
    def work_excess(self) -> float:
        return self.trajectory.work_excess


# Analysis Models
class SpeedSeries(BaseSchema):
    """Per-step speeds of one subject (or model) on one terrain."""
    label: str = Field(min_length=1)
    terrain: str = Field(min_length=1)
    step_indices: Tuple[int, ...]
    speeds: Tuple[float, ...]
    unit: SpeedUnit = SpeedUnit.DIMENSIONLESS

    @model_validator(mode="after")
    def check_alignment(self) -> "SpeedSeries":
        if len(self.step_indices) != len(self.speeds):
            raise ValueError("step_indices and speeds differ in length")
        if any(b <= a for a, b in zip(self.step_indices, self.step_indices[1:])):
            raise ValueError("step indices must be strictly increasing")
        return self

    @property
    def values(self) -> np.ndarray:
        return np.asarray(self.speeds, dtype=float)

    @property
    def fluctuations(self) -> np.ndarray:
        values = self.values
        if values.size == 0:
            return values
        return values - values.mean()

    @classmethod
    def from_trajectory(cls, trajectory: GaitTrajectory, label: str = "model") -> "SpeedSeries":
        """Mid-stance speeds of a trajectory, indexed from the first uneven step."""
        return cls(
            label=label,
            terrain=trajectory.terrain_name or "unnamed",
            step_indices=tuple(int(i) for i in trajectory.indices),
            speeds=tuple(float(v) for v in trajectory.midstance_speeds),
        )


class ComparisonReport(BaseSchema):
    """Model-vs-data similarity and information statistics."""
    pearson_rho: float = Field(ge=-1.0, le=1.0)
    n_points: int
    p_value: float
    rho_ci_low: Optional[float] = None
    rho_ci_high: Optional[float] = None
    slope: float
    intercept: float
    loglik_model: float
    llr_mean: float
    llr_sd: float
    llr_per_step_mean: float
    llr_per_step_sd: float
    bits_per_step: float
    bayes_factor: float
    log10_bayes_factor: float
    n_steps: int
    n_subjects: int
    dof: float
    n_shuffles: int
    seed: int
    scale_floor: float
    floored_steps: int = 0


class HorizonSweepRow(BaseSchema):
    """One horizon length of a sweep."""
    m: int = Field(ge=1)
    work_excess: float
    rho_vs_full: float
    converged: bool


class StrategySummary(BaseSchema):
    """One row of a strategy comparison; numbers are empty when the strategy failed."""
    strategy: str
    total_work: Optional[float] = None
    work_excess: Optional[float] = None
    total_time: Optional[float] = None
    final_time_gain: Optional[float] = None
    converged: bool = False
    message: str = ""


class GridCell(BaseSchema):
    """One speed/step-length combination of the parameter grid."""
    speed_mps: float
    step_length_m: float
    policy: str
    feasible: bool
    converged: bool = False
    work_excess: Optional[float] = None
    normalized_speeds: Tuple[float, ...] = ()
    message: str = ""


class ParameterGridResult(BaseSchema):
    """Normalised profiles and pairwise correlations of the converged cells."""
    terrain: str
    cells: Tuple[GridCell, ...]
    correlations: Tuple[Tuple[float, ...], ...]

    @property
    def compared(self) -> List[GridCell]:
        """Cells behind the correlation matrix, in its row order."""
        return [c for c in self.cells if c.feasible and c.converged]

    @property
    def min_correlation(self) -> float:
        values: List[float] = [
            c for i, row in enumerate(self.correlations) for j, c in enumerate(row) if i != j
        ]
        return min(values) if values else 1.0
