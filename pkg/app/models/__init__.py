"""Models package."""

from app.models.run_config import OutputFormat, RunConfig, build_run_config, read_config_file
from app.models.schemas import (
    CatalogEntry,
    ComparisonReport,
    ConstraintResiduals,
    GaitTrajectory,
    GridCell,
    HorizonSweepRow,
    ModelParams,
    ParameterGridResult,
    PlanResult,
    PlanSpec,
    SolverSettings,
    SpeedSeries,
    SpeedUnit,
    StepRecord,
    StepState,
    Strategy,
    StrategySummary,
    TerrainProfile,
    preferred_step_length,
)

__all__ = [
    # Walker
    "ModelParams",
    "StepState",
    "StepRecord",
    "GaitTrajectory",
    "preferred_step_length",
    # Terrain
    "TerrainProfile",
    "CatalogEntry",
    # Planning
    "Strategy",
    "PlanSpec",
    "SolverSettings",
    "ConstraintResiduals",
    "PlanResult",
    "StrategySummary",
    # Analysis
    "SpeedUnit",
    "SpeedSeries",
    "ComparisonReport",
    "HorizonSweepRow",
    "GridCell",
    "ParameterGridResult",
    # Run configuration
    "OutputFormat",
    "RunConfig",
    "build_run_config",
    "read_config_file",
]
