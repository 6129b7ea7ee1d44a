"""Configuration management for GaitPlanner."""

from functools import lru_cache

from pydantic import field_validator
from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    """Application settings."""

    model_config = SettingsConfigDict(
        env_file=".env",
        env_file_encoding="utf-8",
        case_sensitive=False,
        extra="ignore"
    )

    # Application
    APP_NAME: str = "GaitPlanner"
    APP_VERSION: str = "1.0.0"
    DEBUG: bool = False
    LOG_LEVEL: str = "WARNING"
    LOG_JSON: bool = True

    @field_validator("LOG_LEVEL", mode="before")
    @classmethod
    def normalize_log_level(cls, v: str) -> str:
        return str(v).upper()

    # Walker model (dimensionless unless suffixed)
    MODEL_ALPHA: float = 0.41
    MODEL_PUSHOFF: float = 0.0342
    MODEL_STEP_LENGTH: float = 0.79
    LEG_LENGTH_M: float = 1.0
    GRAVITY: float = 9.81
    NOMINAL_SPEED_MPS: float = 1.5

    # Preferred step length S ~ v^exponent, anchored at (speed, step)
    PREFERRED_STEP_EXPONENT: float = 0.42
    PREFERRED_ANCHOR_SPEED_MPS: float = 1.5
    PREFERRED_ANCHOR_STEP_M: float = 0.79

    # Terrain
    TERRAIN_UNIT_HEIGHT: float = 0.075
    TERRAIN_PADDING: int = 6
    TERRAIN_MAX_STEP_DELTA: int = 1

    # Solver
    SOLVER_CONSTRAINT_TOLERANCE: float = 1e-8
    SOLVER_OPTIMALITY_TOLERANCE: float = 1e-8
    SOLVER_MAX_ITERATIONS: int = 500
    SOLVER_PUSHOFF_UPPER_BOUND: float = 10.0
    SOLVER_GRADIENT_STEP: float = 1e-7
    SOLVER_INITIAL_PENALTY: float = 10.0
    SOLVER_PENALTY_GROWTH: float = 10.0
    SOLVER_MAX_PENALTY: float = 1e8
    SOLVER_MAX_OUTER_ITERATIONS: int = 40

    # Planner switches
    REACTIVE_FULL_MAP: bool = True
    TIGHT_PREVIEW: bool = False
    HORIZON_TERMINAL_SPEED: bool = True

    # Analysis
    ANALYSIS_N_SHUFFLES: int = 1000
    ANALYSIS_SEED: int = 0
    ANALYSIS_SCALE_FLOOR: float = 1e-6

    # Sweeps
    SWEEP_WORKERS: int = 1


@lru_cache()
def get_settings() -> Settings:
    """Get cached settings instance."""
    return Settings()


settings = get_settings()
