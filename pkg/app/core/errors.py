"""Exception hierarchy shared by the walker, planners, analysis and CLI."""

from typing import Optional


class GaitPlannerError(Exception):
    """Base class for all application errors."""


class ConfigError(GaitPlannerError):
    """Invalid run configuration or configuration file."""


class DynamicsError(GaitPlannerError):
    """A step of the walker cannot be evaluated (sqrt/log argument out of domain)."""

    def __init__(self, message: str, position: Optional[int] = None, index: Optional[int] = None):
        super().__init__(message)
        self.message = message
        self.position = position
        self.index = index

    def at(self, position: int, index: Optional[int] = None) -> "DynamicsError":
        """
        Return a copy located on a step.

        Args:
            position: 0-based position in the padded walk
            index: Step index i, 0 being the first uneven step
        """
        return type(self)(self.message, position=position, index=index)

    def __str__(self) -> str:
        if self.position is None:
            return self.message
        if self.index is None:
            return f"position {self.position}: {self.message}"
        return f"step i={self.index} (position {self.position}): {self.message}"


class NegativePushoffError(DynamicsError):
    """Push-off work below zero."""


class FallBackwardError(DynamicsError):
    """Post-transition speed too low for the pendulum to pass the landing angle."""


class InsufficientMomentumError(DynamicsError):
    """The pendulum cannot reach the next landing configuration."""


class MidstanceNotReachedError(DynamicsError):
    """The pendulum does not reach the vertical before falling back."""


class TerrainTooSteepError(DynamicsError):
    """Height difference between successive steps is not smaller than the step length."""


class TerrainSyntaxError(GaitPlannerError):
    """Malformed terrain file."""

    def __init__(self, message: str, line: int, column: int = 1):
        super().__init__(f"line {line}, column {column}: {message}")
        self.line = line
        self.column = column


class SeriesFormatError(GaitPlannerError):
    """Malformed speed-series CSV."""


class AnalysisError(GaitPlannerError):
    """Statistics cannot be computed for the given series."""


class SolverError(GaitPlannerError):
    """The optimizer could not produce a plan."""


class InfeasibleTerrainError(SolverError):
    """No dynamically feasible push-off sequence could be found to start from."""
