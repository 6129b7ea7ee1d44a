"""Base class for all push-off planners."""

import time
from abc import ABC, abstractmethod
from typing import Optional, Sequence

from app.models.schemas import (
    ConstraintResiduals,
    GaitTrajectory,
    ModelParams,
    PlanResult,
    PlanSpec,
    TerrainProfile,
)
from app.services.optimizer_service import OptimizerService
from app.services.walker_service import WalkerService, located
from app.utils.logger import get_logger


class BasePlanner(ABC):
    """Base class for all push-off planners."""

    def __init__(self, name: str, description: str, spec: PlanSpec, params: Optional[ModelParams] = None):
        """Initialize planner."""
        self.name = name
        self.description = description
        self.spec = spec
        self.params = params or ModelParams.from_settings()
        self.walker = WalkerService(self.params)
        self.optimizer = OptimizerService(self.params, spec.solver)
        self.logger = get_logger(f"planner.{name}")

    @abstractmethod
    def plan(self, terrain: TerrainProfile) -> PlanResult:
        """Compute push-offs for the terrain and roll them out."""
        pass

    def residuals(self, trajectory: GaitTrajectory) -> ConstraintResiduals:
        """Terminal-speed and total-time errors against the nominal gait."""
        n = len(trajectory.steps)
        return ConstraintResiduals(
            terminal_speed=trajectory.final_speed - self.params.pre_transition_speed,
            total_time=trajectory.total_time - n * self.params.nominal_step_time,
        )

    def finish(
        self,
        trajectory: GaitTrajectory,
        solved: bool = True,
        unconverged_steps: Sequence[int] = (),
        iterations: int = 0,
        message: str = "",
    ) -> PlanResult:
        """Wrap a trajectory; converged only when both terminal equalities hold."""
        residuals = self.residuals(trajectory)
        within = residuals.max_abs <= self.spec.solver.constraint_tolerance
        return PlanResult(
            strategy=self.spec.label,
            trajectory=trajectory,
            converged=solved and within and not unconverged_steps,
            constraint_residuals=residuals,
            iterations=iterations,
            unconverged_steps=tuple(unconverged_steps),
            message=message or ("converged" if within else "terminal constraints not met"),
        )

    def run(self, terrain: TerrainProfile) -> PlanResult:
        """Run the planner on a terrain."""
        self.logger.info(
            "Planner starting",
            planner=self.name,
            terrain=terrain.name,
            steps=terrain.step_count,
        )
        started = time.perf_counter()

        try:
            with located(terrain):
                result = self.plan(terrain)
            self.logger.info(
                "Planner completed",
                planner=self.name,
                terrain=terrain.name,
                total_work=result.trajectory.total_work,
                work_excess=result.work_excess,
                converged=result.converged,
                terminal_speed_residual=result.constraint_residuals.terminal_speed,
                total_time_residual=result.constraint_residuals.total_time,
                iterations=result.iterations,
                elapsed_s=round(time.perf_counter() - started, 4),
            )
            return result
        except Exception as e:
            self.logger.error(
                "Planner failed",
                planner=self.name,
                terrain=terrain.name,
                error=str(e),
                exc_info=True,
            )
            raise
