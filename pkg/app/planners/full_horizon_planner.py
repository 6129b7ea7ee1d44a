"""Minimum-energy plan with the whole terrain known in advance."""

from typing import Optional

from app.models.schemas import ModelParams, PlanResult, PlanSpec, Strategy, TerrainProfile
from app.planners.base_planner import BasePlanner
from app.services.optimizer_service import WindowProblem


class FullHorizonPlanner(BasePlanner):
    """Optimises all N push-offs jointly for nominal terminal speed and total time."""

    def __init__(self, spec: Optional[PlanSpec] = None, params: Optional[ModelParams] = None):
        super().__init__(
            name="min-energy",
            description="Full-horizon minimum push-off work",
            spec=spec or PlanSpec(strategy=Strategy.MIN_ENERGY),
            params=params,
        )

    def plan(self, terrain: TerrainProfile) -> PlanResult:
        n = terrain.step_count
        if n == 0:
            return self.finish(self.walker.rollout(terrain, []), message="empty terrain")

        problem = WindowProblem(
            self.params,
            v_start=self.params.pre_transition_speed,
            deltas=self.walker.transitions(terrain),
            target_time=n * self.params.nominal_step_time,
            target_speed=self.params.pre_transition_speed,
        )
        outcome = self.optimizer.solve(problem)
        trajectory = self.walker.rollout(terrain, outcome.pushoffs)
        return self.finish(
            trajectory,
            solved=outcome.converged,
            iterations=outcome.iterations,
            message=outcome.message,
        )
