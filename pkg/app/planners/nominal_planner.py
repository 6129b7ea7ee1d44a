"""Nominal push-off on every step, no compensation."""

from typing import Optional

from app.models.schemas import ModelParams, PlanResult, PlanSpec, Strategy, TerrainProfile
from app.planners.base_planner import BasePlanner


class NominalPlanner(BasePlanner):
    """Constant nominal push-off; terminal constraints are reported, not enforced."""

    def __init__(self, spec: Optional[PlanSpec] = None, params: Optional[ModelParams] = None):
        super().__init__(
            name="nominal",
            description="Nominal push-off on every step",
            spec=spec or PlanSpec(strategy=Strategy.NOMINAL),
            params=params,
        )

    def plan(self, terrain: TerrainProfile) -> PlanResult:
        pushoffs = [self.params.nominal_pushoff] * terrain.step_count
        trajectory = self.walker.rollout(terrain, pushoffs)
        return self.finish(trajectory, message="nominal push-offs")
