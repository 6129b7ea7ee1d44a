"""Tight regulation: hold every step to nominal timing, one step at a time."""

from typing import List, Optional

from app.core.errors import DynamicsError
from app.models.schemas import ModelParams, PlanResult, PlanSpec, Strategy, TerrainProfile
from app.planners.base_planner import BasePlanner
from app.services.optimizer_service import solve_step_timing


class TightPlanner(BasePlanner):
    """
    Chooses each push-off by root-finding so that the walk is back on the
    nominal clock, (k+1)·T, when step k ends.

    The controller looks one step ahead: it knows the height of the step it is
    about to land on and assumes the following landing is level. A step that
    ends early or late because of that guess is made up on the next step.
    With `tight_preview` it also sees the following landing, so every step
    takes exactly T.

    Steps whose timing cannot be met inside the push-off bounds are clamped
    and listed in `unconverged_steps`.
    """

    def __init__(self, spec: Optional[PlanSpec] = None, params: Optional[ModelParams] = None):
        super().__init__(
            name="tight",
            description="Nominal step timing by per-step push-off adjustment",
            spec=spec or PlanSpec(strategy=Strategy.TIGHT),
            params=params,
        )

    def plan(self, terrain: TerrainProfile) -> PlanResult:
        nominal_time = self.params.nominal_step_time
        preview = self.spec.tight_preview
        deltas = self.walker.transitions(terrain)
        state = self.walker.initial_state()
        pushoffs: List[float] = []
        clamped: List[int] = []

        for p in range(terrain.step_count):
            try:
                root = solve_step_timing(
                    state.pre_transition_speed,
                    deltas[p],
                    deltas[p + 1] if preview else 0.0,
                    (p + 1) * nominal_time - state.cumulative_time,
                    self.params.alpha,
                    self.optimizer.upper,
                )
            except DynamicsError as e:
                raise e.at(p) from e
            if root.clamped:
                clamped.append(p)
                self.logger.warning("step_time_clamped", position=p, pushoff=root.pushoff)
            pushoffs.append(root.pushoff)
            state, _ = self.walker.step(state, root.pushoff, deltas[p], deltas[p + 1])

        trajectory = self.walker.rollout(terrain, pushoffs)
        result = self.finish(trajectory, message="per-step timing roots")
        if clamped:
            result = result.model_copy(update={"unconverged_steps": tuple(clamped), "converged": False})
        return result
