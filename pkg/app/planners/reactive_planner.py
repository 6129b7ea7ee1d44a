"""Reactive compensation: no anticipation, re-plan once a disturbance has been felt."""

from typing import List, Optional

import numpy as np

from app.models.schemas import ModelParams, PlanResult, PlanSpec, Strategy, TerrainProfile
from app.planners.base_planner import BasePlanner
from app.services.optimizer_service import WindowProblem


class ReactivePlanner(BasePlanner):
    """
    Push-offs stay nominal until the walker has landed on uneven ground.

    Push-off k happens before the collision onto step k, so a height change at
    step k is felt only at that landing and first acted on by push-off k+1.
    From then on push-offs come from a minimum-work plan of all remaining steps
    that regains nominal speed and total time N·T by the end of the walk.

    With `reactive_full_map` (the default) the first landing reveals the whole
    remaining terrain and the plan is made once. Without it, terrain not yet
    contacted is assumed level and every newly felt disturbance triggers a
    re-plan.
    """

    def __init__(self, spec: Optional[PlanSpec] = None, params: Optional[ModelParams] = None):
        super().__init__(
            name="reactive",
            description="Re-plan after disturbances are encountered",
            spec=spec or PlanSpec(strategy=Strategy.REACTIVE),
            params=params,
        )

    def plan(self, terrain: TerrainProfile) -> PlanResult:
        n = terrain.step_count
        full_map = self.spec.reactive_full_map
        deltas = self.walker.transitions(terrain)
        known = [0.0] * (n + 1)

        state = self.walker.initial_state()
        pushoffs: List[float] = []
        unconverged: List[int] = []
        iterations = 0
        plan = np.zeros(0)
        plan_start = 0
        contacted = False

        for k in range(n):
            # landing on step k-1 has just happened
            felt = k > 0 and deltas[k - 1] != 0.0
            replan = felt and not (full_map and contacted)
            if replan and full_map:
                known = list(deltas)
            elif felt:
                known[k - 1] = deltas[k - 1]
            contacted = contacted or felt

            if replan:
                tail = list(plan[k - plan_start:]) if plan.size else []
                problem = WindowProblem(
                    self.params,
                    v_start=state.pre_transition_speed,
                    deltas=known[k:],
                    target_time=n * self.params.nominal_step_time - state.cumulative_time,
                    target_speed=self.params.pre_transition_speed,
                )
                outcome = self.optimizer.solve(problem, candidates=[tail] if tail else ())
                iterations += outcome.iterations
                if not outcome.converged:
                    unconverged.append(k)
                    self.logger.warning(
                        "replan_not_converged",
                        position=k,
                        speed_residual=outcome.speed_residual,
                        time_residual=outcome.time_residual,
                        message=outcome.message,
                    )
                plan, plan_start = outcome.pushoffs, k
                self.logger.debug("replanned", position=k, remaining=n - k)

            u = float(plan[k - plan_start]) if contacted else self.params.nominal_pushoff
            pushoffs.append(u)
            state, _ = self.walker.step(state, u, deltas[k], deltas[k + 1])

        trajectory = self.walker.rollout(terrain, pushoffs)
        return self.finish(
            trajectory,
            unconverged_steps=unconverged,
            iterations=iterations,
            message=f"{len(unconverged)} re-plan(s) not converged" if unconverged else "",
        )
