"""Receding-horizon plan: optimise m upcoming steps, execute one, repeat."""

from typing import List, Optional

import numpy as np

from app.models.schemas import ModelParams, PlanResult, PlanSpec, Strategy, TerrainProfile
from app.planners.base_planner import BasePlanner
from app.services.optimizer_service import WindowProblem


class FiniteHorizonPlanner(BasePlanner):
    """
    At each step k the planner sees the heights of steps k..k+m-1 and assumes
    level ground beyond them. It minimises the window's work subject to
    regaining nominal timing, (k+m)·T of elapsed time, and by default nominal
    speed at the window end, then executes only the first push-off.

    Once a window reaches the end of the walk nothing new can come into view,
    so that plan is executed to the end without re-solving.
    """

    def __init__(self, spec: PlanSpec, params: Optional[ModelParams] = None):
        if spec.strategy != Strategy.HORIZON or spec.horizon is None:
            raise ValueError("finite-horizon planner needs a horizon:<m> strategy")
        super().__init__(
            name=f"horizon-{spec.horizon}",
            description=f"Receding horizon of {spec.horizon} steps",
            spec=spec,
            params=params,
        )
        self.horizon = spec.horizon

    def plan(self, terrain: TerrainProfile) -> PlanResult:
        n = terrain.step_count
        nominal_time = self.params.nominal_step_time
        nominal_pushoff = self.params.nominal_pushoff
        target_speed = self.params.pre_transition_speed if self.spec.terminal_speed else None
        deltas = self.walker.transitions(terrain)

        state = self.walker.initial_state()
        pushoffs: List[float] = []
        unconverged: List[int] = []
        iterations = 0
        plan = np.zeros(0)
        plan_start = 0
        reaches_end = False

        for k in range(n):
            if not reaches_end:
                width = min(self.horizon, n - k)
                ends_walk = k + width == n
                window = list(deltas[k:k + width]) + [deltas[n] if ends_walk else 0.0]
                tail = list(plan[k - plan_start:]) if plan.size else []
                warm = (tail + [nominal_pushoff] * width)[:width]

                problem = WindowProblem(
                    self.params,
                    v_start=state.pre_transition_speed,
                    deltas=window,
                    target_time=(k + width) * nominal_time - state.cumulative_time,
                    target_speed=target_speed,
                )
                outcome = self.optimizer.solve(problem, candidates=[warm] if tail else ())
                iterations += outcome.iterations
                if not outcome.converged:
                    unconverged.append(k)
                    self.logger.warning(
                        "window_not_converged",
                        position=k,
                        width=width,
                        speed_residual=outcome.speed_residual,
                        time_residual=outcome.time_residual,
                        message=outcome.message,
                    )
                plan, plan_start, reaches_end = outcome.pushoffs, k, ends_walk

            u = float(plan[k - plan_start])
            pushoffs.append(u)
            state, _ = self.walker.step(state, u, deltas[k], deltas[k + 1])

        trajectory = self.walker.rollout(terrain, pushoffs)
        return self.finish(
            trajectory,
            unconverged_steps=unconverged,
            iterations=iterations,
            message=f"{len(unconverged)} window(s) not converged" if unconverged else "",
        )
