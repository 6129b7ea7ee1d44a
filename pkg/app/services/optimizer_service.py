"""Single-shooting push-off optimizer.

Minimises total push-off work over a window of steps subject to equality
constraints on the window's total step time and (optionally) its terminal
pre-transition speed. Equalities are handled by an augmented Lagrangian
(method of multipliers); each subproblem is a bound-constrained L-BFGS-B
solve in push-offs scaled by the nominal push-off.
"""

import math
from typing import List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import brentq, minimize

from app.core.errors import DynamicsError, InfeasibleTerrainError
from app.models.schemas import ModelParams, SolverSettings
from app.services.walker_service import advance, simulate_batch, step_time, transition
from app.utils.logger import get_logger

logger = get_logger(__name__)

INFEASIBLE_MERIT = 1e10
SUFFICIENT_DECREASE = 0.25
INNER_FTOL = 1e-15


class SolveOutcome(NamedTuple):
    """Result of one window solve."""
    pushoffs: np.ndarray
    speed_residual: float
    time_residual: float
    converged: bool
    iterations: int
    message: str


class TimingRoot(NamedTuple):
    """Push-off meeting a step-time target, and whether it had to be clamped."""
    pushoff: float
    clamped: bool


class WindowProblem:
    """
    Push-offs for steps k..k+w-1 from a known pre-transition speed.

    Args:
        params: Model parameters
        v_start: Pre-transition speed entering the window
        deltas: w + 1 disturbances (entry of each window step, then the step after)
        target_time: Required sum of window step times
        target_speed: Required pre-transition speed after the window, or None
    """

    def __init__(
        self,
        params: ModelParams,
        v_start: float,
        deltas: Sequence[float],
        target_time: float,
        target_speed: Optional[float],
    ):
        self.params = params
        self.v_start = float(v_start)
        self.deltas = np.asarray(deltas, dtype=float)
        self.width = len(self.deltas) - 1
        self.target_time = float(target_time)
        self.target_speed = None if target_speed is None else float(target_speed)
        self.scale = params.nominal_pushoff

    def residuals(self, scaled: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Speed and time residuals for a batch of scaled push-off rows."""
        v_end, elapsed, feasible = simulate_batch(
            np.atleast_2d(scaled) * self.scale, self.v_start, self.deltas, self.params.alpha
        )
        return v_end - (self.target_speed if self.target_speed is not None else 0.0), elapsed - self.target_time, feasible

    def constraints(self, scaled: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """Constraint values (batch, k) and feasibility (batch,)."""
        speed, time, feasible = self.residuals(scaled)
        if self.target_speed is None:
            return time[:, None], feasible
        return np.column_stack([speed, time]), feasible

    def jacobian(self, x: np.ndarray, step: float, upper: float) -> Tuple[np.ndarray, np.ndarray, bool]:
        """
        Constraint values and finite-difference Jacobian at x.

        Forward differences, with backward differences for any coordinate
        whose forward point is infeasible or above the bound.
        """
        w = x.size
        eye = np.eye(w) * step
        batch = np.vstack([x[None, :], x + eye, x - eye])
        values, feasible = self.constraints(batch)
        if not feasible[0]:
            return values[0], np.zeros((values.shape[1], w)), False

        base = values[0]
        forward_ok = feasible[1:w + 1] & (x + step <= upper)
        backward_ok = feasible[w + 1:] & (x - step >= 0.0)
        forward = (values[1:w + 1] - base) / step
        backward = (base - values[w + 1:]) / step
        columns = np.where(forward_ok[:, None], forward, np.where(backward_ok[:, None], backward, 0.0))
        return base, columns.T, True


def solve_step_timing(
    v_minus: float,
    delta: float,
    delta_next: float,
    target: float,
    alpha: float,
    upper: float,
) -> TimingRoot:
    """
    Push-off giving one step a target duration.

    Step time decreases with push-off, so the root is bracketed between the
    smallest push-off that avoids falling backward and the upper bound. When
    the target lies outside the reachable range the push-off is clamped.

    Raises:
        DynamicsError: Even the upper bound cannot complete the step
    """
    def duration(u: float) -> float:
        try:
            return step_time(transition(v_minus, u, alpha), delta, delta_next, alpha)
        except DynamicsError:
            return math.inf

    if not math.isfinite(duration(upper)):
        # surface the typed error from the most favourable push-off
        step_time(transition(v_minus, upper, alpha), delta, delta_next, alpha)
    if duration(upper) >= target:
        return TimingRoot(upper, duration(upper) > target)

    lower = 0.0
    if not math.isfinite(duration(lower)):
        shortfall = max(alpha + delta - v_minus * math.cos(2.0 * alpha), 0.0)
        lower = min(0.5 * (shortfall / math.sin(2.0 * alpha)) ** 2, upper)
        nudge = 1e-15 * (1.0 + lower)
        while not math.isfinite(duration(lower)) and lower < upper:
            lower = min(lower + nudge, upper)
            nudge *= 10.0
    if duration(lower) <= target:
        return TimingRoot(lower, duration(lower) < target)

    u = brentq(lambda z: duration(z) - target, lower, upper, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=200)
    return TimingRoot(float(u), False)


class OptimizerService:
    """Augmented-Lagrangian solver for push-off windows."""

    def __init__(self, params: ModelParams, solver: Optional[SolverSettings] = None):
        """
        Initialize optimizer service.

        Args:
            params: Model parameters
            solver: Tolerances, bounds and penalty schedule
        """
        self.params = params
        self.solver = solver or SolverSettings.from_settings()
        self.upper = self.solver.pushoff_upper_bound * params.nominal_pushoff

    def tight_sequence(self, v_start: float, deltas: Sequence[float]) -> np.ndarray:
        """Push-offs that keep every step at nominal duration over the given disturbances."""
        alpha = self.params.alpha
        target = self.params.nominal_step_time
        v = v_start
        pushoffs = []
        for j in range(len(deltas) - 1):
            root = solve_step_timing(v, deltas[j], deltas[j + 1], target, alpha, self.upper)
            pushoffs.append(root.pushoff)
            v = advance(v, root.pushoff, deltas[j], deltas[j + 1], alpha).v_end
        return np.array(pushoffs)

    def initial_guess(self, problem: WindowProblem, candidates: Sequence[Sequence[float]] = ()) -> np.ndarray:
        """
        First dynamically feasible start among the given candidates, all-nominal
        push-offs and the tight-regulation sequence.

        Raises:
            InfeasibleTerrainError: No candidate survives the window
        """
        w = problem.width
        options: List[np.ndarray] = [np.asarray(c, dtype=float) for c in candidates]
        options.append(np.full(w, self.params.nominal_pushoff))
        for guess in options:
            if guess.shape == (w,) and problem.residuals(guess / problem.scale)[2][0]:
                return guess

        logger.info("nominal_guess_infeasible", width=w, fallback="tight")
        try:
            guess = self.tight_sequence(problem.v_start, problem.deltas)
        except DynamicsError as e:
            raise InfeasibleTerrainError(f"no feasible initial push-offs: {e}") from e
        if not problem.residuals(guess / problem.scale)[2][0]:
            raise InfeasibleTerrainError("no feasible initial push-offs")
        return guess

    def solve_timing_only(self, problem: WindowProblem) -> SolveOutcome:
        """One-step window: meet the time target, leave the speed free."""
        root = solve_step_timing(
            problem.v_start,
            problem.deltas[0],
            problem.deltas[1],
            problem.target_time,
            self.params.alpha,
            self.upper,
        )
        speed, time, _ = problem.residuals(np.array([root.pushoff / problem.scale]))
        return SolveOutcome(
            pushoffs=np.array([root.pushoff]),
            speed_residual=float(speed[0]) if problem.target_speed is not None else 0.0,
            time_residual=float(time[0]),
            converged=not root.clamped,
            iterations=1,
            message="timing clamped at push-off bound" if root.clamped else "timing root",
        )

    def solve(self, problem: WindowProblem, candidates: Sequence[Sequence[float]] = ()) -> SolveOutcome:
        """
        Minimise window work subject to the window's equality constraints.

        Args:
            problem: Window to solve
            candidates: Warm starts tried before the nominal guess

        Returns:
            Best iterate; `converged` is False when tolerances were not met
        """
        if problem.width == 0:
            return SolveOutcome(np.zeros(0), 0.0, 0.0, True, 0, "empty window")
        if problem.width == 1:
            return self.solve_timing_only(problem)

        s = self.solver
        scale = problem.scale
        bound = s.pushoff_upper_bound
        x = np.clip(self.initial_guess(problem, candidates) / scale, 0.0, bound)
        bounds = [(0.0, bound)] * problem.width

        values, feasible = problem.constraints(x)
        multipliers = np.zeros(values.shape[1])
        penalty = s.initial_penalty
        previous_norm = math.inf
        previous_work = float(x.sum())
        converged = False
        iterations = 0
        message = "outer iteration limit reached"

        for outer in range(1, s.max_outer_iterations + 1):
            lam, mu = multipliers.copy(), penalty

            def merit(z: np.ndarray) -> Tuple[float, np.ndarray]:
                c, jac, ok = problem.jacobian(z, s.gradient_step, bound)
                if not ok:
                    return INFEASIBLE_MERIT, np.zeros_like(z)
                weights = lam + mu * c
                return float(z.sum() + lam @ c + 0.5 * mu * c @ c), np.ones_like(z) + jac.T @ weights

            result = minimize(
                merit,
                x,
                jac=True,
                method="L-BFGS-B",
                bounds=bounds,
                options={"maxiter": s.max_iterations, "ftol": INNER_FTOL, "gtol": s.optimality_tolerance},
            )
            iterations += int(result.nit)

            candidate = np.clip(result.x, 0.0, bound)
            values, feasible = problem.constraints(candidate)
            if feasible[0]:
                x = candidate
            else:
                values, feasible = problem.constraints(x)

            residual = values[0]
            norm = float(np.max(np.abs(residual)))
            work = float(x.sum())
            if norm <= s.constraint_tolerance and abs(work - previous_work) <= s.optimality_tolerance * max(1.0, abs(work)):
                converged = True
                message = "converged"
                break

            multipliers = multipliers + penalty * residual
            if norm > SUFFICIENT_DECREASE * previous_norm:
                penalty = min(penalty * s.penalty_growth, s.max_penalty)
            previous_norm = norm
            previous_work = work

        speed, time, _ = problem.residuals(x)
        outcome = SolveOutcome(
            pushoffs=x * scale,
            speed_residual=float(speed[0]) if problem.target_speed is not None else 0.0,
            time_residual=float(time[0]),
            converged=converged,
            iterations=iterations,
            message=message,
        )
        logger.debug(
            "window_solved",
            width=problem.width,
            outer_iterations=outer,
            inner_iterations=iterations,
            converged=converged,
            work=float(outcome.pushoffs.sum()),
            speed_residual=outcome.speed_residual,
            time_residual=outcome.time_residual,
            penalty=penalty,
        )
        return outcome
