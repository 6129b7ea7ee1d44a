"""Step-to-step dynamics of the pendulum walker.

All quantities are dimensionless (base units M, g, L). The stance leg is a
linearised inverted pendulum, theta'' = theta, that starts a step at
theta = -(alpha + delta_i) with angular speed v+ and ends it at
theta = alpha - delta_{i+1}.
"""

import math
from contextlib import contextmanager
from typing import Iterator, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from app.core.errors import (
    DynamicsError,
    FallBackwardError,
    InsufficientMomentumError,
    MidstanceNotReachedError,
    NegativePushoffError,
    TerrainTooSteepError,
)
from app.models.schemas import GaitTrajectory, ModelParams, StepRecord, StepState, TerrainProfile
from app.utils.logger import get_logger

logger = get_logger(__name__)


def transition(v_minus: float, u: float, alpha: float) -> float:
    """Post-transition speed after push-off u and heel-strike collision."""
    if u < 0:
        raise NegativePushoffError(f"push-off {u!r} is negative")
    if v_minus <= 0:
        raise DynamicsError(f"pre-transition speed {v_minus!r} is not positive")
    two_alpha = 2.0 * alpha
    return v_minus * math.cos(two_alpha) + math.sqrt(2.0 * u) * math.sin(two_alpha)


def disturbance(b_i: float, b_prev: float, step_length: float) -> float:
    """Angular landing disturbance of a height change between footholds."""
    rise = b_i - b_prev
    if abs(rise) >= step_length:
        raise TerrainTooSteepError(
            f"height change {rise:.6g} is not smaller than step length {step_length:.6g}"
        )
    return math.asin(rise / step_length)


@contextmanager
def located(terrain: TerrainProfile) -> Iterator[None]:
    """Tag dynamics errors raised inside the block with their step index i."""
    try:
        yield
    except DynamicsError as e:
        if e.position is None or e.index is not None:
            raise
        raise e.at(e.position, e.position - terrain.pad_before) from e


def boundary_disturbances(heights: Sequence[float], step_length: float) -> Tuple[float, ...]:
    """
    Disturbances entering each of N padded steps, plus one for the step after
    the walk, which is always level.
    """
    deltas = []
    previous = 0.0
    for position, height in enumerate(heights):
        try:
            deltas.append(disturbance(height, previous, step_length))
        except TerrainTooSteepError as e:
            raise e.at(position) from e
        previous = height
    deltas.append(0.0)
    return tuple(deltas)


def step_time(v_plus: float, delta: float, delta_next: float, alpha: float) -> float:
    """
    Time for the stance leg to travel from the landing angle to the next one.

    Args:
        v_plus: Post-transition speed
        delta: Disturbance at the start of this step
        delta_next: Disturbance at the start of the next step
        alpha: Inter-leg half-angle

    Returns:
        Dimensionless step time
    """
    denominator = v_plus - alpha - delta
    if denominator <= 0:
        raise FallBackwardError(
            f"post-transition speed {v_plus:.6g} does not exceed alpha + delta = {alpha + delta:.6g}"
        )
    radicand = v_plus * v_plus - 2.0 * alpha * (delta + delta_next) + delta_next ** 2 - delta ** 2
    if radicand < 0:
        raise InsufficientMomentumError(f"step-time radicand {radicand:.6g} is negative")
    numerator = alpha - delta_next + math.sqrt(radicand)
    if numerator <= denominator:
        raise InsufficientMomentumError("next landing angle is not ahead of the current one")
    return math.log(numerator / denominator)


def end_of_stance_speed(v_plus: float, delta: float, tau: float, alpha: float) -> float:
    """Angular speed of the stance leg after time tau."""
    offset = alpha + delta
    return 0.5 * (math.exp(-tau) * (v_plus + offset) + math.exp(tau) * (v_plus - offset))


def midstance(v_plus: float, delta: float, alpha: float) -> Tuple[float, float]:
    """Speed and time at which the stance leg passes vertical."""
    offset = alpha + delta
    radicand = v_plus * v_plus - offset * offset
    if radicand <= 0 or v_plus - offset <= 0:
        raise MidstanceNotReachedError(
            f"post-transition speed {v_plus:.6g} cannot carry the leg past vertical"
        )
    t_mid = math.log(math.sqrt(radicand) / (v_plus - offset))
    return end_of_stance_speed(v_plus, delta, t_mid, alpha), t_mid


class StepOutcome(NamedTuple):
    """Everything one step produces from its pre-transition speed."""
    v_plus: float
    tau: float
    v_end: float
    v_mid: float
    t_mid: float


def advance(v_minus: float, u: float, delta: float, delta_next: float, alpha: float) -> StepOutcome:
    """Run one full step: transition, stance, mid-stance sample."""
    v_plus = transition(v_minus, u, alpha)
    tau = step_time(v_plus, delta, delta_next, alpha)
    v_mid, t_mid = midstance(v_plus, delta, alpha)
    return StepOutcome(v_plus, tau, end_of_stance_speed(v_plus, delta, tau, alpha), v_mid, t_mid)


def simulate_batch(
    pushoffs: np.ndarray,
    v_start: float,
    deltas: Sequence[float],
    alpha: float,
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Roll out many push-off sequences at once over the same disturbances.

    Args:
        pushoffs: Array of shape (batch, w); one push-off sequence per row
        v_start: Pre-transition speed entering the first step
        deltas: w + 1 disturbances, the last one entering the step after the window
        alpha: Inter-leg half-angle

    Returns:
        Final pre-transition speeds, total step times and a feasibility mask,
        each of shape (batch,). Rows that hit a dynamics domain error are
        flagged infeasible; their speed and time values are meaningless.
    """
    rows = np.atleast_2d(np.asarray(pushoffs, dtype=float))
    batch, width = rows.shape
    d = np.asarray(deltas, dtype=float)
    if d.shape[0] != width + 1:
        raise ValueError(f"expected {width + 1} disturbances, got {d.shape[0]}")

    cos2a = math.cos(2.0 * alpha)
    sin2a = math.sin(2.0 * alpha)
    v = np.full(batch, float(v_start))
    elapsed = np.zeros(batch)
    feasible = np.ones(batch, dtype=bool)

    with np.errstate(invalid="ignore", divide="ignore", over="ignore"):
        for j in range(width):
            delta, delta_next = d[j], d[j + 1]
            u = rows[:, j]
            feasible &= u >= 0
            v_plus = v * cos2a + np.sqrt(2.0 * np.maximum(u, 0.0)) * sin2a
            denominator = v_plus - alpha - delta
            radicand = v_plus * v_plus - 2.0 * alpha * (delta + delta_next) + delta_next ** 2 - delta ** 2
            numerator = alpha - delta_next + np.sqrt(np.maximum(radicand, 0.0))
            ok = (denominator > 0) & (radicand >= 0) & (numerator > denominator)
            tau = np.log(np.where(ok, numerator / np.where(ok, denominator, 1.0), 2.0))
            feasible &= ok
            offset = alpha + delta
            v_next = 0.5 * (np.exp(-tau) * (v_plus + offset) + np.exp(tau) * (v_plus - offset))
            # infeasible rows keep a harmless placeholder state
            v = np.where(feasible, v_next, v_start)
            elapsed = elapsed + np.where(feasible, tau, 0.0)

    return v, elapsed, feasible


class WalkerService:
    """Rollouts of push-off sequences for one set of model parameters."""

    def __init__(self, params: Optional[ModelParams] = None):
        self.params = params or ModelParams.from_settings()

    def initial_state(self) -> StepState:
        """Nominal pre-transition speed entering the first padded step."""
        return StepState(pre_transition_speed=self.params.pre_transition_speed)

    def transitions(self, terrain: TerrainProfile) -> Tuple[float, ...]:
        with located(terrain):
            return boundary_disturbances(terrain.padded_heights, self.params.step_length)

    def step(self, state: StepState, u: float, delta: float, delta_next: float) -> Tuple[StepState, StepOutcome]:
        """Advance the walker by one step and annotate dynamics errors with its position."""
        try:
            outcome = advance(state.pre_transition_speed, u, delta, delta_next, self.params.alpha)
        except DynamicsError as e:
            raise e.at(state.position) from e
        next_state = StepState(
            pre_transition_speed=outcome.v_end,
            cumulative_time=state.cumulative_time + outcome.tau,
            position=state.position + 1,
        )
        return next_state, outcome

    def rollout(self, terrain: TerrainProfile, pushoffs: Sequence[float]) -> GaitTrajectory:
        """
        Walk a terrain with the given push-offs from the nominal gait.

        Args:
            terrain: Padded terrain profile with N steps
            pushoffs: N push-offs, one per padded step

        Returns:
            Trajectory with one record per step

        Raises:
            DynamicsError: A step is infeasible; the error carries its position and index i
        """
        n = terrain.step_count
        if len(pushoffs) != n:
            raise ValueError(f"terrain {terrain.name!r} has {n} steps but {len(pushoffs)} push-offs were given")

        deltas = self.transitions(terrain)
        multiples = terrain.padded_multiples
        nominal_time = self.params.nominal_step_time
        state = self.initial_state()
        records = []

        for p in range(n):
            u = float(pushoffs[p])
            v_minus = state.pre_transition_speed
            with located(terrain):
                state, outcome = self.step(state, u, deltas[p], deltas[p + 1])
            records.append(
                StepRecord(
                    position=p,
                    index=p - terrain.pad_before,
                    height_multiple=multiples[p],
                    height=multiples[p] * terrain.unit_height,
                    disturbance=deltas[p],
                    pushoff=u,
                    pre_transition_speed=v_minus,
                    post_transition_speed=outcome.v_plus,
                    step_time=outcome.tau,
                    midstance_speed=outcome.v_mid,
                    midstance_time=outcome.t_mid,
                    time_gain=(p + 1) * nominal_time - state.cumulative_time,
                )
            )

        logger.debug(
            "rollout_complete",
            terrain=terrain.name,
            steps=n,
            total_work=float(math.fsum(float(u) for u in pushoffs)),
            total_time=state.cumulative_time,
        )
        return GaitTrajectory(
            params=self.params,
            terrain_name=terrain.name,
            steps=tuple(records),
            final_speed=state.pre_transition_speed,
        )

    def simulate_batch(self, pushoffs: np.ndarray, v_start: float, deltas: Sequence[float]):
        return simulate_batch(pushoffs, v_start, deltas, self.params.alpha)

