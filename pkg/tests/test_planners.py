"""Tests for the window optimizer and the push-off planners."""

import math

import numpy as np
import pytest
from scipy.optimize import minimize

from app.core.errors import DynamicsError, FallBackwardError, InfeasibleTerrainError, TerrainTooSteepError
from app.models.schemas import PlanSpec, SolverSettings, Strategy, TerrainProfile
from app.planners import (
    FiniteHorizonPlanner,
    FullHorizonPlanner,
    NominalPlanner,
    ReactivePlanner,
    TightPlanner,
    get_planner,
)
from app.services.optimizer_service import OptimizerService, WindowProblem, solve_step_timing
from app.services.walker_service import WalkerService, advance, simulate_batch

FIVE_STEP_WALKS = [
    (TerrainProfile(name="U", height_multiples=(1,), pad_before=2, pad_after=2, sustain=True), 0.215094),
    (TerrainProfile(name="D", height_multiples=(-1,), pad_before=2, pad_after=2, sustain=True), 0.137128),
    (TerrainProfile(name="bump", height_multiples=(1, 0), pad_before=2, pad_after=1), 0.179019),
]


def restricted_minimum(params, deltas, fixed, start):
    """SLSQP minimum of the remaining push-offs with the leading ones held fixed."""
    scale = params.nominal_pushoff
    target_time = (len(deltas) - 1) * params.nominal_step_time

    def equalities(x):
        v, elapsed = params.pre_transition_speed, 0.0
        try:
            for j, u in enumerate(list(fixed) + list(np.maximum(x, 0.0) * scale)):
                outcome = advance(v, u, deltas[j], deltas[j + 1], params.alpha)
                v, elapsed = outcome.v_end, elapsed + outcome.tau
        except DynamicsError:
            return np.array([1.0, 1.0])
        return np.array([v - params.pre_transition_speed, elapsed - target_time])

    oracle = minimize(
        lambda x: x.sum(),
        np.asarray(start) / scale,
        jac=lambda x: np.ones_like(x),
        method="SLSQP",
        bounds=[(0.0, 10.0)] * len(start),
        constraints=[{"type": "eq", "fun": equalities}],
        options={"ftol": 1e-12, "maxiter": 500},
    )
    assert np.abs(equalities(oracle.x)).max() < 1e-6
    return oracle.x * scale


def grid_minimum(params, deltas):
    """
    Brute-force minimum work of a five-step walk. The first three push-offs
    run over a 1e-3 grid (coarse to fine); the last two are solved by Newton
    iteration from the terminal speed and time equalities.
    """
    v_star = params.pre_transition_speed
    target_time = 5 * params.nominal_step_time

    def residuals(heads, tails):
        v, elapsed, ok = simulate_batch(np.column_stack([heads, tails]), v_star, deltas, params.alpha)
        return np.column_stack([v - v_star, elapsed - target_time]), ok

    def close(heads):
        tails = np.full((len(heads), 2), params.nominal_pushoff)
        h = 1e-8
        with np.errstate(all="ignore"):
            for _ in range(40):
                r, _ = residuals(heads, tails)
                cols = []
                for j in range(2):
                    shifted = tails.copy()
                    shifted[:, j] += h
                    cols.append((residuals(heads, shifted)[0] - r) / h)
                (a, c), (b, d) = cols[0].T, cols[1].T
                det = a * d - b * c
                step = np.column_stack([(d * r[:, 0] - b * r[:, 1]) / det, (a * r[:, 1] - c * r[:, 0]) / det])
                tails = np.maximum(np.where(np.isfinite(step), tails - step, tails), 0.0)
        r, ok = residuals(heads, tails)
        closed = ok & (np.abs(r).max(axis=1) < 1e-9)
        return np.where(closed, heads.sum(axis=1) + tails.sum(axis=1), np.inf)

    center = np.full(3, 0.048)
    for spacing, reach in ((0.004, 12), (0.001, 6), (0.001, 3)):
        offsets = spacing * np.arange(-reach, reach + 1)
        grid = np.stack(np.meshgrid(offsets, offsets, offsets, indexing="ij"), axis=-1).reshape(-1, 3)
        heads = np.round(np.maximum(center + grid, 0.0), 3)
        work = close(heads)
        best = int(np.argmin(work))
        center = heads[best]
    assert np.isfinite(work[best])
    return float(work[best])


class TestStepTiming:
    def test_nominal_root(self, params):
        root = solve_step_timing(
            params.pre_transition_speed, 0.0, 0.0, params.nominal_step_time, params.alpha, 10 * params.nominal_pushoff
        )
        assert not root.clamped
        assert root.pushoff == pytest.approx(params.nominal_pushoff, rel=1e-9)

    def test_clamped_at_upper_bound(self, params):
        upper = 2 * params.nominal_pushoff
        root = solve_step_timing(params.pre_transition_speed, 0.0, 0.0, 0.5, params.alpha, upper)
        assert root == (upper, True)

    def test_clamped_at_zero(self, params):
        root = solve_step_timing(params.pre_transition_speed, 0.0, 0.0, 100.0, params.alpha, params.nominal_pushoff)
        assert root == (0.0, True)

    def test_unreachable_step_raises(self, params):
        with pytest.raises(DynamicsError):
            solve_step_timing(0.2, 1.0, 0.0, params.nominal_step_time, params.alpha, params.nominal_pushoff)


class TestWindowProblem:
    def test_constraint_shapes(self, params):
        batch = np.ones((3, 4))
        with_speed = WindowProblem(params, params.pre_transition_speed, [0.0] * 5, 4 * params.nominal_step_time, 0.6)
        timing = WindowProblem(params, params.pre_transition_speed, [0.0] * 5, 4 * params.nominal_step_time, None)
        assert with_speed.constraints(batch)[0].shape == (3, 2)
        assert timing.constraints(batch)[0].shape == (3, 1)

    def test_nominal_is_feasible_and_exact(self, params):
        problem = WindowProblem(
            params, params.pre_transition_speed, [0.0] * 5, 4 * params.nominal_step_time, params.pre_transition_speed
        )
        values, feasible = problem.constraints(np.ones((1, 4)))
        assert feasible[0]
        assert np.abs(values).max() < 1e-12

    def test_jacobian_matches_central_difference(self, params):
        up = math.asin(0.075 / 0.79)
        problem = WindowProblem(params, params.pre_transition_speed, [0.0, up, 0.0, 0.0], 3 * params.nominal_step_time, params.pre_transition_speed)
        x = np.array([1.2, 1.1, 0.9])
        _, jac, ok = problem.jacobian(x, 1e-7, 10.0)
        assert ok
        for j in range(3):
            e = np.zeros(3)
            e[j] = 1e-5
            central = (problem.constraints(x + e)[0][0] - problem.constraints(x - e)[0][0]) / 2e-5
            assert jac[:, j] == pytest.approx(central, rel=1e-4, abs=1e-7)


class TestOptimizer:
    def test_empty_and_single_windows(self, params, solver):
        optimizer = OptimizerService(params, solver)
        empty = optimizer.solve(WindowProblem(params, 0.6, [0.0], 0.0, None))
        assert empty.converged and empty.pushoffs.size == 0

        single = optimizer.solve(WindowProblem(params, params.pre_transition_speed, [0.0, 0.0], params.nominal_step_time, None))
        assert single.converged
        assert single.pushoffs[0] == pytest.approx(params.nominal_pushoff, rel=1e-9)

    def test_level_window_stays_nominal(self, params, solver):
        problem = WindowProblem(
            params, params.pre_transition_speed, [0.0] * 6, 5 * params.nominal_step_time, params.pre_transition_speed
        )
        outcome = OptimizerService(params, solver).solve(problem)
        assert max(abs(outcome.speed_residual), abs(outcome.time_residual)) < 1e-6
        assert outcome.pushoffs.sum() <= 5 * params.nominal_pushoff * (1 + 1e-4)

    def test_infeasible_start(self, params, solver):
        cliff = math.asin(0.7 / 0.79)
        problem = WindowProblem(
            params, params.pre_transition_speed, [0.0, cliff, 0.0, 0.0], 3 * params.nominal_step_time, params.pre_transition_speed
        )
        with pytest.raises(InfeasibleTerrainError):
            OptimizerService(params, solver).initial_guess(problem)

    @pytest.mark.parametrize("terrain,work", FIVE_STEP_WALKS, ids=["up", "down", "bump"])
    def test_matches_grid_search(self, params, terrain, work):
        best = grid_minimum(params, WalkerService(params).transitions(terrain))
        result = FullHorizonPlanner(params=params).run(terrain)
        assert best == pytest.approx(work, rel=1e-4)
        assert result.converged
        assert result.trajectory.total_work == pytest.approx(best, rel=1e-2)
        assert result.trajectory.total_work <= best * (1 + 1e-6)

    def test_matches_independent_constrained_solver(self, params, solver):
        """Full-horizon work agrees with SLSQP on a short up-step walk."""
        terrain = TerrainProfile(name="U", height_multiples=(1,), pad_before=2, pad_after=2, sustain=True)
        result = FullHorizonPlanner(PlanSpec(strategy=Strategy.MIN_ENERGY, solver=solver), params).run(terrain)
        deltas = list(result.trajectory.steps[i].disturbance for i in range(terrain.step_count)) + [0.0]
        scale = params.nominal_pushoff

        def walk(x):
            v, elapsed = params.pre_transition_speed, 0.0
            for j, u in enumerate(x * scale):
                outcome = advance(v, max(u, 0.0), deltas[j], deltas[j + 1], params.alpha)
                v, elapsed = outcome.v_end, elapsed + outcome.tau
            return v, elapsed

        def equalities(x):
            try:
                v, elapsed = walk(x)
            except DynamicsError:
                return np.array([1.0, 1.0])
            return np.array([v - params.pre_transition_speed, elapsed - terrain.step_count * params.nominal_step_time])

        start = result.trajectory.pushoffs / scale * 1.02
        oracle = minimize(
            lambda x: x.sum(),
            start,
            jac=lambda x: np.ones_like(x),
            method="SLSQP",
            bounds=[(0.0, 10.0)] * terrain.step_count,
            constraints=[{"type": "eq", "fun": equalities}],
            options={"ftol": 1e-10, "maxiter": 500},
        )
        assert np.abs(equalities(oracle.x)).max() < 1e-6
        assert result.trajectory.total_work == pytest.approx(oracle.x.sum() * scale, rel=1e-3)


class TestPlanners:
    def test_get_planner_types(self, make_spec):
        assert isinstance(get_planner(make_spec(Strategy.NOMINAL)), NominalPlanner)
        assert isinstance(get_planner(make_spec(Strategy.TIGHT)), TightPlanner)
        assert isinstance(get_planner(make_spec(Strategy.REACTIVE)), ReactivePlanner)
        assert isinstance(get_planner(make_spec(Strategy.MIN_ENERGY)), FullHorizonPlanner)
        assert isinstance(get_planner(make_spec(Strategy.HORIZON, horizon=3)), FiniteHorizonPlanner)

    @pytest.mark.parametrize("text,label", [("horizon:3", "horizon:3"), ("full", "min-energy"), ("TIGHT", "tight")])
    def test_spec_parse(self, text, label):
        assert PlanSpec.parse(text).label == label

    @pytest.mark.parametrize("text", ["horizon", "nominal:2", "bogus", "horizon:0"])
    def test_spec_parse_rejects(self, text):
        with pytest.raises(ValueError):
            PlanSpec.parse(text)

    def test_nominal_level_converges(self, params, level):
        result = NominalPlanner(params=params).run(level)
        assert result.converged
        assert result.work_excess == pytest.approx(0.0, abs=1e-12)

    def test_nominal_up_step_loses_time(self, params, up_step):
        result = NominalPlanner(params=params).run(up_step)
        assert not result.converged
        assert result.trajectory.final_time_gain < 0
        assert result.constraint_residuals.total_time > 0

    def test_tight_preview_holds_step_time(self, params, make_spec, up_step):
        result = TightPlanner(make_spec(Strategy.TIGHT, tight_preview=True), params).run(up_step)
        for step in result.trajectory.steps:
            assert step.step_time == pytest.approx(params.nominal_step_time, rel=1e-9)
        assert result.constraint_residuals.total_time == pytest.approx(0.0, abs=1e-8)
        assert result.unconverged_steps == ()

    def test_tight_holds_nominal_clock(self, params, make_spec, up_step):
        result = TightPlanner(make_spec(Strategy.TIGHT, tight_preview=False), params).run(up_step)
        gains = [step.time_gain for step in result.trajectory.steps]
        # stance 2 ends on the unseen up-step early; stance 3 makes it up
        assert gains[2] > 0.1
        assert gains[:2] + gains[3:] == pytest.approx([0.0] * (len(gains) - 1), abs=1e-8)
        assert result.trajectory.steps[3].step_time > params.nominal_step_time
        assert result.trajectory.final_speed == pytest.approx(params.pre_transition_speed, rel=1e-8)
        assert result.unconverged_steps == ()
        assert result.converged

    def test_tight_reports_clamped_steps(self, params, up_step):
        spec = PlanSpec(strategy=Strategy.TIGHT, solver=SolverSettings(pushoff_upper_bound=1.05))
        result = TightPlanner(spec, params).run(up_step)
        assert 3 in result.unconverged_steps
        assert not result.converged

    def test_min_energy_meets_constraints(self, params, up_step):
        result = FullHorizonPlanner(params=params).run(up_step)
        assert result.constraint_residuals.max_abs < 1e-6
        assert result.trajectory.final_time_gain == pytest.approx(0.0, abs=1e-6)

    def test_min_energy_cheapest(self, params, up_step):
        work = {
            name: planner.run(up_step).trajectory.total_work
            for name, planner in {
                "tight": TightPlanner(params=params),
                "reactive": ReactivePlanner(params=params),
                "min-energy": FullHorizonPlanner(params=params),
            }.items()
        }
        assert work["min-energy"] <= work["tight"] + 1e-6
        assert work["min-energy"] <= work["reactive"] + 1e-6

    def test_descent_saves_work(self, params, down_step):
        result = FullHorizonPlanner(params=params).run(down_step)
        assert result.work_excess < 0

    def test_impossible_terrain(self, params):
        cliff = TerrainProfile(name="cliff", unit_height=0.7, height_multiples=(1,), pad_before=2, pad_after=2, sustain=True)
        with pytest.raises(InfeasibleTerrainError):
            FullHorizonPlanner(params=params).run(cliff)

    def test_too_steep_propagates(self, params):
        wall = TerrainProfile(name="wall", unit_height=0.8, height_multiples=(1,), pad_before=1, pad_after=1)
        with pytest.raises(TerrainTooSteepError):
            TightPlanner(params=params).run(wall)


class TestRecedingHorizon:
    def test_full_window_equals_full_horizon(self, params, make_spec, bump):
        full = FullHorizonPlanner(params=params).run(bump)
        finite = FiniteHorizonPlanner(make_spec(Strategy.HORIZON, horizon=bump.step_count + 4), params).run(bump)
        assert finite.trajectory.pushoffs == pytest.approx(full.trajectory.pushoffs, rel=1e-12)
        assert finite.strategy == f"horizon:{bump.step_count + 4}"

    def test_short_horizon_regains_timing(self, params, make_spec, up_step):
        result = FiniteHorizonPlanner(make_spec(Strategy.HORIZON, horizon=3), params).run(up_step)
        assert result.constraint_residuals.total_time == pytest.approx(0.0, abs=1e-6)

    def test_horizon_on_level_is_nominal(self, params, make_spec, level):
        result = FiniteHorizonPlanner(make_spec(Strategy.HORIZON, horizon=2), params).run(level)
        assert result.trajectory.pushoffs == pytest.approx([params.nominal_pushoff] * level.step_count, rel=1e-4)

    def test_requires_horizon_spec(self, params, make_spec):
        with pytest.raises(ValueError):
            FiniteHorizonPlanner(make_spec(Strategy.MIN_ENERGY), params)


class TestReactive:
    def test_level_never_replans(self, params, level):
        result = ReactivePlanner(params=params).run(level)
        assert result.iterations == 0
        assert result.trajectory.pushoffs == pytest.approx([params.nominal_pushoff] * level.step_count)

    def test_nominal_until_contact(self, params, up_step):
        result = ReactivePlanner(params=params).run(up_step)
        assert result.trajectory.pushoffs[:4] == pytest.approx([params.nominal_pushoff] * 4)
        assert result.trajectory.pushoffs[4] > 2 * params.nominal_pushoff
        assert result.constraint_residuals.max_abs < 1e-6

    def test_full_map_same_for_single_disturbance(self, params, make_spec, up_step):
        local = ReactivePlanner(make_spec(Strategy.REACTIVE, reactive_full_map=False), params).run(up_step)
        mapped = ReactivePlanner(make_spec(Strategy.REACTIVE, reactive_full_map=True), params).run(up_step)
        assert mapped.trajectory.pushoffs == pytest.approx(local.trajectory.pushoffs, rel=1e-12)

    def test_down_step_matches_restricted_optimum(self, params, make_spec, down_step):
        result = ReactivePlanner(make_spec(Strategy.REACTIVE), params).run(down_step)
        pushoffs = result.trajectory.pushoffs
        fixed = [params.nominal_pushoff] * 4
        assert pushoffs[:4] == pytest.approx(fixed)
        free = restricted_minimum(params, WalkerService(params).transitions(down_step), fixed, pushoffs[4:] * 1.02)
        assert pushoffs[4:].sum() == pytest.approx(free.sum(), rel=1e-3)
        assert pushoffs[4:] / params.nominal_pushoff == pytest.approx([0.3177, 0.6577, 1.3681], rel=5e-3)


@pytest.mark.slow
class TestPyramid:
    @pytest.fixture
    def pyramid(self, catalog):
        return catalog.get("P")

    def test_nominal_work(self, params, pyramid):
        assert pyramid.step_count == 21
        assert pyramid.step_count * params.nominal_pushoff == pytest.approx(0.7182, abs=1e-3)

    def test_nominal_falls_on_second_up_step(self, params, pyramid):
        with pytest.raises(FallBackwardError) as info:
            NominalPlanner(params=params).run(pyramid)
        assert (info.value.position, info.value.index) == (7, 1)

    def test_strategy_costs(self, params, make_spec, pyramid):
        full = FullHorizonPlanner(make_spec(Strategy.MIN_ENERGY), params).run(pyramid)
        tight = TightPlanner(make_spec(Strategy.TIGHT, tight_preview=False), params).run(pyramid)
        reactive = ReactivePlanner(make_spec(Strategy.REACTIVE, reactive_full_map=True), params).run(pyramid)
        assert all(r.converged for r in (full, tight, reactive))

        extra = full.trajectory.total_work - full.trajectory.nominal_work
        assert 0.035 <= extra <= 0.055
        assert extra <= 0.25 * 0.225
        assert 0.072 <= tight.work_excess <= 0.112
        assert 0.101 <= reactive.work_excess <= 0.141
        assert full.work_excess < tight.work_excess < reactive.work_excess

    def test_reactive_nominal_before_contact(self, params, make_spec, pyramid):
        result = ReactivePlanner(make_spec(Strategy.REACTIVE), params).run(pyramid)
        assert result.trajectory.pushoffs[:7] == pytest.approx([params.nominal_pushoff] * 7)
        assert result.trajectory.midstance_speeds[:6] == pytest.approx([params.nominal_midstance_speed] * 6)
        assert result.trajectory.pushoffs[7] != pytest.approx(params.nominal_pushoff)
