"""Trajectory comparison statistics, horizon sweeps and parameter grids."""

import math
from concurrent.futures import ThreadPoolExecutor
from typing import Dict, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
from scipy import stats

from app.config import settings
from app.core.errors import AnalysisError, GaitPlannerError
from app.models.schemas import (
    ComparisonReport,
    GaitTrajectory,
    GridCell,
    HorizonSweepRow,
    ModelParams,
    ParameterGridResult,
    PlanResult,
    PlanSpec,
    SolverSettings,
    SpeedSeries,
    Strategy,
    StrategySummary,
    TerrainProfile,
    preferred_step_length,
)
from app.planners import get_planner
from app.utils.logger import get_logger

logger = get_logger(__name__)

MIN_POINTS = 3
GRID_SPEEDS_MPS = (1.0, 1.25, 1.5)
GRID_STEP_LENGTHS_M = (0.59, 0.79, 0.96)
COMPARED_STRATEGIES = (Strategy.NOMINAL, Strategy.TIGHT, Strategy.REACTIVE, Strategy.MIN_ENERGY)


# Alignment
def align(*series: SpeedSeries) -> Tuple[np.ndarray, np.ndarray]:
    """
    Restrict series to their common step indices.

    Returns:
        Common indices and a (len(series), n) array of speeds
    """
    common = set(series[0].step_indices)
    for s in series[1:]:
        common &= set(s.step_indices)
    indices = np.array(sorted(common), dtype=int)
    rows = []
    for s in series:
        lookup = dict(zip(s.step_indices, s.speeds))
        rows.append([lookup[i] for i in indices])
    return indices, np.asarray(rows, dtype=float).reshape(len(series), indices.size)


def _check_units(*series: SpeedSeries) -> None:
    units = {s.unit for s in series}
    if len(units) > 1:
        raise AnalysisError(f"series mix units: {sorted(u.value for u in units)}")


# Correlation
def correlation(x: np.ndarray, y: np.ndarray) -> Tuple[float, float]:
    """Product-moment correlation of fluctuations and its two-sided p-value."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    n = x.size
    if n != y.size:
        raise AnalysisError(f"length mismatch: {n} vs {y.size}")
    if n < MIN_POINTS:
        raise AnalysisError(f"need at least {MIN_POINTS} aligned points, got {n}")

    dx = x - x.mean()
    dy = y - y.mean()
    sxx = float(dx @ dx)
    syy = float(dy @ dy)
    if sxx == 0.0 or syy == 0.0:
        raise AnalysisError("zero variance series")

    rho = float(np.clip((dx @ dy) / math.sqrt(sxx * syy), -1.0, 1.0))
    if abs(rho) == 1.0:
        return rho, 0.0
    t_stat = rho * math.sqrt((n - 2) / (1.0 - rho * rho))
    return rho, float(2.0 * stats.t.sf(abs(t_stat), n - 2))


def pearson(a: SpeedSeries, b: SpeedSeries) -> Tuple[float, float]:
    """
    Pearson correlation of two series on their common step indices.

    Args:
        a: First series
        b: Second series

    Returns:
        (rho, p_value) with p from the t statistic on n - 2 degrees of freedom
    """
    _, values = align(a, b)
    return correlation(values[0], values[1])


def fisher_interval(rho: float, n: int, confidence: float = 0.95) -> Tuple[float, float]:
    """Confidence interval for rho from the Fisher z transform."""
    if n <= 3:
        return -1.0, 1.0
    if abs(rho) >= 1.0:
        return rho, rho
    z = math.atanh(rho)
    half = stats.norm.ppf(0.5 + confidence / 2.0) / math.sqrt(n - 3)
    return math.tanh(z - half), math.tanh(z + half)


def pearson_concatenated(
    models: Sequence[SpeedSeries],
    data: Sequence[SpeedSeries],
    demean: bool = True,
) -> Tuple[float, float, int]:
    """
    Correlate several terrains at once by concatenating their aligned series.

    Series are paired by terrain name. With `demean` each terrain's segment is
    reduced to fluctuations about its own mean before concatenation.

    Returns:
        (rho, p_value, n_points)
    """
    by_terrain = {s.terrain: s for s in data}
    if len(by_terrain) != len(data):
        raise AnalysisError("data series repeat a terrain")
    xs, ys = [], []
    for model in models:
        if model.terrain not in by_terrain:
            raise AnalysisError(f"no data series for terrain {model.terrain!r}")
        _, values = align(model, by_terrain[model.terrain])
        if demean:
            values = values - values.mean(axis=1, keepdims=True)
        xs.append(values[0])
        ys.append(values[1])
    x = np.concatenate(xs) if xs else np.zeros(0)
    y = np.concatenate(ys) if ys else np.zeros(0)
    rho, p_value = correlation(x, y)
    return rho, p_value, int(x.size)


# Regression scaling
def fit_scale(model: SpeedSeries, data: SpeedSeries) -> Tuple[float, float]:
    """
    Least-squares map from data amplitude to model amplitude.

    Regresses model on data, so `slope * data + intercept` rescales the data
    to the model's units and amplitude.

    Returns:
        (slope, intercept)
    """
    _, values = align(model, data)
    m, d = values
    if m.size < 2:
        raise AnalysisError("need at least two aligned points to fit a scale")
    if np.ptp(m) == 0.0:
        raise AnalysisError("model series is constant")
    if np.ptp(d) == 0.0:
        raise AnalysisError("data series is constant")
    slope, intercept = np.polyfit(d, m, 1)
    return float(slope), float(intercept)


def apply_scale(series: SpeedSeries, slope: float, intercept: float, reference: SpeedSeries) -> SpeedSeries:
    """Series rescaled by an affine map into the reference's units."""
    return series.model_copy(
        update={
            "speeds": tuple(float(slope * v + intercept) for v in series.speeds),
            "unit": reference.unit,
        }
    )


# Likelihood ratios
class LikelihoodModel(NamedTuple):
    """Per-step Student-t observation model built from subject spread."""
    indices: np.ndarray
    subjects: np.ndarray
    scale: np.ndarray
    dof: float
    floored_steps: int


def likelihood_model(
    model: SpeedSeries,
    subjects: Sequence[SpeedSeries],
    scale_floor: Optional[float] = None,
    dof: Optional[float] = None,
) -> Tuple[np.ndarray, LikelihoodModel]:
    """
    Align model and subjects and estimate per-step scales.

    Returns:
        Model values on the common indices and the observation model
    """
    if len(subjects) < 2:
        raise AnalysisError("need at least two subject series")
    _check_units(model, *subjects)
    floor_fraction = settings.ANALYSIS_SCALE_FLOOR if scale_floor is None else scale_floor

    indices, values = align(model, *subjects)
    if indices.size < 2:
        raise AnalysisError(f"need at least two common steps, got {indices.size}")
    predicted, observed = values[0], values[1:]

    scale = observed.std(axis=0, ddof=1)
    rms = float(np.sqrt(np.mean(observed ** 2)))
    floor = floor_fraction * (rms if rms > 0 else 1.0)
    floored = scale < floor
    if floored.any():
        logger.warning("scale_floor_applied", steps=indices[floored].tolist(), floor=floor)
    scale = np.where(floored, floor, scale)

    return predicted, LikelihoodModel(
        indices=indices,
        subjects=observed,
        scale=scale,
        dof=float(len(subjects) - 1) if dof is None else float(dof),
        floored_steps=int(floored.sum()),
    )


def log_likelihood(predictions: np.ndarray, obs: LikelihoodModel) -> np.ndarray:
    """Total log-likelihood of the subjects for each row of predictions."""
    rows = np.atleast_2d(predictions)
    density = stats.t.logpdf(
        obs.subjects[None, :, :], obs.dof, loc=rows[:, None, :], scale=obs.scale[None, None, :]
    )
    return density.sum(axis=(1, 2))


def shuffled_llrs(predicted: np.ndarray, obs: LikelihoodModel, permutations: np.ndarray) -> np.ndarray:
    """Log-likelihood of the model minus that of each permuted model sequence."""
    permutations = np.atleast_2d(permutations)
    own = log_likelihood(predicted, obs)[0]
    return own - log_likelihood(predicted[permutations], obs)


def shuffle_permutations(n_steps: int, n_shuffles: int, seed: int) -> np.ndarray:
    """One permutation per shuffle, each from its own spawned generator."""
    children = np.random.SeedSequence(seed).spawn(n_shuffles)
    return np.array([np.random.default_rng(child).permutation(n_steps) for child in children], dtype=int)


def loglik_ratio(
    model: SpeedSeries,
    subjects: Sequence[SpeedSeries],
    n_shuffles: Optional[int] = None,
    seed: Optional[int] = None,
    scale_floor: Optional[float] = None,
    dof: Optional[float] = None,
) -> ComparisonReport:
    """
    Evidence for the model's step sequence against shuffled versions of itself.

    Args:
        model: Model speed series
        subjects: Subject series already scaled to the model's amplitude
        n_shuffles: Number of shuffled model sequences
        seed: Seed for the shuffle generators
        scale_floor: Minimum per-step scale as a fraction of subject RMS
        dof: Student-t degrees of freedom; subjects - 1 by default

    Returns:
        ComparisonReport; correlation fields compare the model with the subject mean
    """
    n_shuffles = settings.ANALYSIS_N_SHUFFLES if n_shuffles is None else n_shuffles
    seed = settings.ANALYSIS_SEED if seed is None else seed
    floor_fraction = settings.ANALYSIS_SCALE_FLOOR if scale_floor is None else scale_floor
    if n_shuffles < 1:
        raise AnalysisError("n_shuffles must be at least 1")

    predicted, obs = likelihood_model(model, subjects, floor_fraction, dof)
    n_steps = obs.indices.size
    permutations = shuffle_permutations(n_steps, n_shuffles, seed)
    llrs = shuffled_llrs(predicted, obs, permutations)

    llr_mean = float(llrs.mean())
    llr_sd = float(llrs.std(ddof=1)) if n_shuffles > 1 else 0.0
    mean_subject = obs.subjects.mean(axis=0)
    try:
        rho, p_value = correlation(predicted, mean_subject)
        slope, intercept = np.polyfit(mean_subject, predicted, 1)
    except AnalysisError:
        rho, p_value, slope, intercept = 0.0, 1.0, 0.0, float(predicted.mean())
    low, high = fisher_interval(rho, n_steps)

    report = ComparisonReport(
        pearson_rho=rho,
        n_points=n_steps,
        p_value=p_value,
        rho_ci_low=low,
        rho_ci_high=high,
        slope=float(slope),
        intercept=float(intercept),
        loglik_model=float(log_likelihood(predicted, obs)[0]),
        llr_mean=llr_mean,
        llr_sd=llr_sd,
        llr_per_step_mean=llr_mean / n_steps,
        llr_per_step_sd=llr_sd / n_steps,
        bits_per_step=llr_mean / (n_steps * math.log(2.0)),
        bayes_factor=math.exp(llr_mean) if llr_mean < 709.0 else math.inf,
        log10_bayes_factor=llr_mean / math.log(10.0),
        n_steps=n_steps,
        n_subjects=len(subjects),
        dof=obs.dof,
        n_shuffles=n_shuffles,
        seed=seed,
        scale_floor=floor_fraction,
        floored_steps=obs.floored_steps,
    )
    logger.info(
        "loglik_ratio_computed",
        terrain=model.terrain,
        n_steps=n_steps,
        n_subjects=len(subjects),
        llr_mean=llr_mean,
        bits_per_step=report.bits_per_step,
    )
    return report


def compare(
    model: SpeedSeries,
    subjects: Sequence[SpeedSeries],
    n_shuffles: Optional[int] = None,
    seed: Optional[int] = None,
    scale_floor: Optional[float] = None,
) -> ComparisonReport:
    """
    Full model-vs-data comparison: scale each subject to the model with
    fit_scale, then correlate the model with the subject mean and compute
    the shuffled likelihood ratios.
    """
    for s in subjects:
        if s.terrain != model.terrain:
            raise AnalysisError(f"subject {s.label!r} walked {s.terrain!r}, model is for {model.terrain!r}")
    scaled = [apply_scale(s, *fit_scale(model, s), reference=model) for s in subjects]
    report = loglik_ratio(model, scaled, n_shuffles=n_shuffles, seed=seed, scale_floor=scale_floor)

    indices, raw = align(model, *subjects)
    subject_mean = SpeedSeries(
        label="subject-mean",
        terrain=model.terrain,
        step_indices=tuple(int(i) for i in indices),
        speeds=tuple(float(v) for v in raw[1:].mean(axis=0)),
        unit=subjects[0].unit,
    )
    slope, intercept = fit_scale(model, subject_mean)
    return report.model_copy(update={"slope": slope, "intercept": intercept})


def synthetic_subjects(
    model: SpeedSeries,
    n_subjects: int,
    noise: float,
    seed: int = 0,
    dof: float = 5.0,
) -> List[SpeedSeries]:
    """Model plus independent Student-t noise of the given scale, one series per subject."""
    if n_subjects < 1:
        raise AnalysisError("need at least one synthetic subject")
    children = np.random.SeedSequence(seed).spawn(n_subjects)
    values = model.values
    subjects = []
    for number, child in enumerate(children, start=1):
        rng = np.random.default_rng(child)
        noisy = values + noise * stats.t.rvs(dof, size=values.size, random_state=rng)
        subjects.append(
            SpeedSeries(
                label=f"S{number:02d}",
                terrain=model.terrain,
                step_indices=model.step_indices,
                speeds=tuple(float(v) for v in noisy),
                unit=model.unit,
            )
        )
    return subjects


# Sweeps
class HorizonSweep(NamedTuple):
    """Sweep table plus the trajectories behind it."""
    rows: List[HorizonSweepRow]
    full: GaitTrajectory
    trajectories: Dict[int, GaitTrajectory]


def _run(spec: PlanSpec, params: ModelParams, terrain: TerrainProfile) -> PlanResult:
    return get_planner(spec, params).run(terrain)


def _speed_correlation(a: GaitTrajectory, b: GaitTrajectory) -> float:
    try:
        rho, _ = correlation(a.midstance_speeds, b.midstance_speeds)
    except AnalysisError as e:
        logger.warning("correlation_undefined", terrain=a.terrain_name, error=str(e))
        return math.nan
    return rho


def horizon_sweep(
    params: ModelParams,
    terrain: TerrainProfile,
    m_values: Sequence[int],
    solver: Optional[SolverSettings] = None,
    terminal_speed: Optional[bool] = None,
    workers: Optional[int] = None,
) -> HorizonSweep:
    """
    Finite-horizon work and speed-profile similarity to the full horizon.

    Args:
        params: Model parameters
        terrain: Terrain to walk
        m_values: Horizon lengths
        solver: Solver settings shared by every plan
        terminal_speed: Whether windows also regain nominal speed
        workers: Concurrent solves; results do not depend on it

    Returns:
        One row per m in the given order, plus trajectories
    """
    solver = solver or SolverSettings.from_settings()
    workers = settings.SWEEP_WORKERS if workers is None else workers
    extra = {} if terminal_speed is None else {"terminal_speed": terminal_speed}

    full = _run(PlanSpec(strategy=Strategy.MIN_ENERGY, solver=solver), params, terrain)
    specs = [PlanSpec(strategy=Strategy.HORIZON, horizon=m, solver=solver, **extra) for m in m_values]

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(lambda spec: _run(spec, params, terrain), specs))
    else:
        results = [_run(spec, params, terrain) for spec in specs]

    rows = []
    trajectories = {}
    for spec, result in zip(specs, results):
        rows.append(
            HorizonSweepRow(
                m=spec.horizon,
                work_excess=result.work_excess,
                rho_vs_full=_speed_correlation(result.trajectory, full.trajectory),
                converged=result.converged,
            )
        )
        trajectories[spec.horizon] = result.trajectory

    logger.info("horizon_sweep_complete", terrain=terrain.name, horizons=list(m_values))
    return HorizonSweep(rows=rows, full=full.trajectory, trajectories=trajectories)


def normalized(values: np.ndarray) -> np.ndarray:
    """De-meaned, unit-variance copy; all zeros for a constant input."""
    values = np.asarray(values, dtype=float)
    centred = values - values.mean()
    sd = centred.std()
    return centred / sd if sd > 0 else centred


def parameter_grid(
    terrain: TerrainProfile,
    speeds_mps: Sequence[float] = GRID_SPEEDS_MPS,
    step_lengths_m: Sequence[float] = GRID_STEP_LENGTHS_M,
    include_preferred: bool = True,
    leg_length: Optional[float] = None,
    gravity: Optional[float] = None,
    solver: Optional[SolverSettings] = None,
) -> ParameterGridResult:
    """
    Minimum-energy speed profiles across walking speeds and step lengths.

    Each combination derives its own model parameters; combinations that
    cannot walk the terrain are kept as infeasible cells. Correlations are
    computed between the normalised profiles of the feasible cells whose plan
    converged, in cell order; a plan that misses its terminal constraints
    describes a different walk and is left out.
    """
    leg_length = settings.LEG_LENGTH_M if leg_length is None else leg_length
    gravity = settings.GRAVITY if gravity is None else gravity
    solver = solver or SolverSettings.from_settings()
    spec = PlanSpec(strategy=Strategy.MIN_ENERGY, solver=solver)

    combos: List[Tuple[float, float, str]] = []
    for speed in speeds_mps:
        for step in step_lengths_m:
            combos.append((speed, step, f"fixed:{step:g}"))
        if include_preferred:
            combos.append((speed, preferred_step_length(speed), "preferred"))

    cells = []
    for speed, step, policy in combos:
        try:
            params = ModelParams.from_gait(speed, step, leg_length=leg_length, gravity=gravity)
            result = _run(spec, params, terrain)
        except (GaitPlannerError, ValueError) as e:
            logger.warning("grid_cell_infeasible", speed_mps=speed, step_length_m=step, error=str(e))
            cells.append(GridCell(speed_mps=speed, step_length_m=step, policy=policy, feasible=False, message=str(e)))
            continue
        cells.append(
            GridCell(
                speed_mps=speed,
                step_length_m=step,
                policy=policy,
                feasible=True,
                converged=result.converged,
                work_excess=result.work_excess,
                normalized_speeds=tuple(float(v) for v in normalized(result.trajectory.midstance_speeds)),
                message="" if result.converged else "not converged",
            )
        )

    profiles = [np.asarray(c.normalized_speeds) for c in cells if c.feasible and c.converged]
    matrix = []
    for a in profiles:
        row = []
        for b in profiles:
            try:
                row.append(correlation(a, b)[0])
            except AnalysisError:
                row.append(math.nan)
        matrix.append(tuple(row))

    return ParameterGridResult(terrain=terrain.name, cells=tuple(cells), correlations=tuple(matrix))


def compare_strategies(
    params: ModelParams,
    terrain: TerrainProfile,
    solver: Optional[SolverSettings] = None,
    strategies: Sequence[Strategy] = COMPARED_STRATEGIES,
) -> Tuple[List[StrategySummary], Dict[str, PlanResult]]:
    """
    Run several strategies on one terrain. A strategy that cannot walk the
    terrain gets a summary row with its error message and no numbers.
    """
    solver = solver or SolverSettings.from_settings()
    summaries = []
    results: Dict[str, PlanResult] = {}
    for strategy in strategies:
        spec = PlanSpec(strategy=strategy, solver=solver)
        try:
            result = _run(spec, params, terrain)
        except GaitPlannerError as e:
            summaries.append(StrategySummary(strategy=spec.label, message=str(e)))
            continue
        results[spec.label] = result
        trajectory = result.trajectory
        summaries.append(
            StrategySummary(
                strategy=spec.label,
                total_work=trajectory.total_work,
                work_excess=result.work_excess,
                total_time=trajectory.total_time,
                final_time_gain=trajectory.final_time_gain,
                converged=result.converged,
                message=result.message,
            )
        )
    return summaries, results
