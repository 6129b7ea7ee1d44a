"""Reading and writing speed series, trajectories, sweep tables and reports."""

import io
import json
import math
from pathlib import Path
from typing import IO, Any, Dict, Iterable, List, Mapping, Optional, Sequence, TextIO, Tuple, Union

import numpy as np
import pandas as pd

from app.config import settings
from app.core.errors import SeriesFormatError
from app.models.schemas import ComparisonReport, GaitTrajectory, HorizonSweepRow, SpeedSeries, SpeedUnit
from app.utils.logger import get_logger

logger = get_logger(__name__)

SERIES_COLUMNS = ["label", "terrain", "step_index", "speed", "unit"]
TRAJECTORY_COLUMNS = ["i", "b_multiple", "delta", "u", "v_plus", "tau", "v_mid", "t_mid", "time_gain"]
SWEEP_COLUMNS = ["m", "work_excess", "rho_vs_full", "converged"]
SWEEP_LONG_COLUMNS = ["m", "i", "v_norm"]
FLOAT_FORMAT = "%.10g"

Source = Union[str, Path, IO[str]]


# Provenance
def provenance(config_hash: str = "", **extra: Any) -> Dict[str, Any]:
    """Tool, version and run-config hash stamped on every output."""
    fields: Dict[str, Any] = {
        "tool": settings.APP_NAME.lower(),
        "version": settings.APP_VERSION,
        "config_hash": config_hash,
    }
    fields.update(extra)
    return fields


def provenance_line(fields: Mapping[str, Any]) -> str:
    return "# " + " ".join(f"{key}={value}" for key, value in fields.items()) + "\n"


def parse_provenance(lines: Iterable[str]) -> Dict[str, str]:
    fields: Dict[str, str] = {}
    for line in lines:
        for token in line.lstrip("#").split():
            key, sep, value = token.partition("=")
            if sep:
                fields[key] = value
    return fields


def _read_text(source: Source) -> str:
    if isinstance(source, (str, Path)):
        try:
            return Path(source).read_text(encoding="utf-8")
        except OSError as e:
            raise SeriesFormatError(f"cannot read {source}: {e}") from e
    return source.read()


def _split_comments(text: str) -> Tuple[List[str], str]:
    lines = text.splitlines(keepends=True)
    comments = []
    while lines and lines[0].startswith("#"):
        comments.append(lines.pop(0))
    return comments, "".join(lines)


def _write(target: Union[str, Path, TextIO], text: str) -> None:
    if isinstance(target, (str, Path)):
        Path(target).write_text(text, encoding="utf-8")
    else:
        target.write(text)


# Speed series
def read_series(source: Source) -> List[SpeedSeries]:
    """
    Parse a speed-series CSV.

    Args:
        source: Path or text stream

    Returns:
        One series per (label, terrain) pair in order of first appearance;
        an empty list (with a warning) for an empty file

    Raises:
        SeriesFormatError: Malformed header, bad values, non-monotone step
            indices or mixed units
    """
    _, body = _split_comments(_read_text(source))
    if not body.strip():
        logger.warning("series_file_empty", source=str(source))
        return []

    try:
        frame = pd.read_csv(
            io.StringIO(body),
            dtype={"label": str, "terrain": str, "unit": str},
            keep_default_na=False,
            float_precision="round_trip",
        )
    except (pd.errors.ParserError, ValueError) as e:
        raise SeriesFormatError(f"unreadable series CSV: {e}") from e

    if list(frame.columns) != SERIES_COLUMNS:
        raise SeriesFormatError(
            f"malformed header {','.join(map(str, frame.columns))!r}; expected {','.join(SERIES_COLUMNS)!r}"
        )
    if frame.empty:
        logger.warning("series_file_empty", source=str(source))
        return []

    units = set(frame["unit"])
    unknown = units - {u.value for u in SpeedUnit}
    if unknown:
        raise SeriesFormatError(f"unknown unit(s) {sorted(unknown)}")
    if len(units) > 1:
        raise SeriesFormatError(f"mixed units within one file: {sorted(units)}")

    try:
        indices = pd.to_numeric(frame["step_index"], downcast=None, errors="raise")
        speeds = pd.to_numeric(frame["speed"], errors="raise").astype(float)
    except ValueError as e:
        raise SeriesFormatError(f"non-numeric step_index or speed: {e}") from e
    if not np.all(np.mod(indices, 1) == 0):
        raise SeriesFormatError("step_index values must be integers")
    frame = frame.assign(step_index=indices.astype(int), speed=speeds)

    series = []
    for (label, terrain), group in frame.groupby(["label", "terrain"], sort=False):
        steps = group["step_index"].tolist()
        if any(b <= a for a, b in zip(steps, steps[1:])):
            raise SeriesFormatError(f"step indices of {label!r} on {terrain!r} are not strictly increasing")
        series.append(
            SpeedSeries(
                label=label,
                terrain=terrain,
                step_indices=tuple(int(i) for i in steps),
                speeds=tuple(float(v) for v in group["speed"]),
                unit=SpeedUnit(group["unit"].iloc[0]),
            )
        )

    logger.debug("series_read", source=str(source), series=len(series), rows=len(frame))
    return series


def write_series(
    series: Sequence[SpeedSeries],
    target: Union[str, Path, TextIO],
    header: Optional[Mapping[str, Any]] = None,
) -> None:
    """Write series as CSV rows sorted by (label, step_index)."""
    units = {s.unit for s in series}
    if len(units) > 1:
        raise SeriesFormatError(f"cannot write mixed units to one file: {sorted(u.value for u in units)}")

    rows = [
        (s.label, s.terrain, i, v, s.unit.value)
        for s in series
        for i, v in zip(s.step_indices, s.speeds)
    ]
    frame = pd.DataFrame(rows, columns=SERIES_COLUMNS)
    frame = frame.sort_values(["label", "step_index"], kind="stable")

    buffer = io.StringIO()
    if header:
        buffer.write(provenance_line(header))
    frame.to_csv(buffer, index=False, lineterminator="\n")
    _write(target, buffer.getvalue())


# Trajectories
def trajectory_frame(trajectory: GaitTrajectory) -> pd.DataFrame:
    return pd.DataFrame(
        [
            (s.index, s.height_multiple, s.disturbance, s.pushoff, s.post_transition_speed,
             s.step_time, s.midstance_speed, s.midstance_time, s.time_gain)
            for s in trajectory.steps
        ],
        columns=TRAJECTORY_COLUMNS,
    )


def write_trajectory_csv(
    trajectory: GaitTrajectory,
    target: Union[str, Path, TextIO],
    header: Mapping[str, Any],
) -> None:
    buffer = io.StringIO()
    buffer.write(provenance_line({**header, "terrain": trajectory.terrain_name}))
    trajectory_frame(trajectory).to_csv(buffer, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    _write(target, buffer.getvalue())


def read_trajectory_series(source: Source, label: str = "model") -> SpeedSeries:
    """Mid-stance speed series from a trajectory CSV written by `simulate`."""
    comments, body = _split_comments(_read_text(source))
    try:
        frame = pd.read_csv(io.StringIO(body), float_precision="round_trip")
    except (pd.errors.ParserError, pd.errors.EmptyDataError, ValueError) as e:
        raise SeriesFormatError(f"unreadable trajectory CSV: {e}") from e
    if list(frame.columns) != TRAJECTORY_COLUMNS:
        raise SeriesFormatError("not a trajectory CSV")
    terrain = parse_provenance(comments).get("terrain") or "unnamed"
    return SpeedSeries(
        label=label,
        terrain=terrain,
        step_indices=tuple(int(i) for i in frame["i"]),
        speeds=tuple(float(v) for v in frame["v_mid"]),
    )


def read_model_series(source: Source) -> SpeedSeries:
    """A single model series from either a trajectory CSV or a one-series speed CSV."""
    text = _read_text(source)
    _, body = _split_comments(text)
    first = body.splitlines()[0].strip() if body.strip() else ""
    if first.split(",") == TRAJECTORY_COLUMNS:
        return read_trajectory_series(io.StringIO(text))
    series = read_series(io.StringIO(text))
    if len(series) != 1:
        raise SeriesFormatError(f"model file must hold exactly one series, found {len(series)}")
    return series[0]


# Sweeps
def write_sweep_csv(rows: Sequence[HorizonSweepRow], target: Union[str, Path, TextIO], header: Mapping[str, Any]) -> None:
    frame = pd.DataFrame(
        [(r.m, r.work_excess, r.rho_vs_full, str(r.converged).lower()) for r in rows],
        columns=SWEEP_COLUMNS,
    )
    buffer = io.StringIO()
    buffer.write(provenance_line(header))
    frame.to_csv(buffer, index=False, float_format=FLOAT_FORMAT, lineterminator="\n", na_rep="nan")
    _write(target, buffer.getvalue())


def write_sweep_long(
    profiles: Mapping[int, Sequence[Tuple[int, float]]],
    target: Union[str, Path, TextIO],
    header: Mapping[str, Any],
) -> None:
    """Long-format normalised speeds: one row per (m, step index)."""
    frame = pd.DataFrame(
        [(m, i, v) for m, points in profiles.items() for i, v in points],
        columns=SWEEP_LONG_COLUMNS,
    )
    buffer = io.StringIO()
    buffer.write(provenance_line(header))
    frame.to_csv(buffer, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    _write(target, buffer.getvalue())


# Reports
def _json_safe(value: Any) -> Any:
    if isinstance(value, float) and not math.isfinite(value):
        return str(value)
    if isinstance(value, dict):
        return {k: _json_safe(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_json_safe(v) for v in value]
    return value


def dumps_json(payload: Mapping[str, Any]) -> str:
    """Deterministic JSON: sorted keys, two-space indent, non-finite floats as strings."""
    return json.dumps(_json_safe(dict(payload)), sort_keys=True, indent=2) + "\n"


def report_payload(report: ComparisonReport, header: Mapping[str, Any]) -> Dict[str, Any]:
    payload = report.model_dump(mode="python")
    payload["provenance"] = {
        **header,
        "seed": report.seed,
        "n_shuffles": report.n_shuffles,
        "dof": report.dof,
        "scale_floor": report.scale_floor,
    }
    return payload


def write_report_json(report: ComparisonReport, target: Union[str, Path, TextIO], header: Mapping[str, Any]) -> None:
    _write(target, dumps_json(report_payload(report, header)))
