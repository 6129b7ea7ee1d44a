"""Planners package - push-off strategies for uneven terrain."""

from typing import Dict, Optional, Type

from app.models.schemas import ModelParams, PlanSpec, Strategy
from app.planners.base_planner import BasePlanner
from app.planners.finite_horizon_planner import FiniteHorizonPlanner
from app.planners.full_horizon_planner import FullHorizonPlanner
from app.planners.nominal_planner import NominalPlanner
from app.planners.reactive_planner import ReactivePlanner
from app.planners.tight_planner import TightPlanner

PLANNERS: Dict[Strategy, Type[BasePlanner]] = {
    Strategy.NOMINAL: NominalPlanner,
    Strategy.TIGHT: TightPlanner,
    Strategy.REACTIVE: ReactivePlanner,
    Strategy.MIN_ENERGY: FullHorizonPlanner,
    Strategy.HORIZON: FiniteHorizonPlanner,
}


def get_planner(spec: PlanSpec, params: Optional[ModelParams] = None) -> BasePlanner:
    """Planner instance for a strategy spec."""
    return PLANNERS[spec.strategy](spec=spec, params=params)


__all__ = [
    "BasePlanner",
    "NominalPlanner",
    "TightPlanner",
    "ReactivePlanner",
    "FullHorizonPlanner",
    "FiniteHorizonPlanner",
    "PLANNERS",
    "get_planner",
]
