"""Services package - walker dynamics, terrain, optimisation, analysis and file formats."""

from app.services.optimizer_service import OptimizerService, WindowProblem, solve_step_timing
from app.services.terrain_service import get_terrain_catalog, parse_terrain, reverse
from app.services.walker_service import WalkerService, located

__all__ = [
    "WalkerService",
    "located",
    "get_terrain_catalog",
    "parse_terrain",
    "reverse",
    "OptimizerService",
    "WindowProblem",
    "solve_step_timing",
]
