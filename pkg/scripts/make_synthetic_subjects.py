"""Generate a synthetic subject speed-series CSV from a min-energy plan."""

import argparse
import sys
from pathlib import Path

# Add parent directory to path
sys.path.insert(0, str(Path(__file__).parent.parent))

from app.core.errors import GaitPlannerError
from app.models.schemas import ModelParams, PlanSpec, SpeedSeries, Strategy
from app.planners import get_planner
from app.services import series_service
from app.services.analysis_service import synthetic_subjects
from app.services.terrain_service import get_terrain_catalog
from app.utils.logger import get_logger

logger = get_logger(__name__)


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--terrain", default="P", help="Built-in terrain name")
    parser.add_argument("--subjects", type=int, default=10, help="Number of subjects")
    parser.add_argument("--noise", type=float, default=0.01, help="Noise scale (model units)")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--out", default="data/samples/synthetic_subjects.csv")
    args = parser.parse_args()

    try:
        terrain = get_terrain_catalog().get(args.terrain)
        result = get_planner(PlanSpec(strategy=Strategy.MIN_ENERGY), ModelParams.from_settings()).run(terrain)
        model = SpeedSeries.from_trajectory(result.trajectory, label="model")
        subjects = synthetic_subjects(model, args.subjects, args.noise, seed=args.seed)
        series_service.write_series(
            subjects,
            args.out,
            header=series_service.provenance(terrain=terrain.name, seed=args.seed, noise=args.noise),
        )
    except GaitPlannerError as e:
        logger.error("Synthetic subjects failed", error=str(e), exc_info=True)
        return 1

    print(f"Wrote {len(subjects)} subjects on {terrain.name} to {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
