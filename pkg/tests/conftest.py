"""Shared fixtures."""

import pytest

from app.models.schemas import ModelParams, PlanSpec, SolverSettings, Strategy, TerrainProfile
from app.services.terrain_service import TerrainCatalog


@pytest.fixture
def params() -> ModelParams:
    """Nominal walker: alpha 0.41, u* 0.0342, S 0.79."""
    return ModelParams()


@pytest.fixture
def solver() -> SolverSettings:
    return SolverSettings()


@pytest.fixture
def catalog() -> TerrainCatalog:
    return TerrainCatalog(pad=6, unit_height=0.075)


@pytest.fixture
def short_pad_catalog() -> TerrainCatalog:
    return TerrainCatalog(pad=3, unit_height=0.075)


@pytest.fixture
def level() -> TerrainProfile:
    return TerrainProfile(name="level", height_multiples=(0,), pad_before=3, pad_after=3)


@pytest.fixture
def up_step() -> TerrainProfile:
    """One up-step kept to the end, short padding."""
    return TerrainProfile(name="U", height_multiples=(1,), pad_before=3, pad_after=3, sustain=True)


@pytest.fixture
def down_step() -> TerrainProfile:
    return TerrainProfile(name="D", height_multiples=(-1,), pad_before=3, pad_after=3, sustain=True)


@pytest.fixture
def bump() -> TerrainProfile:
    return TerrainProfile(name="bump", height_multiples=(1, 0), pad_before=3, pad_after=3)


@pytest.fixture
def make_spec():
    """PlanSpec factory with default solver settings."""
    def factory(strategy: Strategy, **kwargs) -> PlanSpec:
        return PlanSpec(strategy=strategy, solver=SolverSettings(), **kwargs)

    return factory
