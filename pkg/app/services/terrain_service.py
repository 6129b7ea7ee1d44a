"""Terrain profiles: file format, disturbances, reversal and the built-in catalog."""

import re
from pathlib import Path
from typing import Dict, List, Optional, Tuple

from app.config import settings
from app.core.errors import ConfigError, TerrainSyntaxError
from app.models.schemas import CatalogEntry, TerrainProfile
from app.services.walker_service import boundary_disturbances
from app.utils.kvparse import parse_assignments
from app.utils.logger import get_logger

logger = get_logger(__name__)

FIELD_ORDER = ("name", "unit_height", "pad_before", "pad_after", "heights")
SUSTAIN_MARKER = "*"
REVERSE_SUFFIX = "-rev"
MIRRORED_NAMES = {"C1": "C2", "C2": "C1"}


def parse_terrain(text: str, default_name: str = "custom") -> TerrainProfile:
    """
    Parse terrain-file content into a validated profile.

    Args:
        text: File content (`key = value` lines, `#` comments)
        default_name: Name used when the file has no `name` field

    Returns:
        TerrainProfile with unit height and padding defaults applied

    Raises:
        TerrainSyntaxError: Malformed line, unknown key, bad value or missing heights
    """
    assignments = parse_assignments(text, TerrainSyntaxError)
    fields: Dict[str, object] = {
        "name": default_name,
        "unit_height": settings.TERRAIN_UNIT_HEIGHT,
        "pad_before": settings.TERRAIN_PADDING,
        "pad_after": settings.TERRAIN_PADDING,
    }
    has_heights = False

    for a in assignments:
        if a.key not in FIELD_ORDER:
            raise TerrainSyntaxError(f"unknown key {a.key!r}", a.line, 1)
        if a.key == "name":
            fields["name"] = a.value
        elif a.key == "unit_height":
            try:
                unit = float(a.value)
            except ValueError:
                raise TerrainSyntaxError(f"unit_height {a.value!r} is not a number", a.line, a.column) from None
            if not unit > 0:
                raise TerrainSyntaxError("unit_height must be positive", a.line, a.column)
            fields["unit_height"] = unit
        elif a.key in ("pad_before", "pad_after"):
            try:
                pad = int(a.value)
            except ValueError:
                raise TerrainSyntaxError(f"{a.key} {a.value!r} is not an integer", a.line, a.column) from None
            if pad < 0:
                raise TerrainSyntaxError(f"{a.key} must not be negative", a.line, a.column)
            fields[a.key] = pad
        else:
            multiples, sustain = _parse_heights(a.value, a.line, a.column)
            fields["height_multiples"] = multiples
            fields["sustain"] = sustain
            has_heights = True

    if not has_heights:
        raise TerrainSyntaxError("missing heights field", len(text.splitlines()) + 1, 1)

    profile = TerrainProfile(**fields)
    check_step_deltas(profile)
    return profile


def _parse_heights(value: str, line: int, column: int) -> Tuple[Tuple[int, ...], bool]:
    tokens = [(m.group(), column + m.start()) for m in re.finditer(r"\S+", value)]
    sustain = False

    # trailing marker, either standalone or glued to the last multiple
    last, last_column = tokens[-1]
    if last == SUSTAIN_MARKER:
        tokens.pop()
        sustain = True
    elif last.endswith(SUSTAIN_MARKER):
        tokens[-1] = (last[:-1], last_column)
        sustain = True

    if not tokens:
        raise TerrainSyntaxError("heights needs at least one multiple", line, column)

    multiples = []
    for token, token_column in tokens:
        if not re.fullmatch(r"[+-]?\d+", token):
            raise TerrainSyntaxError(f"height multiple {token!r} is not an integer", line, token_column)
        multiples.append(int(token))
    return tuple(multiples), sustain


def serialize_terrain(profile: TerrainProfile) -> str:
    """Render a profile in the terrain file format, fields in canonical order."""
    if "#" in profile.name or "\n" in profile.name:
        raise ValueError(f"terrain name {profile.name!r} cannot be written to a terrain file")
    heights = " ".join(str(m) for m in profile.height_multiples)
    if profile.sustain:
        heights += f" {SUSTAIN_MARKER}"
    lines = [
        f"name = {profile.name}",
        f"unit_height = {profile.unit_height!r}",
        f"pad_before = {profile.pad_before}",
        f"pad_after = {profile.pad_after}",
        f"heights = {heights}",
    ]
    return "\n".join(lines) + "\n"


def load_terrain(path: Path) -> TerrainProfile:
    """Read a terrain file; the file stem names profiles without a `name` field."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError(f"cannot read terrain file {path}: {e}") from e
    return parse_terrain(text, default_name=path.stem)


def check_step_deltas(profile: TerrainProfile, max_delta: Optional[int] = None) -> List[int]:
    """Log a warning for each padded position whose height jump exceeds max_delta."""
    limit = settings.TERRAIN_MAX_STEP_DELTA if max_delta is None else max_delta
    offending = []
    previous = 0
    for position, multiple in enumerate(profile.padded_multiples):
        if abs(multiple - previous) > limit:
            offending.append(position)
        previous = multiple
    if offending:
        logger.warning(
            "terrain_step_delta_exceeded",
            terrain=profile.name,
            positions=offending,
            max_step_delta=limit,
        )
    return offending


def transitions(profile: TerrainProfile, step_length: float) -> Tuple[float, ...]:
    """N + 1 boundary disturbances: entry into each step, then the level exit."""
    return boundary_disturbances(profile.padded_heights, step_length)


def disturbances(profile: TerrainProfile, step_length: float) -> Tuple[float, ...]:
    """Disturbance entering each of the N padded steps."""
    return transitions(profile, step_length)[:-1]


def reverse(profile: TerrainProfile) -> TerrainProfile:
    """
    Walk the same footholds in the opposite direction, re-based to start at level 0.

    Padding swaps sides. A sustained profile keeps its elevation change (negated);
    when its first multiple is not the start level, one step of the new trailing
    padding becomes an explicit multiple so the final level stays expressible.
    """
    padded = profile.padded_multiples
    end_level = padded[-1] if padded else 0
    multiples = [m - end_level for m in reversed(profile.height_multiples)]
    pad_before, pad_after = profile.pad_after, profile.pad_before
    final_level = -end_level

    sustain = False
    if pad_after > 0 and final_level != 0:
        sustain = True
        if not multiples or multiples[-1] != final_level:
            multiples.append(final_level)
            pad_after -= 1

    return TerrainProfile(
        name=reversed_name(profile.name),
        unit_height=profile.unit_height,
        height_multiples=tuple(multiples),
        pad_before=pad_before,
        pad_after=pad_after,
        sustain=sustain,
    )


def reversed_name(name: str) -> str:
    if name in MIRRORED_NAMES:
        return MIRRORED_NAMES[name]
    if name.endswith(REVERSE_SUFFIX):
        return name[: -len(REVERSE_SUFFIX)]
    return name + REVERSE_SUFFIX


def with_padding(profile: TerrainProfile, pad: int) -> TerrainProfile:
    """Same terrain with `pad` level steps on each side."""
    if pad < 0:
        raise ConfigError("padding must not be negative")
    return profile.model_copy(update={"pad_before": pad, "pad_after": pad})


class TerrainCatalog:
    """Built-in terrains: level control, single steps, pyramid and the complex pair."""

    DEFINITIONS: Tuple[Tuple[str, Tuple[int, ...], bool, bool, str], ...] = (
        ("control", (0,), False, True, "Level walkway"),
        ("U", (1,), True, False, "Single up-step, elevation sustained"),
        ("D", (-1,), True, False, "Single down-step, elevation sustained"),
        ("UD", (1, 0), False, False, "Up-step followed by a down-step"),
        ("D&UD", (-1, -1, 0, 0), True, False, "Down-step, a level step, then back up"),
        ("P", (1, 2, 3, 3, 3, 3, 2, 1, 0), False, True, "Pyramid with a flat top, peak three steps up"),
        ("C1", (1, 2, 1, 0, -1, -1, 0, 1, 2, 3, 2, 1, 1, 0, -1, -1), False, False,
         "Complex terrain, sixteen uneven steps"),
    )

    def __init__(self, pad: Optional[int] = None, unit_height: Optional[float] = None):
        self.pad = settings.TERRAIN_PADDING if pad is None else pad
        self.unit_height = settings.TERRAIN_UNIT_HEIGHT if unit_height is None else unit_height
        self._entries: Dict[str, CatalogEntry] = {}

        for name, multiples, sustain, canonical, description in self.DEFINITIONS:
            profile = TerrainProfile(
                name=name,
                unit_height=self.unit_height,
                height_multiples=multiples,
                pad_before=self.pad,
                pad_after=self.pad,
                sustain=sustain,
            )
            self._entries[name] = CatalogEntry(profile=profile, canonical=canonical, description=description)

        c2 = reverse(self._entries["C1"].profile)
        self._entries["C2"] = CatalogEntry(
            profile=c2, canonical=False, description="Complex terrain 1 walked in reverse"
        )

        logger.debug("terrain_catalog_built", terrains=list(self._entries), pad=self.pad)

    def names(self) -> List[str]:
        return list(self._entries)

    def entries(self) -> List[CatalogEntry]:
        return list(self._entries.values())

    def entry(self, name: str) -> CatalogEntry:
        if name in self._entries:
            return self._entries[name]
        folded = {key.lower(): key for key in self._entries}
        if name.lower() in folded:
            return self._entries[folded[name.lower()]]
        raise ConfigError(f"unknown terrain {name!r}; built-in terrains are {', '.join(self._entries)}")

    def get(self, name: str) -> TerrainProfile:
        return self.entry(name).profile


# Singleton instance
_terrain_catalog: Optional[TerrainCatalog] = None


def get_terrain_catalog(pad: Optional[int] = None, unit_height: Optional[float] = None) -> TerrainCatalog:
    """
    Get or create the built-in terrain catalog.

    Args:
        pad: Level steps before and after each terrain
        unit_height: Height of one multiple (L)

    Returns:
        TerrainCatalog instance
    """
    global _terrain_catalog

    pad = settings.TERRAIN_PADDING if pad is None else pad
    unit_height = settings.TERRAIN_UNIT_HEIGHT if unit_height is None else unit_height
    if _terrain_catalog is None or (_terrain_catalog.pad, _terrain_catalog.unit_height) != (pad, unit_height):
        _terrain_catalog = TerrainCatalog(pad=pad, unit_height=unit_height)

    return _terrain_catalog
