"""Tests for terrain files, reversal and the built-in catalog."""

import math

import pytest

from app.core.errors import ConfigError, TerrainSyntaxError
from app.models.schemas import TerrainProfile
from app.services.terrain_service import (
    check_step_deltas,
    disturbances,
    load_terrain,
    parse_terrain,
    reverse,
    reversed_name,
    serialize_terrain,
    transitions,
    with_padding,
)

STAIRS = """\
# three steps up
name = stairs
unit_height = 0.05
pad_before = 2
pad_after = 4
heights = 1 2 3 *
"""


class TestParse:
    def test_full_file(self):
        profile = parse_terrain(STAIRS)
        assert profile.name == "stairs"
        assert profile.unit_height == 0.05
        assert profile.height_multiples == (1, 2, 3)
        assert profile.sustain
        assert profile.padded_multiples == (0, 0, 1, 2, 3, 3, 3, 3, 3)
        assert profile.step_count == 9

    def test_defaults_and_glued_marker(self):
        profile = parse_terrain("heights = -1 -1*\n", default_name="dd")
        assert profile.name == "dd"
        assert profile.unit_height == pytest.approx(0.075)
        assert profile.pad_before == profile.pad_after == 6
        assert profile.height_multiples == (-1, -1)
        assert profile.final_level == -1

    def test_not_sustained_returns_to_level(self):
        profile = parse_terrain("heights = 0 1 0\npad_before = 1\npad_after = 1\n")
        assert profile.padded_multiples == (0, 0, 1, 0, 0)

    def test_unknown_key(self):
        with pytest.raises(TerrainSyntaxError) as info:
            parse_terrain("name = x\nslope = 3\nheights = 1\n")
        assert info.value.line == 2

    def test_bad_token_column(self):
        with pytest.raises(TerrainSyntaxError) as info:
            parse_terrain("heights = 1 x 3\n")
        assert (info.value.line, info.value.column) == (1, 13)

    @pytest.mark.parametrize(
        "text",
        [
            "name = x\n",
            "heights = *\n",
            "heights = 1 2\nunit_height = -0.1\n",
            "heights = 1\npad_before = two\n",
            "heights = 1\npad_after = -1\n",
            "heights = 1.5\n",
            "heights 1 2\n",
            "heights = 1\nheights = 2\n",
        ],
    )
    def test_rejects_malformed(self, text):
        with pytest.raises(TerrainSyntaxError):
            parse_terrain(text)

    def test_missing_heights_points_past_end(self):
        with pytest.raises(TerrainSyntaxError) as info:
            parse_terrain("name = x\nunit_height = 0.1\n")
        assert info.value.line == 3

    def test_serialize_parses_back(self):
        profile = parse_terrain(STAIRS)
        assert parse_terrain(serialize_terrain(profile)) == profile

    def test_load_uses_file_stem(self, tmp_path):
        path = tmp_path / "ramp.terrain"
        path.write_text("heights = 1 2\n")
        assert load_terrain(path).name == "ramp"

    def test_load_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            load_terrain(tmp_path / "nope.terrain")


class TestGeometry:
    def test_step_delta_warning_positions(self):
        profile = TerrainProfile(name="cliff", height_multiples=(0, 2), pad_before=1, pad_after=1)
        assert check_step_deltas(profile) == [2, 3]
        assert profile.max_step_delta == 2

    def test_transitions_end_level(self, up_step):
        deltas = transitions(up_step, 0.79)
        assert len(deltas) == up_step.step_count + 1
        assert deltas[3] == pytest.approx(math.asin(0.075 / 0.79))
        assert deltas[-1] == 0.0
        assert disturbances(up_step, 0.79) == deltas[:-1]

    def test_with_padding(self, up_step):
        assert with_padding(up_step, 0).padded_multiples == (1,)
        with pytest.raises(ConfigError):
            with_padding(up_step, -1)


class TestReverse:
    @pytest.mark.parametrize(
        "multiples,sustain",
        [((1, 2, 3, 3, 3, 3, 2, 1, 0), False), ((1,), True), ((-1, -1, 0, -1), True), ((1, 0), False)],
    )
    def test_walks_footholds_backwards(self, multiples, sustain):
        profile = TerrainProfile(name="t", height_multiples=multiples, pad_before=3, pad_after=2, sustain=sustain)
        padded = profile.padded_multiples
        backwards = tuple(m - padded[-1] for m in reversed(padded))
        reversed_profile = reverse(profile)
        assert reversed_profile.padded_multiples == backwards
        assert (reversed_profile.pad_before, reversed_profile.step_count) == (2, profile.step_count)

    def test_twice_restores_footholds(self, up_step):
        assert reverse(reverse(up_step)).padded_multiples == up_step.padded_multiples

    def test_names(self):
        assert reversed_name("C1") == "C2"
        assert reversed_name("P") == "P-rev"
        assert reversed_name("P-rev") == "P"


class TestCatalog:
    def test_names(self, catalog):
        assert catalog.names() == ["control", "U", "D", "UD", "D&UD", "P", "C1", "C2"]

    def test_pyramid(self, catalog):
        pyramid = catalog.get("P")
        assert pyramid.height_multiples == (1, 2, 3, 3, 3, 3, 2, 1, 0)
        assert pyramid.step_count == 21
        assert catalog.entry("P").canonical

    def test_case_insensitive_lookup(self, catalog):
        assert catalog.get("p").name == "P"
        assert catalog.get("d&ud").name == "D&UD"

    def test_down_level_up(self, catalog):
        profile = catalog.get("D&UD")
        assert profile.height_multiples == (-1, -1, 0, 0)
        assert profile.sustain
        assert profile.final_level == 0
        assert not catalog.entry("D&UD").canonical

    def test_unknown_name(self, catalog):
        with pytest.raises(ConfigError):
            catalog.get("stairs")

    def test_complex_pair(self, catalog):
        c1, c2 = catalog.get("C1"), catalog.get("C2")
        assert c2.name == "C2"
        assert c2.padded_multiples == tuple(reversed(c1.padded_multiples))
        assert not catalog.entry("C2").canonical

    def test_every_entry_walkable_geometry(self, catalog):
        for entry in catalog.entries():
            assert entry.profile.max_step_delta <= 1
            assert entry.profile.pad_before == 6
