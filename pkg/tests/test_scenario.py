"""Scenario file parsing, validation and round trips."""

from importlib.resources import files

import numpy as np
import pytest

from pmmreplan.scenario import ParseError, Scenario, dump_scenario, parse_scenario, parse_scenario_text

MINIMAL = """\
track:
  gates:
    - {center: [1.0, 2.0, 3.0], exit_dir: [0.0, 2.0, 0.0]}
"""


class TestParse:
    """Reading scenario text."""

    def test_minimal_file_takes_defaults(self):
        sc = parse_scenario_text(MINIMAL)
        assert sc.gates[0].id == "G1"
        assert sc.gates[0].pass_radius == 0.5
        assert sc == Scenario(gates=sc.gates)
        gate = sc.build_gates()[0]
        np.testing.assert_array_equal(gate.exit_dir, [0.0, 1.0, 0.0])

    def test_missing_key_is_named(self):
        with pytest.raises(ParseError) as info:
            parse_scenario_text("track:\n  gates:\n    - {center: [0, 0, 0]}\n")
        assert "exit_dir" in str(info.value)
        assert info.value.line == 3

    def test_missing_track(self):
        with pytest.raises(ParseError) as info:
            parse_scenario_text("name: x\n")
        assert info.value.key == "track"

    def test_unknown_key_rejected(self):
        with pytest.raises(ParseError) as info:
            parse_scenario_text(MINIMAL + "run: {laps: 1, lapz: 2}\n")
        assert "lapz" in str(info.value)
        assert info.value.line == 4

    def test_unknown_top_level_key(self):
        with pytest.raises(ParseError) as info:
            parse_scenario_text(MINIMAL + "wnd: []\n")
        assert "wnd" in str(info.value)

    @pytest.mark.parametrize(
        "extra",
        [
            "pmm: {a_lo: [1, -1, -1], a_hi: [1, 1, 1]}\n",
            "run: {laps: 0}\n",
            "sim: {dt: 0.003, control_hz: 100}\n",
            "wind: [{box_min: [0, 0, 0], box_max: [1, 0, 1], force: [0, 0, 0]}]\n",
            "tracker: {N: 0}\n",
            "planner: {accept_drift: 0}\n",
            "quad: {m: -1}\n",
            "start: {p: [0, 0]}\n",
            "seed: 1.5\n",
        ],
    )
    def test_invalid_values_rejected(self, extra):
        with pytest.raises(ParseError):
            parse_scenario_text(MINIMAL + extra)

    def test_duplicate_gate_ids(self):
        text = "track:\n  gates:\n" + "    - {id: A, center: [0, 0, 0], exit_dir: [1, 0, 0]}\n" * 2
        with pytest.raises(ParseError):
            parse_scenario_text(text)

    def test_bad_yaml_reports_line(self):
        with pytest.raises(ParseError) as info:
            parse_scenario_text(MINIMAL + "run: {laps: [\n")
        assert info.value.line is not None

    def test_missing_file(self, tmp_path):
        with pytest.raises(ParseError):
            parse_scenario(tmp_path / "nope.yaml")

    def test_motion_knots(self):
        text = MINIMAL.replace("exit_dir: [0.0, 2.0, 0.0]}", "exit_dir: [0.0, 2.0, 0.0],\n"
                               "       motion: [{t: 1.0, offset: [0, 0, 0]}, {t: 3.0, offset: [0, 1.5, 0]}]}")
        gate = parse_scenario_text(text).build_gates()[0]
        np.testing.assert_allclose(gate.motion.offset(2.0), [0.0, 0.75, 0.0])


class TestRoundTrip:
    """Serialising and re-reading."""

    @pytest.mark.parametrize("name", ["splits_like", "wind_gate", "moving_gate"])
    def test_shipped_tracks(self, name, tmp_path):
        sc = parse_scenario(files("pmmreplan") / "tracks" / f"{name}.yaml")
        (tmp_path / "s.yaml").write_text(dump_scenario(sc))
        assert parse_scenario(tmp_path / "s.yaml") == sc

    def test_derived_configs(self):
        sc = parse_scenario(files("pmmreplan") / "tracks" / "wind_gate.yaml")
        cfg = sc.contouring_config()
        np.testing.assert_allclose(cfg.drag, np.array(sc.quad.D) / sc.quad.m)
        assert cfg.control_dt == pytest.approx(0.01)
        assert [b.u_hi for b in sc.accel_bounds()] == list(sc.pmm.a_hi)
