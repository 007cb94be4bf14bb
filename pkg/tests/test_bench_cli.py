"""Command implementations, artifacts and the command line."""

import json

import numpy as np
import pytest

from pmmreplan.bench import BenchReport, PlanArtifacts, cmd_bench, cmd_plan, cmd_race, reference_queries
from pmmreplan.cli import EXIT_EPISODE, EXIT_OK, EXIT_PARSE, main, resolve_scenario, shipped_tracks
from pmmreplan.episode import EpisodeResult
from pmmreplan.scenario import parse_scenario_text

SHORT = """\
name: short
track:
  gates:
    - {id: A, center: [4.0, 0.0, 2.0], exit_dir: [1.0, 0.0, 0.0]}
    - {id: B, center: [9.0, 3.0, 2.5], exit_dir: [0.0, 1.0, 0.0]}
start: {p: [0.0, 0.0, 2.0], v: [0.0, 0.0, 0.0]}
pmm: {a_lo: [-8.0, -8.0, -5.0], a_hi: [8.0, 8.0, 12.0]}
cone: {v_max: 8.0, h_random: 20}
run: {replan_every: 2, timeout: 6.0}
"""


@pytest.fixture
def short_file(tmp_path):
    path = tmp_path / "short.yaml"
    path.write_text(SHORT)
    return path


class TestPlanCommand:
    """One-shot planning."""

    @pytest.mark.parametrize("strategy", ["random", "refocus"])
    def test_artifacts_round_trip(self, strategy, tmp_path):
        art = cmd_plan(parse_scenario_text(SHORT), strategy, out=tmp_path, echo=False)
        back = PlanArtifacts.from_dict(json.loads((tmp_path / "plan.json").read_text()))
        assert back == art
        assert (tmp_path / "path.csv").read_text().startswith("theta,x,y,z")
        assert art.total_time == pytest.approx(sum(art.segment_durations), rel=1e-12)
        assert art.gate_ids == ["A", "B"]

    def test_single_gate_single_node(self):
        text = SHORT.replace("cone: {v_max: 8.0, h_random: 20}", "cone: {v_max: 8.0, s: 1, h_random: 1}")
        text = text.replace("    - {id: B, center: [9.0, 3.0, 2.5], exit_dir: [0.0, 1.0, 0.0]}\n", "")
        art = cmd_plan(parse_scenario_text(text), "refocus", echo=False)
        assert len(art.velocities) == 1 and len(art.segment_durations) == 1
        assert art.iteration_times[-1] == pytest.approx(art.total_time)

    def test_unknown_strategy(self):
        with pytest.raises(ValueError):
            cmd_plan(parse_scenario_text(SHORT), "greedy", echo=False)


class TestRaceCommand:
    """Closed-loop episodes and their artifacts."""

    def test_metrics_round_trip(self, tmp_path):
        r = cmd_race(parse_scenario_text(SHORT), "replan", out=tmp_path, echo=False)
        assert r.all_valid
        back = EpisodeResult.from_dict(json.loads((tmp_path / "replan_metrics.json").read_text()))
        assert back.metrics() == r.metrics()
        rows = (tmp_path / "replan_log.csv").read_text().splitlines()
        assert rows[0].startswith("t,px,py,pz") and len(rows) == r.ticks + 1

    def test_timeout_is_reported(self):
        sc = parse_scenario_text(SHORT.replace("timeout: 6.0", "timeout: 0.05"))
        r = cmd_race(sc, "fixed", echo=False)
        assert r.status == "timeout" and not r.completed


class TestBenchCommand:
    """Strategy comparison on shared queries."""

    def test_report_round_trip(self, tmp_path):
        sc = parse_scenario_text(SHORT)
        report = cmd_bench(sc, [0, 1], out=tmp_path, episodes=False, echo=False)
        back = BenchReport.from_dict(json.loads((tmp_path / "bench.json").read_text()))
        assert back.to_dict() == report.to_dict()
        n = sum(len(reference_queries(sc, s)) for s in (0, 1))
        assert report.n_queries == n == len(report.query_seeds)
        assert 0.0 <= report.dominance_fraction() <= 1.0

    def test_queries_follow_reference(self):
        sc = parse_scenario_text(SHORT)
        queries = reference_queries(sc, 0)
        np.testing.assert_allclose(queries[0][0][0], sc.start.p)
        assert all(1 <= len(window) <= sc.planner.horizon for _, window in queries)

    def test_empty_seeds_rejected(self):
        with pytest.raises(ValueError):
            cmd_bench(parse_scenario_text(SHORT), [], echo=False)


class TestCli:
    """Argument handling and exit codes."""

    def test_shipped_tracks_resolve(self):
        assert {"splits_like", "wind_gate", "moving_gate"} <= set(shipped_tracks())
        assert resolve_scenario("wind_gate").is_file()

    def test_plan_ok(self, short_file, tmp_path, capsys):
        assert main(["plan", "--scenario", str(short_file), "--out", str(tmp_path)]) == EXIT_OK
        assert "T*_k:" in capsys.readouterr().out
        assert (tmp_path / "plan.json").is_file()

    def test_parse_error_exit(self, tmp_path, capsys):
        bad = tmp_path / "bad.yaml"
        bad.write_text(SHORT + "bogus: 1\n")
        assert main(["plan", "--scenario", str(bad)]) == EXIT_PARSE
        assert "bogus" in capsys.readouterr().err

    def test_missing_file_exit(self, tmp_path):
        assert main(["plan", "--scenario", str(tmp_path / "none.yaml")]) == EXIT_PARSE

    def test_bad_override_exit(self, short_file):
        assert main(["race", "--scenario", str(short_file), "--replan-every", "0"]) == EXIT_PARSE

    def test_empty_seed_list_exit(self, short_file):
        assert main(["bench", "--scenario", str(short_file), "--seeds", "--no-episodes"]) == EXIT_PARSE

    def test_episode_failure_exit(self, tmp_path):
        path = tmp_path / "slow.yaml"
        path.write_text(SHORT.replace("timeout: 6.0", "timeout: 0.05"))
        assert main(["race", "--scenario", str(path), "--mode", "fixed"]) == EXIT_EPISODE

    def test_race_both(self, short_file, tmp_path, capsys):
        assert main(["race", "--scenario", str(short_file), "--mode", "both", "--out", str(tmp_path)]) == EXIT_OK
        out = capsys.readouterr().out
        assert "mode=fixed" in out and "mode=replan" in out and "misses" in out
        assert (tmp_path / "fixed_metrics.json").is_file() and (tmp_path / "replan_metrics.json").is_file()

    def test_bench_ok(self, short_file, tmp_path, capsys):
        assert main(["bench", "--scenario", str(short_file), "--seeds", "0", "--out", str(tmp_path)]) == EXIT_OK
        assert "refocus within" in capsys.readouterr().out
        assert json.loads((tmp_path / "bench.json").read_text())["seeds"] == [0]
