"""Command implementations: one-shot planning, races and the strategy benchmark.

Each command takes a parsed :class:`Scenario`, optionally writes artifacts to
an output directory, and returns an in-memory result whose JSON form re-parses
to the same values.
"""

from __future__ import annotations

import json
import logging
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path as FsPath

import numpy as np

from .episode import EpisodeResult, run_episode
from .gates import gate_at
from .path import assemble_path
from .scenario import Scenario
from .velocity_graph import PmmPlan, horizon_gates, plan_random, plan_refocusing, plan_track

log = logging.getLogger(__name__)

STRATEGIES = ("random", "refocus")
DOMINANCE_TOL = 0.01
QUERY_DT = 0.2


@dataclass
class PlanArtifacts:
    strategy: str
    total_time: float
    edges_evaluated: int
    wall_time: float
    iteration_times: list[float]
    velocities: list[list[float]]
    segment_durations: list[float]
    gate_ids: list[str]

    def to_json(self, file=None) -> str:
        text = json.dumps(asdict(self), indent=2)
        if file is not None:
            FsPath(file).write_text(text)
        return text

    @classmethod
    def from_dict(cls, d: dict) -> PlanArtifacts:
        return cls(**d)


@dataclass
class StrategyStats:
    t_star: list[float] = field(default_factory=list)
    wall_times: list[float] = field(default_factory=list)
    edges: list[int] = field(default_factory=list)

    @property
    def total_wall_time(self) -> float:
        return float(sum(self.wall_times))

    @property
    def mean_wall_time(self) -> float:
        return float(np.mean(self.wall_times)) if self.wall_times else 0.0

    @property
    def max_wall_time(self) -> float:
        return float(np.max(self.wall_times)) if self.wall_times else 0.0

    def summary(self) -> dict:
        return {
            "queries": len(self.t_star),
            "mean_wall_time": self.mean_wall_time,
            "max_wall_time": self.max_wall_time,
            "total_wall_time": self.total_wall_time,
            "mean_t_star": float(np.mean(self.t_star)) if self.t_star else 0.0,
            "mean_edges": float(np.mean(self.edges)) if self.edges else 0.0,
        }


@dataclass
class BenchReport:
    scenario: str
    seeds: list[int]
    strategies: dict[str, StrategyStats]
    query_seeds: list[int] = field(default_factory=list)
    episodes: dict[str, list[dict]] = field(default_factory=dict)

    @property
    def n_queries(self) -> int:
        return len(self.strategies["refocus"].t_star)

    def dominance_fraction(self, tol: float = DOMINANCE_TOL) -> float:
        """Share of queries where refocusing is no worse than random sampling within ``tol``."""
        ref = np.array(self.strategies["refocus"].t_star)
        rnd = np.array(self.strategies["random"].t_star)
        if len(ref) == 0:
            return 0.0
        return float(np.mean(ref <= rnd * (1.0 + tol)))

    def to_dict(self) -> dict:
        return {
            "scenario": self.scenario,
            "seeds": list(self.seeds),
            "query_seeds": list(self.query_seeds),
            "strategies": {k: asdict(v) for k, v in self.strategies.items()},
            "summary": {k: v.summary() for k, v in self.strategies.items()},
            "dominance_fraction": self.dominance_fraction(),
            "episodes": self.episodes,
        }

    def to_json(self, file=None) -> str:
        text = json.dumps(self.to_dict(), indent=2)
        if file is not None:
            FsPath(file).write_text(text)
        return text

    @classmethod
    def from_dict(cls, d: dict) -> BenchReport:
        strategies = {k: StrategyStats(**v) for k, v in d["strategies"].items()}
        return cls(d["scenario"], list(d["seeds"]), strategies, list(d.get("query_seeds", [])),
                   dict(d.get("episodes", {})))

    def table(self) -> str:
        rows = [f"{'strategy':<10}{'queries':>8}{'mean T*':>10}{'mean ms':>10}{'max ms':>10}{'total s':>10}{'edges':>10}"]
        for name, st in self.strategies.items():
            s = st.summary()
            rows.append(
                f"{name:<10}{s['queries']:>8d}{s['mean_t_star']:>10.3f}{1e3 * s['mean_wall_time']:>10.2f}"
                f"{1e3 * s['max_wall_time']:>10.2f}{s['total_wall_time']:>10.3f}{s['mean_edges']:>10.0f}"
            )
        rows.append(f"refocus within {100 * DOMINANCE_TOL:.0f}% of random: {100 * self.dominance_fraction():.1f}%")
        return "\n".join(rows)


def _start(sc: Scenario) -> tuple[np.ndarray, np.ndarray]:
    return np.array(sc.start.p, dtype=float), np.array(sc.start.v, dtype=float)


def _solve(sc: Scenario, strategy: str, start, gates, rng, lazy: bool):
    if strategy == "random":
        return plan_random(start, gates, sc.cone_grid(), sc.accel_bounds(), h=sc.cone.h_random, rng_seed=rng, lazy=lazy)
    if strategy == "refocus":
        pl = sc.planner
        return plan_refocusing(start, gates, sc.cone_grid(), sc.accel_bounds(), eps=pl.eps, max_iter=pl.max_iter, lazy=lazy)
    raise ValueError(f"unknown strategy {strategy!r}; expected one of {STRATEGIES}")


def cmd_plan(sc: Scenario, strategy: str = "refocus", out=None, seed: int | None = None,
             lazy: bool | None = None, echo: bool = True) -> PlanArtifacts:
    """Plan once from the start state over the first gates of the horizon."""
    lazy = sc.planner.lazy if lazy is None else lazy
    seed = sc.seed if seed is None else seed
    gates = [gate_at(g, 0.0) for g in sc.build_gates()[: sc.planner.horizon]]
    t0 = time.perf_counter()
    res = _solve(sc, strategy, _start(sc), gates, np.random.default_rng(seed), lazy)
    wall = time.perf_counter() - t0
    plan: PmmPlan = res.plan
    iters = list(res.iteration_times) if strategy == "refocus" else [plan.total_time]
    art = PlanArtifacts(
        strategy=strategy,
        total_time=float(plan.total_time),
        edges_evaluated=int(res.edges_evaluated),
        wall_time=wall,
        iteration_times=[float(x) for x in iters],
        velocities=[[float(c) for c in v] for v in res.velocities],
        segment_durations=[float(s.duration) for s in plan.segments],
        gate_ids=[g.id for g in gates],
    )
    if out is not None:
        out = FsPath(out)
        out.mkdir(parents=True, exist_ok=True)
        art.to_json(out / "plan.json")
        assemble_path(plan).to_csv(out / "path.csv")
    if echo:
        print(f"strategy={strategy} T*={art.total_time:.4f} s edges={art.edges_evaluated} wall={1e3 * wall:.2f} ms")
        if strategy == "refocus":
            print("T*_k: " + " ".join(f"{x:.4f}" for x in art.iteration_times))
    return art


def cmd_race(sc: Scenario, mode: str = "replan", seed: int | None = None, out=None,
             async_planner: bool = False, echo: bool = True) -> EpisodeResult:
    """Fly one episode, writing ``<mode>_metrics.json`` and ``<mode>_log.csv`` under ``out``."""
    result = run_episode(sc, mode, seed=seed, record_log=out is not None, async_planner=async_planner)
    if out is not None:
        out = FsPath(out)
        out.mkdir(parents=True, exist_ok=True)
        result.to_json(out / f"{result.mode}_metrics.json")
        result.write_log(out / f"{result.mode}_log.csv")
    if echo:
        print(format_episode(result))
    return result


def format_episode(r: EpisodeResult) -> str:
    lap = f"{r.lap_time:.3f}" if r.lap_time is not None else "-"
    devs = " ".join(f"{d:.3f}" for d in r.deviations)
    return (f"mode={r.mode} status={r.status} lap={lap} s misses={r.misses} "
            f"mean_e_c={r.mean_contour_error:.4f} m start_e_c={r.start_of_plan_contour_error:.4f} m "
            f"replans={r.replans} deviations=[{devs}]")


def compare_modes(results: list[EpisodeResult]) -> str:
    head = f"{'mode':<8}{'status':<11}{'lap s':>8}{'misses':>8}{'max dev':>9}{'mean e_c':>10}"
    rows = [head]
    for r in results:
        lap = f"{r.lap_time:.3f}" if r.lap_time is not None else "-"
        worst = max(r.deviations, default=0.0)
        rows.append(f"{r.mode:<8}{r.status:<11}{lap:>8}{r.misses:>8d}{worst:>9.3f}{r.mean_contour_error:>10.4f}")
    return "\n".join(rows)


def reference_queries(sc: Scenario, seed: int, query_dt: float = QUERY_DT):
    """Planning queries ``(start, window)`` sampled along the seed's fixed reference plan."""
    gates = [gate_at(g, 0.0) for g in sc.build_gates()]
    plan = plan_track(_start(sc), gates, sc.cone_grid(), sc.accel_bounds(), horizon=sc.planner.horizon,
                      strategy="random", h=sc.cone.h_random, rng_seed=seed, lazy=sc.planner.lazy)
    ends = plan.segment_end_times
    queries = []
    for t in np.arange(0.0, plan.total_time, query_dt):
        nxt = int(np.searchsorted(ends, t, side="right"))
        if nxt >= len(gates):
            break
        p, v, _ = plan.evaluate(float(t))
        window = horizon_gates(gates, nxt, sc.planner.horizon, wrap=False)
        queries.append(((np.array(p), np.array(v)), window))
    return queries


def cmd_bench(sc: Scenario, seeds, out=None, lazy: bool | None = None, episodes: bool = True,
              query_dt: float = QUERY_DT, echo: bool = True) -> BenchReport:
    """Run both strategies on identical queries for every seed and aggregate the results."""
    seeds = [int(s) for s in seeds]
    if not seeds:
        raise ValueError("need at least one seed")
    lazy = sc.planner.lazy if lazy is None else lazy
    stats = {name: StrategyStats() for name in STRATEGIES}
    report = BenchReport(sc.name, seeds, stats)
    for seed in seeds:
        rng = np.random.default_rng(seed)
        for start, window in reference_queries(sc, seed, query_dt):
            report.query_seeds.append(seed)
            for name in STRATEGIES:
                t0 = time.perf_counter()
                res = _solve(sc, name, start, window, rng, lazy)
                stats[name].wall_times.append(time.perf_counter() - t0)
                stats[name].t_star.append(float(res.total_time))
                stats[name].edges.append(int(res.edges_evaluated))
        if episodes:
            for mode in ("fixed", "replan"):
                r = run_episode(sc, mode, seed=seed, record_log=False)
                report.episodes.setdefault(mode, []).append(r.metrics())
        log.info("seed %d done, %d queries so far", seed, report.n_queries)
    if out is not None:
        out = FsPath(out)
        out.mkdir(parents=True, exist_ok=True)
        report.to_json(out / "bench.json")
    if echo:
        print(report.table())
    return report
