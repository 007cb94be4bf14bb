"""Receding-horizon search over sampled gate velocities.

Each upcoming gate contributes a layer of candidate velocities; edges join
consecutive layers and weigh the synchronised point-mass segment time between
them. Dijkstra over this layered graph picks the fastest velocity chain.
Candidate velocities come either from uniform random draws inside a cone
around the gate's exit direction, or from a coarse grid that is repeatedly
refocused around the current optimum.
"""

from __future__ import annotations

import heapq
import logging
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .gates import Gate
from .pmm_axis import AxisBounds, PmmSegment, segment_times_batch, solve_segment

log = logging.getLogger(__name__)

DEFAULT_HORIZON = 3
DEFAULT_EPS = 0.99
DEFAULT_MAX_ITER = 10
DEFAULT_H_RANDOM = 150


class NoPath(RuntimeError):
    pass


@dataclass(frozen=True)
class ConeGrid:
    """Sampling region in (speed, yaw, pitch) about a gate's exit direction.

    Angles are radians relative to the exit direction; yaw turns about the
    gate's up axis, pitch tilts towards it.
    """

    v_min: float = 0.0
    v_max: float = 20.0
    yaw_min: float = -np.pi / 3
    yaw_max: float = np.pi / 3
    pitch_min: float = -np.pi / 4
    pitch_max: float = np.pi / 4
    s: int = 3

    def __post_init__(self) -> None:
        if self.v_min < 0:
            raise ValueError("v_min must be >= 0")
        for lo, hi in self.ranges:
            if lo > hi:
                raise ValueError(f"empty cone range [{lo}, {hi}]")
        if self.s < 1:
            raise ValueError("s must be >= 1")

    @property
    def ranges(self) -> tuple[tuple[float, float], ...]:
        return (
            (self.v_min, self.v_max),
            (self.yaw_min, self.yaw_max),
            (self.pitch_min, self.pitch_max),
        )

    @property
    def spans(self) -> np.ndarray:
        return np.array([hi - lo for lo, hi in self.ranges])

    @property
    def steps(self) -> np.ndarray:
        return self.spans / (self.s - 1) if self.s > 1 else self.spans.copy()

    def with_ranges(self, ranges) -> ConeGrid:
        (v0, v1), (y0, y1), (p0, p1) = ranges
        return replace(self, v_min=v0, v_max=v1, yaw_min=y0, yaw_max=y1, pitch_min=p0, pitch_max=p1)

    @classmethod
    def symmetric(cls, v_max: float, yaw_span_deg: float, pitch_span_deg: float, s: int = 3, v_min: float = 0.0):
        """Cone with yaw in ``±yaw_span/2`` and pitch in ``±pitch_span/2`` (degrees)."""
        y, p = np.radians(yaw_span_deg) / 2, np.radians(pitch_span_deg) / 2
        return cls(v_min, v_max, -y, y, -p, p, s)


@dataclass
class PmmPlan:
    segments: list[PmmSegment]
    gate_velocities: list[np.ndarray]
    total_time: float

    @property
    def gate_positions(self) -> list[np.ndarray]:
        return [seg.end[0] for seg in self.segments]

    @property
    def start(self) -> tuple[np.ndarray, np.ndarray]:
        return self.segments[0].start

    @property
    def segment_end_times(self) -> np.ndarray:
        return np.cumsum([seg.duration for seg in self.segments])

    def evaluate(self, t: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        ends = self.segment_end_times
        k = min(int(np.searchsorted(ends, t, side="left")), len(self.segments) - 1)
        t0 = ends[k - 1] if k > 0 else 0.0
        return self.segments[k].evaluate(min(max(t - t0, 0.0), self.segments[k].duration))


@dataclass
class SearchResult:
    plan: PmmPlan
    chosen: list[int]
    velocities: list[np.ndarray]
    edges_evaluated: int

    @property
    def total_time(self) -> float:
        return self.plan.total_time


@dataclass
class RefocusResult:
    plan: PmmPlan
    iteration_times: list[float]
    cones: list[list[ConeGrid]]
    edges_evaluated: int
    velocities: list[np.ndarray] = field(default_factory=list)
    kept_incumbent: bool = False

    @property
    def iterations(self) -> int:
        return len(self.iteration_times)

    @property
    def total_time(self) -> float:
        return self.plan.total_time


def exit_frame(exit_dir: np.ndarray) -> np.ndarray:
    """Columns: exit direction, left, up."""
    e = np.asarray(exit_dir, dtype=float)
    e = e / np.linalg.norm(e)
    ref = np.array([0.0, 0.0, 1.0]) if abs(e[2]) < 0.99 else np.array([1.0, 0.0, 0.0])
    left = np.cross(ref, e)
    left /= np.linalg.norm(left)
    up = np.cross(e, left)
    return np.column_stack([e, left, up])


def coords_to_velocities(gate: Gate, coords: np.ndarray) -> np.ndarray:
    """(speed, yaw, pitch) rows to world-frame velocity vectors."""
    coords = np.atleast_2d(coords)
    v, yaw, pitch = coords[:, 0], coords[:, 1], coords[:, 2]
    local = np.stack([np.cos(pitch) * np.cos(yaw), np.cos(pitch) * np.sin(yaw), np.sin(pitch)], axis=1)
    return (v[:, None] * local) @ exit_frame(gate.exit_dir).T


def velocity_to_coords(gate: Gate, vel: np.ndarray) -> np.ndarray:
    local = exit_frame(gate.exit_dir).T @ np.asarray(vel, dtype=float)
    speed = float(np.linalg.norm(local))
    if speed == 0.0:
        return np.zeros(3)
    return np.array([speed, np.arctan2(local[1], local[0]), np.arcsin(np.clip(local[2] / speed, -1, 1))])


def _axis_values(lo: float, hi: float, s: int) -> np.ndarray:
    if s == 1:
        return np.array([0.5 * (lo + hi)])
    return np.linspace(lo, hi, s)


def grid_coords(cone: ConeGrid) -> np.ndarray:
    """All ``s**3`` (speed, yaw, pitch) grid points, endpoints included."""
    vs, ys, ps = (_axis_values(lo, hi, cone.s) for lo, hi in cone.ranges)
    return np.array([(v, y, p) for v in vs for y in ys for p in ps])


def grid_samples(gate: Gate, cone: ConeGrid) -> np.ndarray:
    return coords_to_velocities(gate, grid_coords(cone))


def random_coords(cone: ConeGrid, h: int, rng: np.random.Generator) -> np.ndarray:
    lows = np.array([lo for lo, _ in cone.ranges])
    highs = np.array([hi for _, hi in cone.ranges])
    return lows + rng.random((h, 3)) * (highs - lows)


def random_cone_samples(gate: Gate, cone: ConeGrid, h: int, rng_seed=None) -> np.ndarray:
    if h < 1:
        raise ValueError("h must be >= 1")
    rng = rng_seed if isinstance(rng_seed, np.random.Generator) else np.random.default_rng(rng_seed)
    return coords_to_velocities(gate, random_coords(cone, h, rng))


def edge_count_bound(h: int, horizon: int, iterations: int = 1) -> int:
    if min(h, horizon, iterations) < 1:
        raise ValueError("h, horizon and iterations must be >= 1")
    return (h + h * h * (horizon - 1)) * iterations


def _bounds_arrays(u) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(u, AxisBounds):
        u = (u, u, u)
    return np.array([b.u_lo for b in u]), np.array([b.u_hi for b in u])


def build_plan(start, positions: Sequence[np.ndarray], velocities: Sequence[np.ndarray], u) -> PmmPlan:
    """Chain synchronised segments from ``start`` through the given gate states."""
    segments = []
    p, v = (np.asarray(x, dtype=float) for x in start)
    for pos, vel in zip(positions, velocities):
        seg = solve_segment((p, v), (pos, vel), u)
        segments.append(seg)
        p, v = np.asarray(pos, dtype=float), np.asarray(vel, dtype=float)
    total = 0.0
    for seg in segments:
        total += seg.duration
    return PmmPlan(segments, [np.asarray(v, dtype=float) for v in velocities], total)


def shortest_velocity_path(
    start,
    positions: Sequence[np.ndarray],
    node_sets: Sequence[np.ndarray],
    u,
    lazy: bool = True,
) -> SearchResult:
    """Fastest chain of one velocity per gate, by Dijkstra on the layered graph.

    With ``lazy`` the outgoing edges of a node are timed only when it is
    expanded; otherwise every edge is timed up front.
    """
    chosen, _, edges = _dijkstra(start, positions, node_sets, u, lazy)
    vels = [np.asarray(node_sets[i], dtype=float).reshape(-1, 3)[j] for i, j in enumerate(chosen)]
    plan = build_plan(start, positions, vels, u)
    return SearchResult(plan, chosen, vels, edges)


def _dijkstra(start, positions, node_sets, u, lazy):
    if not positions:
        raise ValueError("need at least one gate")
    if any(len(ns) == 0 for ns in node_sets):
        raise ValueError("every gate needs at least one velocity node")
    lo, hi = _bounds_arrays(u)
    p0, v0 = (np.asarray(x, dtype=float) for x in start)
    pos = [np.asarray(p, dtype=float) for p in positions]
    nodes = [np.asarray(ns, dtype=float).reshape(-1, 3) for ns in node_sets]
    n_layers = len(pos)
    edges = 0

    def out_times(layer: int, idx: int) -> np.ndarray:
        # layer -1 is the start state
        nonlocal edges
        if layer < 0:
            src_p, src_v = p0, v0
        else:
            src_p, src_v = pos[layer], nodes[layer][idx]
        nxt = nodes[layer + 1]
        edges += len(nxt)
        return segment_times_batch(src_p, src_v, pos[layer + 1], nxt, lo, hi)

    cache: dict[tuple[int, int], np.ndarray] = {}
    if not lazy:
        cache[(-1, 0)] = out_times(-1, 0)
        for layer in range(n_layers - 1):
            # whole layer at once: (h_i, h_{i+1}) times
            src_v = nodes[layer][:, None, :]
            nxt = nodes[layer + 1][None, :, :]
            mat = segment_times_batch(pos[layer], src_v, pos[layer + 1], nxt, lo, hi)
            edges += mat.size
            for idx in range(len(nodes[layer])):
                cache[(layer, idx)] = mat[idx]

    dist = [np.full(len(ns), np.inf) for ns in nodes]
    parent = [np.full(len(ns), -1, dtype=int) for ns in nodes]
    done = [np.zeros(len(ns), dtype=bool) for ns in nodes]
    heap: list[tuple[float, int, int]] = [(0.0, -1, 0)]
    goal: tuple[float, int] | None = None
    while heap:
        d, layer, idx = heapq.heappop(heap)
        if layer >= 0:
            if done[layer][idx]:
                continue
            done[layer][idx] = True
            if layer == n_layers - 1:
                goal = (d, idx)
                break
        times = cache.pop((layer, idx)) if not lazy else out_times(layer, idx)
        nl = layer + 1
        cand = d + times
        better = cand < dist[nl]
        for j in np.flatnonzero(better & ~done[nl]):
            dist[nl][j] = cand[j]
            parent[nl][j] = idx
            heapq.heappush(heap, (float(cand[j]), nl, int(j)))
    if goal is None:
        raise NoPath("no finite-time chain through the sampled velocities")

    chosen = [goal[1]]
    for layer in range(n_layers - 1, 0, -1):
        chosen.append(int(parent[layer][chosen[-1]]))
    chosen.reverse()
    return chosen, goal[0], edges


def refocus_coords(cone: ConeGrid, optimum: np.ndarray, feasible: ConeGrid) -> ConeGrid:
    """Cone centred on ``optimum`` (speed, yaw, pitch) with half-widths of half a grid step."""
    half = 0.5 * cone.steps
    ranges = []
    for k, (f_lo, f_hi) in enumerate(feasible.ranges):
        c = float(optimum[k])
        ranges.append((max(c - half[k], f_lo), min(c + half[k], f_hi)))
    return cone.with_ranges(ranges)


def refocus_cone(cone: ConeGrid, optimum: np.ndarray, gate: Gate, feasible: ConeGrid | None = None) -> ConeGrid:
    """Shrink ``cone`` around a world-frame optimum velocity at ``gate``.

    The new cone spans one previous grid step per dimension, so an odd grid
    keeps the previous optimum as a sample and each refocus halves (``s = 3``)
    the spans, clamped to ``feasible`` (defaults to ``cone``).
    """
    return refocus_coords(cone, velocity_to_coords(gate, optimum), feasible or cone)


def _positions(gates: Sequence[Gate]) -> list[np.ndarray]:
    return [g.center for g in gates]


def plan_refocusing(
    start,
    gates: Sequence[Gate],
    initial_cone: ConeGrid,
    u,
    eps: float = DEFAULT_EPS,
    max_iter: int = DEFAULT_MAX_ITER,
    lazy: bool = True,
    incumbent: Sequence[np.ndarray] | None = None,
) -> RefocusResult:
    """Grid search with iterative cone refocusing.

    Stops once an iteration fails to cut the best time by the factor ``eps``
    (``T_k > eps * T_{k-1}``) or after ``max_iter`` iterations.

    ``incumbent`` holds gate velocities from an earlier solve (leading gates
    first, possibly fewer than ``gates``). The plan through them, padded with
    the search's own choices, is returned instead when it is strictly faster.
    """
    if not gates:
        raise ValueError("need at least one gate")
    if not 0.0 < eps < 1.0:
        raise ValueError("eps must lie in (0, 1)")
    cones = [initial_cone] * len(gates)
    history: list[list[ConeGrid]] = []
    times: list[float] = []
    edges = 0
    best_time, best_vels = np.inf, None
    positions = _positions(gates)
    for _ in range(max_iter):
        history.append(list(cones))
        coords = [grid_coords(c) for c in cones]
        node_sets = [coords_to_velocities(g, c) for g, c in zip(gates, coords)]
        chosen, t_k, n_edges = _dijkstra(start, positions, node_sets, u, lazy)
        edges += n_edges
        times.append(t_k)
        if t_k < best_time:
            best_time, best_vels = t_k, [ns[j] for ns, j in zip(node_sets, chosen)]
        if len(times) > 1 and t_k > eps * times[-2]:
            break
        cones = [refocus_coords(c, xs[j], initial_cone) for c, xs, j in zip(cones, coords, chosen)]
    log.debug("refocus converged in %d iterations: %s", len(times), times)
    plan = build_plan(start, positions, best_vels, u)
    if incumbent is not None and len(incumbent):
        vels = [np.asarray(v, dtype=float) for v in incumbent[: len(gates)]] + best_vels[len(incumbent) :]
        other = build_plan(start, positions, vels, u)
        if other.total_time < plan.total_time:
            return RefocusResult(other, times, history, edges, vels, kept_incumbent=True)
    return RefocusResult(plan, times, history, edges, best_vels)


def plan_random(
    start,
    gates: Sequence[Gate],
    cone: ConeGrid,
    u,
    h: int = DEFAULT_H_RANDOM,
    rng_seed=None,
    lazy: bool = True,
) -> SearchResult:
    rng = rng_seed if isinstance(rng_seed, np.random.Generator) else np.random.default_rng(rng_seed)
    node_sets = [random_cone_samples(g, cone, h, rng) for g in gates]
    return shortest_velocity_path(start, _positions(gates), node_sets, u, lazy=lazy)


def horizon_gates(gates: Sequence[Gate], next_index: int, horizon: int, wrap: bool = True) -> list[Gate]:
    """The next ``horizon`` gates starting at ``next_index``, wrapping for multi-lap tracks."""
    n = len(gates)
    if wrap:
        return [gates[(next_index + k) % n] for k in range(horizon)]
    return list(gates[next_index : next_index + horizon])


def plan_track(
    start,
    gates: Sequence[Gate],
    cone: ConeGrid,
    u,
    horizon: int = DEFAULT_HORIZON,
    strategy: str = "random",
    h: int = DEFAULT_H_RANDOM,
    rng_seed=None,
    eps: float = DEFAULT_EPS,
    max_iter: int = DEFAULT_MAX_ITER,
    lazy: bool = True,
) -> PmmPlan:
    """Whole-course plan: receding-horizon search per gate, committing the first segment each time."""
    rng = np.random.default_rng(rng_seed)
    p, v = (np.asarray(x, dtype=float) for x in start)
    vels = []
    for i in range(len(gates)):
        window = list(gates[i : i + horizon])
        if strategy == "random":
            res = plan_random((p, v), window, cone, u, h=h, rng_seed=rng, lazy=lazy)
        elif strategy == "refocus":
            res = plan_refocusing((p, v), window, cone, u, eps=eps, max_iter=max_iter, lazy=lazy)
        else:
            raise ValueError(f"unknown strategy {strategy!r}")
        v = res.velocities[0]
        p = gates[i].center
        vels.append(v)
    return build_plan(start, _positions(gates), vels, u)
