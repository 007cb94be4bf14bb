"""Independent reference computations used by the tests.

Nothing here imports the package's solvers; each oracle re-derives its answer
by brute force (grids, bisection, enumeration, quadrature or small LPs).
"""

from __future__ import annotations

import itertools
import math

import numpy as np
from scipy.integrate import quad
from scipy.optimize import linprog


def _bisect(f, a: float, b: float, iters: int = 100) -> float:
    fa = f(a)
    for _ in range(iters):
        m = 0.5 * (a + b)
        fm = f(m)
        if (fm < 0.0) == (fa < 0.0):
            a, fa = m, fm
        else:
            b = m
    return 0.5 * (a + b)


def axis_min_time(p0, v0, p2, v2, lo, hi, n: int = 4001) -> float:
    """Minimum bang-bang time by a dense grid over the switch time plus bisection.

    For each switch order the second phase length follows from the velocity
    equation; roots of the position residual over the first phase length are
    bracketed on a grid and refined by bisection.
    """
    dp = p2 - p0
    amin, amax = min(-lo, hi), max(-lo, hi)
    v1_cap = math.sqrt(2.0 * amax * abs(dp) + (v0 * v0 + v2 * v2) * amax / amin)
    horizon = 1.01 * (abs(v0) + v1_cap) / amin + 1e-6
    best = math.inf
    for a1, a2 in ((hi, lo), (lo, hi)):

        def t2_of(t1):
            return (v2 - v0 - a1 * t1) / a2

        def residual(t1):
            t2 = t2_of(t1)
            v1 = v0 + a1 * t1
            return v0 * t1 + 0.5 * a1 * t1 * t1 + v1 * t2 + 0.5 * a2 * t2 * t2 - dp

        t1 = np.linspace(0.0, horizon, n)
        edge = (v2 - v0) / a1
        if 0.0 <= edge <= horizon:
            t1 = np.sort(np.append(t1, edge))
        t1 = t1[t2_of(t1) >= -1e-12]
        if len(t1) == 0:
            continue
        r = np.array([residual(x) for x in t1])
        for k in np.flatnonzero(np.abs(r) <= 1e-12):
            best = min(best, t1[k] + max(t2_of(t1[k]), 0.0))
        for k in np.flatnonzero(np.sign(r[:-1]) * np.sign(r[1:]) < 0):
            root = _bisect(residual, t1[k], t1[k + 1])
            best = min(best, root + max(t2_of(root), 0.0))
    return best


def piecewise_final_state(p0, v0, accels, durations) -> tuple[float, float]:
    """Exact end state after constant-acceleration phases."""
    p, v = p0, v0
    for a, d in zip(accels, durations):
        p += v * d + 0.5 * a * d * d
        v += a * d
    return p, v


def duration_feasible_lp(p0, v0, p2, v2, lo, hi, T, n: int = 400) -> bool:
    """Whether a piecewise-constant control on ``n`` equal steps hits the boundary in ``T``.

    A feasible LP proves feasibility; an infeasible one only means no control
    on this grid works, which for a gap much wider than the grid step is the
    same thing.
    """
    if T <= 0.0:
        return abs(p2 - p0) < 1e-12 and abs(v2 - v0) < 1e-12
    h = T / n
    k = np.arange(n)
    A = np.vstack([np.full(n, h), h * (T - (k + 0.5) * h)])
    b = np.array([v2 - v0, p2 - p0 - v0 * T])
    res = linprog(np.zeros(n), A_eq=A, b_eq=b, bounds=[(lo, hi)] * n, method="highs")
    return res.status == 0


def exhaustive_best_chain(segment_time, start, positions, node_sets):
    """Fastest velocity chain by trying every combination.

    ``segment_time(p0, v0, p1, v1)`` gives one edge weight. Returns
    ``(best_time, best_indices)``.
    """
    best, best_idx = math.inf, None
    for idx in itertools.product(*[range(len(ns)) for ns in node_sets]):
        p, v = start
        total = 0.0
        for layer, j in enumerate(idx):
            nxt = node_sets[layer][j]
            total += segment_time(p, v, positions[layer], nxt)
            p, v = positions[layer], nxt
        if total < best:
            best, best_idx = total, idx
    return best, best_idx


def arc_length_quadrature(speed_fn, t_end: float, breaks=()) -> float:
    """Integral of ``speed_fn`` over ``[0, t_end]`` with adaptive quadrature."""
    pts = sorted(b for b in breaks if 0.0 < b < t_end)
    edges = [0.0, *pts, t_end]
    return sum(quad(speed_fn, a, b, limit=200, epsabs=1e-11, epsrel=1e-11)[0] for a, b in zip(edges[:-1], edges[1:]))


def dense_projection(positions: np.ndarray, thetas: np.ndarray, p: np.ndarray, refine: int = 50) -> float:
    """Progress of the closest point on a polyline, by dense resampling of every segment."""
    w = np.linspace(0.0, 1.0, refine + 1)
    a, b = positions[:-1], positions[1:]
    pts = a[:, None, :] + w[None, :, None] * (b - a)[:, None, :]
    th = thetas[:-1, None] + w[None, :] * np.diff(thetas)[:, None]
    d = np.linalg.norm(pts - p, axis=2)
    k = np.unravel_index(np.argmin(d), d.shape)
    return float(th[k])


def richardson_errors(step, x0: np.ndarray, t_end: float, dts) -> list[float]:
    """Endpoint error of ``step(x, dt)`` at each ``dt`` against a run with ``min(dts)/16``."""
    def run(dt):
        x = x0.copy()
        for _ in range(int(round(t_end / dt))):
            x = step(x, dt)
        return x

    ref = run(min(dts) / 16.0)
    return [float(np.linalg.norm(run(dt) - ref)) for dt in dts]
