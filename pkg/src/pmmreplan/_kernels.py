"""Compiled edge-time kernels for the velocity graph.

Same arithmetic, in the same order, as the pure-Python solver in
``pmm_axis``; the two are checked against each other bit for bit.
"""

from __future__ import annotations

import math

import numba
import numpy as np

FEAS_TOL = 1e-9
INF = np.inf


@numba.njit(cache=True)
def _pair_totals(dp, v0, v2, a1, a2, out, k):
    inv1 = 0.5 / a1
    inv2 = 0.5 / a2
    rhs = dp + v0 * v0 * inv1 - v2 * v2 * inv2
    v1sq = rhs / (inv1 - inv2)
    out[k] = INF
    out[k + 1] = INF
    if v1sq < 0.0:
        scale = 1.0 + v0 * v0 + v2 * v2 + abs(dp) * max(abs(a1), abs(a2))
        if v1sq < -1e-12 * scale:
            return
        v1sq = 0.0
    root = math.sqrt(v1sq)
    for s in range(2):
        v1 = root if s == 0 else -root
        t1 = (v1 - v0) / a1
        t2 = (v2 - v1) / a2
        if t1 >= -FEAS_TOL and t2 >= -FEAS_TOL:
            out[k + s] = max(t1, 0.0) + max(t2, 0.0)


@numba.njit(cache=True)
def axis_feasible(p0, v0, p2, v2, lo, hi, T):
    if T < 0.0:
        return False
    dv = v2 - v0
    scale = 1.0 + abs(p0) + abs(p2) + (abs(v0) + abs(v2)) * T + (hi - lo) * T * T
    tol = 1e-10 * scale
    if not (lo * T <= dv + tol and dv <= hi * T + tol):
        return False
    base = p0 + v0 * T
    t1 = (dv - lo * T) / (hi - lo)
    t2 = T - t1
    p_max = base + 0.5 * hi * t1 * t1 + hi * t1 * t2 + 0.5 * lo * t2 * t2
    s1 = (dv - hi * T) / (lo - hi)
    s2 = T - s1
    p_min = base + 0.5 * lo * s1 * s1 + lo * s1 * s2 + 0.5 * hi * s2 * s2
    return p_min <= p2 + tol and p2 <= p_max + tol


@numba.njit(cache=True)
def _row_time(P0, V0, P2, V2, LO, HI, i, tots):
    T = 0.0
    for a in range(3):
        _pair_totals(P2[i, a] - P0[i, a], V0[i, a], V2[i, a], HI[i, a], LO[i, a], tots, 4 * a)
        _pair_totals(P2[i, a] - P0[i, a], V0[i, a], V2[i, a], LO[i, a], HI[i, a], tots, 4 * a + 2)
        m = min(min(tots[4 * a], tots[4 * a + 1]), min(tots[4 * a + 2], tots[4 * a + 3]))
        if m > T:
            T = m
    if T == INF:
        return INF
    if _all_feasible(P0, V0, P2, V2, LO, HI, i, T):
        return T
    # T falls in some axis' infeasible-duration gap: take the smallest larger
    # full-bound profile time that every axis can meet
    best = INF
    for c in tots:
        if T < c < best and _all_feasible(P0, V0, P2, V2, LO, HI, i, c):
            best = c
    return best


@numba.njit(cache=True)
def _all_feasible(P0, V0, P2, V2, LO, HI, i, T):
    for a in range(3):
        if not axis_feasible(P0[i, a], V0[i, a], P2[i, a], V2[i, a], LO[i, a], HI[i, a], T):
            return False
    return True


@numba.njit(cache=True)
def segment_times_flat(P0, V0, P2, V2, LO, HI):
    n = P0.shape[0]
    out = np.empty(n)
    tots = np.empty(12)
    for i in range(n):
        out[i] = _row_time(P0, V0, P2, V2, LO, HI, i, tots)
    return out


@numba.njit(cache=True)
def min_time_flat(P0, V0, P2, V2, LO, HI):
    n = P0.shape[0]
    out = np.empty(n)
    tots = np.empty(4)
    for i in range(n):
        dp = P2[i] - P0[i]
        _pair_totals(dp, V0[i], V2[i], HI[i], LO[i], tots, 0)
        _pair_totals(dp, V0[i], V2[i], LO[i], HI[i], tots, 2)
        out[i] = min(min(tots[0], tots[1]), min(tots[2], tots[3]))
    return out
