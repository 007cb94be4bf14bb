"""Closed-form time-optimal bang-bang motion of a point mass, one axis at a time.

A single axis with bounded acceleration ``u_lo <= u <= u_hi`` reaches a target
position/velocity fastest by saturating at one bound and switching once to the
other. Each switch order is solved through the velocity at the switch point::

    v1**2 * (1/(2 a1) - 1/(2 a2)) = dp + v0**2/(2 a1) - v2**2/(2 a2)

after which ``t1 = (v1 - v0)/a1`` and ``t2 = (v2 - v1)/a2``.

Three axes are synchronised by stretching the faster ones to the slowest
axis' duration, scaling their acceleration bounds by ``alpha``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import _kernels

FEAS_TOL = 1e-9
EVAL_TOL = 1e-9
TIE_TOL = 1e-12
AXES = "xyz"


class PmmError(Exception):
    """Base class for point-mass solver failures."""

    axis: str | None = None


class Infeasible(PmmError):
    pass


class InfeasibleDuration(PmmError):
    pass


class NoConvergence(PmmError):
    pass


class OutOfRange(PmmError, ValueError):
    pass


class SwitchOrder(enum.Enum):
    HI_THEN_LO = "HiThenLo"
    LO_THEN_HI = "LoThenHi"


@dataclass(frozen=True)
class AxisBoundary:
    p0: float
    v0: float
    p2: float
    v2: float

    def __post_init__(self) -> None:
        if not all(math.isfinite(x) for x in (self.p0, self.v0, self.p2, self.v2)):
            raise ValueError(f"non-finite boundary {self}")

    def mirrored(self) -> AxisBoundary:
        return AxisBoundary(-self.p0, -self.v0, -self.p2, -self.v2)


@dataclass(frozen=True)
class AxisBounds:
    u_lo: float
    u_hi: float

    def __post_init__(self) -> None:
        if not (self.u_lo < 0.0 < self.u_hi):
            raise ValueError(f"bounds must satisfy u_lo < 0 < u_hi, got {self}")

    def scaled(self, alpha: float) -> AxisBounds:
        return AxisBounds(alpha * self.u_lo, alpha * self.u_hi)


@dataclass(frozen=True)
class AxisBangBang:
    """Two constant-acceleration phases: ``a1`` for ``t1`` seconds, then ``a2`` for ``t2``."""

    order: SwitchOrder
    t1: float
    t2: float
    a1: float
    a2: float
    boundary: AxisBoundary

    @property
    def total_time(self) -> float:
        return self.t1 + self.t2

    @property
    def v1(self) -> float:
        return self.boundary.v0 + self.a1 * self.t1

    @property
    def p1(self) -> float:
        b = self.boundary
        return b.p0 + b.v0 * self.t1 + 0.5 * self.a1 * self.t1 * self.t1

    def end_state(self) -> tuple[float, float]:
        v1 = self.v1
        return self.p1 + v1 * self.t2 + 0.5 * self.a2 * self.t2 * self.t2, v1 + self.a2 * self.t2


@dataclass(frozen=True)
class SyncResult:
    traj: AxisBangBang
    alpha: float


def _v1_squared(dp: float, v0: float, v2: float, a1: float, a2: float) -> float:
    inv1 = 0.5 / a1
    inv2 = 0.5 / a2
    rhs = dp + v0 * v0 * inv1 - v2 * v2 * inv2
    return rhs / (inv1 - inv2)


def _order_candidates(b: AxisBoundary, a1: float, a2: float) -> list[tuple[float, float]]:
    """All (t1, t2) with both durations nonnegative for one switch order."""
    dp = b.p2 - b.p0
    v1sq = _v1_squared(dp, b.v0, b.v2, a1, a2)
    if v1sq < 0.0:
        scale = 1.0 + b.v0 * b.v0 + b.v2 * b.v2 + abs(dp) * max(abs(a1), abs(a2))
        if v1sq < -1e-12 * scale:
            return []
        v1sq = 0.0
    root = math.sqrt(v1sq)
    out = []
    for v1 in (root, -root) if root > 0.0 else (root,):
        t1 = (v1 - b.v0) / a1
        t2 = (b.v2 - v1) / a2
        if t1 < -FEAS_TOL or t2 < -FEAS_TOL:
            continue
        out.append((max(t1, 0.0), max(t2, 0.0)))
    return out


def solve_axis_min_time(b: AxisBoundary, u: AxisBounds) -> AxisBangBang:
    """Minimum-time bang-bang profile from ``(p0, v0)`` to ``(p2, v2)``."""
    best: AxisBangBang | None = None
    for order, a1, a2 in (
        (SwitchOrder.HI_THEN_LO, u.u_hi, u.u_lo),
        (SwitchOrder.LO_THEN_HI, u.u_lo, u.u_hi),
    ):
        for t1, t2 in _order_candidates(b, a1, a2):
            if best is None or t1 + t2 < best.total_time - TIE_TOL:
                best = AxisBangBang(order, t1, t2, a1, a2, b)
    if best is None:
        raise Infeasible(f"no bang-bang solution for {b} under {u}")
    return best


def _flat(*xs, trailing: int = 0):
    arrays = [np.asarray(x, dtype=float) for x in xs]
    shape = np.broadcast_shapes(*(x.shape for x in arrays))
    flat_shape = (-1,) + shape[len(shape) - trailing :] if trailing else (-1,)
    return shape, [np.broadcast_to(x, shape).reshape(flat_shape) for x in arrays]


def min_time_batch(p0, v0, p2, v2, u_lo, u_hi) -> np.ndarray:
    """Vectorised minimum time; broadcasts over all arguments.

    Same arithmetic as :func:`solve_axis_min_time`, compiled; results agree
    bit for bit with the scalar solver.
    """
    shape, args = _flat(p0, v0, p2, v2, u_lo, u_hi)
    return _kernels.min_time_flat(*args).reshape(shape)


def evaluate_axis(traj: AxisBangBang, t: float) -> tuple[float, float, float]:
    """Position, velocity and acceleration at time ``t`` from the start."""
    if t < -EVAL_TOL or t > traj.total_time + EVAL_TOL:
        raise OutOfRange(f"t={t} outside [0, {traj.total_time}]")
    b = traj.boundary
    if t <= traj.t1:
        t = max(t, 0.0)
        return b.p0 + b.v0 * t + 0.5 * traj.a1 * t * t, b.v0 + traj.a1 * t, traj.a1
    tau = min(t, traj.total_time) - traj.t1
    v1 = traj.v1
    return traj.p1 + v1 * tau + 0.5 * traj.a2 * tau * tau, v1 + traj.a2 * tau, traj.a2


def sample_axis(traj: AxisBangBang, times: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Vectorised :func:`evaluate_axis`; times are clipped to the profile."""
    t = np.clip(np.asarray(times, dtype=float), 0.0, traj.total_time)
    b = traj.boundary
    first = t <= traj.t1
    tau = np.where(first, t, t - traj.t1)
    p_start = np.where(first, b.p0, traj.p1)
    v_start = np.where(first, b.v0, traj.v1)
    acc = np.where(first, traj.a1, traj.a2)
    return p_start + v_start * tau + 0.5 * acc * tau * tau, v_start + acc * tau, acc


def _extreme_positions(p0, v0, v2, lo, hi, T):
    """Least and greatest reachable end position at time ``T`` given end velocity ``v2``."""
    dv = v2 - v0
    base = p0 + v0 * T
    t1 = (dv - lo * T) / (hi - lo)
    t2 = T - t1
    p_max = base + 0.5 * hi * t1 * t1 + hi * t1 * t2 + 0.5 * lo * t2 * t2
    s1 = (dv - hi * T) / (lo - hi)
    s2 = T - s1
    p_min = base + 0.5 * lo * s1 * s1 + lo * s1 * s2 + 0.5 * hi * s2 * s2
    return p_min, p_max


def _duration_feasible(p0, v0, p2, v2, lo, hi, T):
    """Whether some control within the bounds meets the boundary in exactly ``T``.

    Works elementwise on arrays. The reachable end positions at a fixed end
    velocity form an interval whose ends are the two full-bound bang-bang
    profiles, so the feasible durations are a union of at most two intervals.
    """
    dv = v2 - v0
    scale = 1.0 + np.abs(p0) + np.abs(p2) + (np.abs(v0) + np.abs(v2)) * T + (hi - lo) * T * T
    tol = 1e-10 * scale
    vel_ok = (lo * T <= dv + tol) & (dv <= hi * T + tol)
    p_min, p_max = _extreme_positions(p0, v0, v2, lo, hi, T)
    return vel_ok & (p_min <= p2 + tol) & (p2 <= p_max + tol) & (T >= 0.0)


def duration_feasible(b: AxisBoundary, u: AxisBounds, T: float) -> bool:
    return bool(_duration_feasible(b.p0, b.v0, b.p2, b.v2, u.u_lo, u.u_hi, T))


def bang_bang_times(b: AxisBoundary, u: AxisBounds) -> list[float]:
    """Durations of every full-bound two-phase profile meeting the boundary.

    These are the edges of the feasible-duration set.
    """
    out = []
    for a1, a2 in ((u.u_hi, u.u_lo), (u.u_lo, u.u_hi)):
        out.extend(t1 + t2 for t1, t2 in _order_candidates(b, a1, a2))
    return sorted(out)


def _coasting(b: AxisBoundary, T: float, scale: float) -> bool:
    dv = b.v2 - b.v0
    dpp = (b.p2 - b.p0) - b.v0 * T
    return abs(dv) <= 1e-12 * scale and abs(dpp) <= 1e-12 * scale * max(T, 1.0)


def _polish(t1, alpha, T, A1, A2, dv, dpp):
    """Newton refinement of the augmented system in (t1, alpha)."""
    k = A1 - A2

    def residual(t1, alpha):
        t2 = T - t1
        S = A1 * t1 + A2 * t2
        Q = 0.5 * A1 * t1 * t1 + A1 * t1 * t2 + 0.5 * A2 * t2 * t2
        return alpha * S - dv, alpha * Q - dpp, S, Q

    r1, r2, S, Q = residual(t1, alpha)
    for _ in range(3):
        det = alpha * k * Q - alpha * k * (T - t1) * S
        if det == 0.0 or not math.isfinite(det):
            break
        # J = [[alpha*k, S], [alpha*k*t2, Q]]
        d_t1 = (Q * r1 - S * r2) / det
        d_al = (alpha * k * r2 - alpha * k * (T - t1) * r1) / det
        nt1 = min(max(t1 - d_t1, 0.0), T)
        nal = alpha - d_al
        n1, n2, nS, nQ = residual(nt1, nal)
        if abs(n1) + abs(n2) >= abs(r1) + abs(r2):
            break
        t1, alpha, r1, r2 = nt1, nal, n1, n2
    return t1, alpha


def _augmented_candidates(b: AxisBoundary, u: AxisBounds, T: float) -> list[tuple[float, AxisBangBang]]:
    dv = b.v2 - b.v0
    dpp = (b.p2 - b.p0) - b.v0 * T
    out = []
    for order, A1, A2 in (
        (SwitchOrder.HI_THEN_LO, u.u_hi, u.u_lo),
        (SwitchOrder.LO_THEN_HI, u.u_lo, u.u_hi),
    ):
        k = A1 - A2
        qa = 0.5 * dv * k
        qb = k * (dpp - dv * T)
        qc = A2 * T * (dpp - 0.5 * dv * T)
        roots: list[float] = []
        if abs(qa) * T * T <= 1e-14 * (abs(qb) * T + abs(qc)):
            if qb != 0.0:
                roots.append(-qc / qb)
        else:
            disc = qb * qb - 4.0 * qa * qc
            if disc < 0.0:
                if disc < -1e-12 * (qb * qb + abs(4.0 * qa * qc)):
                    continue
                disc = 0.0
            sq = math.sqrt(disc)
            q = -0.5 * (qb + math.copysign(sq, qb))
            roots.append(q / qa)
            if q != 0.0:
                roots.append(qc / q)
        for t1 in roots:
            if not (-FEAS_TOL * max(T, 1.0) <= t1 <= T + FEAS_TOL * max(T, 1.0)):
                continue
            t1 = min(max(t1, 0.0), T)
            t2 = T - t1
            S = A1 * t1 + A2 * t2
            Q = 0.5 * A1 * t1 * t1 + A1 * t1 * t2 + 0.5 * A2 * t2 * t2
            denom = S * S + Q * Q
            if denom == 0.0:
                continue
            alpha = (dv * S + dpp * Q) / denom
            if alpha <= 0.0:
                continue
            t1, alpha = _polish(t1, alpha, T, A1, A2, dv, dpp)
            if not (0.0 < alpha <= 1.0 + FEAS_TOL):
                continue
            alpha = min(alpha, 1.0)
            out.append((alpha, AxisBangBang(order, t1, T - t1, alpha * A1, alpha * A2, b)))
    return out


def _bisect_alpha(b: AxisBoundary, u: AxisBounds, T: float, iters: int = 200) -> SyncResult:
    lo, hi = 0.0, 1.0
    if solve_axis_min_time(b, u.scaled(1e-12)).total_time < T:
        raise NoConvergence(f"min time never reaches {T} for {b}; alpha not bracketed")
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if solve_axis_min_time(b, u.scaled(mid)).total_time > T:
            lo = mid
        else:
            hi = mid
    traj = solve_axis_min_time(b, u.scaled(hi))
    if abs(traj.total_time - T) > 1e-9:
        raise NoConvergence(f"bisection on alpha ended {traj.total_time - T:.3e} s off target")
    return SyncResult(traj, hi)


def scale_axis_to_duration(b: AxisBoundary, u: AxisBounds, T_star: float) -> SyncResult:
    """Stretch one axis to last exactly ``T_star`` by scaling its bounds with ``alpha``.

    When several ``alpha`` satisfy the augmented system the largest is taken.
    An axis that needs no acceleration at all gets ``alpha = 1`` and a
    zero-acceleration profile split evenly over ``T_star``.
    """
    fastest = solve_axis_min_time(b, u)
    if T_star < fastest.total_time - FEAS_TOL:
        raise InfeasibleDuration(
            f"T_star={T_star} is shorter than the axis minimum time {fastest.total_time}"
        )
    if T_star <= fastest.total_time + FEAS_TOL:
        return SyncResult(fastest, 1.0)
    if not duration_feasible(b, u, T_star):
        raise InfeasibleDuration(f"no bounded control meets {b} in exactly {T_star} s")
    scale = 1.0 + abs(b.v0) + abs(b.v2) + abs(b.p2 - b.p0)
    if _coasting(b, T_star, scale):
        half = 0.5 * T_star
        return SyncResult(AxisBangBang(SwitchOrder.HI_THEN_LO, half, T_star - half, 0.0, 0.0, b), 1.0)
    cands = _augmented_candidates(b, u, T_star)
    if not cands:
        return _bisect_alpha(b, u, T_star)
    # largest alpha wins; HiThenLo comes first so it wins exact ties
    alpha, traj = max(cands, key=lambda c: c[0])
    return SyncResult(traj, alpha)


def _as_vec(x) -> np.ndarray:
    v = np.asarray(x, dtype=float).reshape(3)
    return v


@dataclass(frozen=True)
class PmmSegment:
    """Three synchronised axes sharing one duration."""

    axes: tuple[AxisBangBang, AxisBangBang, AxisBangBang]
    alphas: tuple[float, float, float]
    duration: float

    @property
    def start(self) -> tuple[np.ndarray, np.ndarray]:
        return (
            np.array([a.boundary.p0 for a in self.axes]),
            np.array([a.boundary.v0 for a in self.axes]),
        )

    @property
    def end(self) -> tuple[np.ndarray, np.ndarray]:
        return (
            np.array([a.boundary.p2 for a in self.axes]),
            np.array([a.boundary.v2 for a in self.axes]),
        )

    def evaluate(self, t: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        rows = [evaluate_axis(a, min(t, a.total_time)) for a in self.axes]
        p, v, acc = zip(*rows)
        return np.array(p), np.array(v), np.array(acc)

    def sample(self, times: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Positions, velocities, accelerations with shape ``(len(times), 3)``."""
        cols = [sample_axis(a, times) for a in self.axes]
        return tuple(np.stack([c[i] for c in cols], axis=1) for i in range(3))


def _axis_bounds(u: AxisBounds | Sequence[AxisBounds]) -> tuple[AxisBounds, AxisBounds, AxisBounds]:
    if isinstance(u, AxisBounds):
        return (u, u, u)
    if len(u) != 3:
        raise ValueError("need one AxisBounds per axis")
    return tuple(u)  # type: ignore[return-value]


def _common_duration(boundaries, bounds, fastest) -> float:
    T = max(f.total_time for f in fastest)
    if all(duration_feasible(b, u, T) for b, u in zip(boundaries, bounds)):
        return T
    # T sits in some axis' infeasible-duration gap; the next common feasible
    # time is the right edge of a gap, i.e. one of the full-bound profiles
    edges = sorted({t for b, u in zip(boundaries, bounds) for t in bang_bang_times(b, u) if t > T})
    for t in edges:
        if all(duration_feasible(b, u, t) for b, u in zip(boundaries, bounds)):
            return t
    raise Infeasible("no common feasible duration across axes")


def solve_segment(start, end, u: AxisBounds | Sequence[AxisBounds]) -> PmmSegment:
    """Time-optimal synchronised segment between two (position, velocity) pairs.

    The duration is the largest per-axis minimum time, unless that duration is
    unreachable for another axis (possible when its end velocity is nonzero);
    then it is the smallest duration all three axes can meet exactly.
    """
    (p0, v0), (p2, v2) = start, end
    p0, v0, p2, v2 = map(_as_vec, (p0, v0, p2, v2))
    bounds = _axis_bounds(u)
    boundaries = [AxisBoundary(p0[i], v0[i], p2[i], v2[i]) for i in range(3)]
    fastest = []
    for i in range(3):
        try:
            fastest.append(solve_axis_min_time(boundaries[i], bounds[i]))
        except PmmError as exc:
            exc.axis = AXES[i]
            raise
    T = _common_duration(boundaries, bounds, fastest)
    axes, alphas = [], []
    for i in range(3):
        if fastest[i].total_time == T:
            axes.append(fastest[i])
            alphas.append(1.0)
            continue
        try:
            res = scale_axis_to_duration(boundaries[i], bounds[i], T)
        except PmmError as exc:
            exc.axis = AXES[i]
            raise
        axes.append(res.traj)
        alphas.append(res.alpha)
    return PmmSegment(tuple(axes), tuple(alphas), T)  # type: ignore[arg-type]


def segment_times_batch(p0, v0, p2, v2, lo, hi) -> np.ndarray:
    """Synchronised segment durations for broadcast arrays of shape ``(..., 3)``.

    Matches ``solve_segment(...).duration`` elementwise; ``inf`` when no
    common duration exists.
    """
    shape, args = _flat(p0, v0, p2, v2, lo, hi, trailing=1)
    return _kernels.segment_times_flat(*args).reshape(shape[:-1])
