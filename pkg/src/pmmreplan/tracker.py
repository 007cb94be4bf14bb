"""Receding-horizon contouring tracker on a point-mass model, plus the
attitude/rate cascade that turns its acceleration command into rotor thrusts.

The horizon optimisation is a sequence of convex QPs: the reference is
linearised around the current progress guess, the QP is solved with OSQP,
the result is projected back onto the constraint set and accepted by a
backtracking line search on the exact cost. The cost therefore never rises
above that of the warm start.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numba
import numpy as np
import osqp
import scipy.sparse as sp

from .path import Path
from .quad import QuadParams, RotorCommand, rotor_mix, rotor_unmix

__all__ = [
    "CascadeGains",
    "ContouringConfig",
    "ContouringController",
    "Horizon",
    "SolveInfo",
    "SolverDiverged",
    "TrackerState",
    "cascade",
    "contouring_cost",
    "rotor_mix",
    "rotor_unmix",
    "solve_contouring",
]

CONSTRAINT_TOL = 1e-6
LINE_SEARCH_STEPS = 8


class SolverDiverged(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class ContouringConfig:
    q_l: float = 100.0
    q_c: float = 200.0
    mu: float = 1.0
    r_dv: float = 0.1
    # penalty on stage-to-stage acceleration change, the point-mass stand-in for a thrust-rate cost
    r_da: float = 0.05
    v_theta_max: float = 30.0
    dv_theta_min: float = -3.0
    dv_theta_max: float = 3.0
    N: int = 20
    dt: float = 0.06
    a_lo: np.ndarray = field(default_factory=lambda: np.array([-20.0, -20.0, -9.0]))
    a_hi: np.ndarray = field(default_factory=lambda: np.array([20.0, 20.0, 25.0]))
    # per-axis linear drag divided by mass (1/s), same as the simulator's D/m
    drag: np.ndarray = field(default_factory=lambda: np.array([0.26, 0.28, 0.42]) / 0.752)
    control_dt: float = 0.01
    max_iter: int = 2
    prox: float = 1e-3
    # v_theta kept within this band around the plan's own progress rate; None frees it
    speed_band: tuple[float, float] | None = None
    speed_slack: float = 0.0

    def __post_init__(self) -> None:
        for name in ("a_lo", "a_hi", "drag"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float).reshape(3))
        if min(self.q_l, self.q_c, self.mu, self.r_dv, self.r_da) < 0:
            raise ValueError("weights must be nonnegative")
        if self.N < 1 or self.dt <= 0 or self.v_theta_max <= 0 or self.control_dt <= 0:
            raise ValueError("need N >= 1, dt > 0, v_theta_max > 0, control_dt > 0")
        if not self.dv_theta_min <= 0.0 <= self.dv_theta_max:
            raise ValueError("dv_theta bounds must bracket zero")
        if np.any(self.a_lo >= self.a_hi) or np.any(self.drag < 0):
            raise ValueError("invalid accel bounds or drag")
        if self.speed_band is not None:
            object.__setattr__(self, "speed_band", tuple(float(b) for b in self.speed_band))
            if not 0.0 <= self.speed_band[0] <= self.speed_band[1]:
                raise ValueError("speed_band needs 0 <= low <= high")
        if self.speed_slack < 0:
            raise ValueError("speed_slack must be nonnegative")

    @classmethod
    def for_quad(cls, params: QuadParams, **kw) -> ContouringConfig:
        return cls(drag=params.D / params.m, **kw)


@dataclass(frozen=True)
class TrackerState:
    theta: float = 0.0
    v_theta: float = 0.0
    last_accel: tuple[float, float, float] = (0.0, 0.0, 0.0)


@dataclass(frozen=True, eq=False)
class Horizon:
    """Predicted horizon: entry ``k`` holds the state after applying ``accels[k]``."""

    positions: np.ndarray
    velocities: np.ndarray
    accels: np.ndarray
    v_theta: np.ndarray
    thetas: np.ndarray

    def __len__(self) -> int:
        return len(self.v_theta)

    def __iter__(self):
        return iter(zip(self.positions, self.accels, self.v_theta))


@dataclass(frozen=True)
class SolveInfo:
    costs: tuple[float, ...]
    iterations: int
    warm_cost: float

    @property
    def cost(self) -> float:
        return self.costs[-1]


def _stage_errors(positions: np.ndarray, thetas: np.ndarray, path: Path):
    ref, tan = path.evaluate(thetas)
    err = positions - ref
    lag = np.einsum("ij,ij->i", err, tan)
    e_l = lag[:, None] * tan
    return err - e_l, e_l


def contouring_cost(horizon, path: Path, cfg: ContouringConfig, theta0: float = 0.0,
                    v_theta_prev: float | None = None, accel_prev=None) -> float:
    """Summed lag, contour, progress-rate-change, acceleration-change and progress terms.

    ``horizon`` is a :class:`Horizon` or a sequence of ``(position, accel,
    v_theta)``; the progress of entry ``k`` is ``theta0 + dt * sum(v_theta[:k+1])``.
    ``v_theta_prev`` and ``accel_prev`` anchor the first changes; ``None``
    makes those first changes zero.
    """
    if isinstance(horizon, Horizon):
        pos, acc, vth = horizon.positions, horizon.accels, horizon.v_theta
    else:
        rows = list(horizon)
        pos = np.array([np.asarray(r[0], dtype=float) for r in rows]).reshape(-1, 3)
        acc = np.array([np.asarray(r[1], dtype=float) for r in rows]).reshape(-1, 3)
        vth = np.array([float(r[2]) for r in rows])
    if len(vth) != cfg.N:
        raise ValueError(f"horizon has {len(vth)} entries, config expects N={cfg.N}")
    thetas = theta0 + cfg.dt * np.cumsum(vth)
    v_prev = vth[0] if v_theta_prev is None else v_theta_prev
    return _cost(pos, vth, thetas, path, cfg, v_prev, acc, accel_prev)


def _cost(pos, vth, thetas, path, cfg, v_prev, u=None, u_prev=None) -> float:
    e_c, e_l = _stage_errors(pos, thetas, path)
    dv = np.diff(np.concatenate([[v_prev], vth]))
    total = (
        cfg.q_l * np.sum(e_l * e_l)
        + cfg.q_c * np.sum(e_c * e_c)
        + cfg.r_dv * np.sum(dv * dv)
        - cfg.mu * np.sum(vth)
    )
    if cfg.r_da > 0.0 and u is not None:
        first = u[:1] if u_prev is None else np.asarray(u_prev, dtype=float).reshape(1, 3)
        du = np.diff(np.vstack([first, u]), axis=0)
        total += cfg.r_da * np.sum(du * du)
    return float(total)


def _axis_coeffs(c: float, dt: float) -> tuple[float, float, float]:
    """Exact zero-order-hold coefficients of ``v' = u - c v`` over ``dt``."""
    if c * dt < 1e-9:
        return 1.0, dt, 0.5 * dt * dt
    beta = math.exp(-c * dt)
    gamma = (1.0 - beta) / c
    return beta, gamma, (dt - gamma) / c


class _Prediction:
    """Affine maps from stacked accelerations to predicted positions and velocities."""

    def __init__(self, cfg: ContouringConfig) -> None:
        N = cfg.N
        self.Pu = np.zeros((3, N, N))
        self.Vu = np.zeros((3, N, N))
        self.Pv = np.zeros((3, N))
        self.Vv = np.zeros((3, N))
        for a in range(3):
            beta, gamma, delta = _axis_coeffs(float(cfg.drag[a]), cfg.dt)
            for k in range(N):
                # stage k maps v_k -> (p_{k+1}, v_{k+1})
                prev_v = self.Vu[a, k - 1] if k else np.zeros(N)
                prev_p = self.Pu[a, k - 1] if k else np.zeros(N)
                self.Pu[a, k] = prev_p + gamma * prev_v
                self.Pu[a, k, k] += delta
                self.Vu[a, k] = beta * prev_v
                self.Vu[a, k, k] += gamma
                vv = self.Vv[a, k - 1] if k else 1.0
                self.Pv[a, k] = (self.Pv[a, k - 1] if k else 0.0) + gamma * vv
                self.Vv[a, k] = beta * vv

    def rollout(self, p0: np.ndarray, v0: np.ndarray, u: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        pos = np.empty_like(u)
        vel = np.empty_like(u)
        for a in range(3):
            pos[:, a] = p0[a] + self.Pv[a] * v0[a] + self.Pu[a] @ u[:, a]
            vel[:, a] = self.Vv[a] * v0[a] + self.Vu[a] @ u[:, a]
        return pos, vel


class ContouringController:
    """Stateful contouring solver: keeps the OSQP workspace and the warm start."""

    def __init__(self, cfg: ContouringConfig | None = None) -> None:
        self.cfg = cfg or ContouringConfig()
        self._pred = _Prediction(self.cfg)
        self._warm: tuple[np.ndarray, np.ndarray] | None = None
        self._solver: osqp.OSQP | None = None
        self.last_info: SolveInfo | None = None
        N = self.cfg.N
        n = 4 * N
        self._triu = np.triu_indices(n)
        # A is fixed: accel box, v_theta box, v_theta rate rows
        D = sp.eye(N, format="csc") - sp.eye(N, k=-1, format="csc")
        self._A = sp.bmat(
            [
                [sp.eye(3 * N), None],
                [None, sp.eye(N)],
                [None, D],
            ],
            format="csc",
        )
        # a dense upper triangle, so Px updates keep a fixed sparsity pattern
        self._P_pattern = sp.triu(sp.csc_matrix(np.ones((n, n))), format="csc")
        rows = self._P_pattern.indices
        cols = np.repeat(np.arange(n), np.diff(self._P_pattern.indptr))
        self._P_rows, self._P_cols = rows, cols
        # path-independent part of the Hessian
        self._Ax = np.zeros((3 * N, n))
        for a in range(3):
            self._Ax[a::3, a:3 * N:3] = self._pred.Pu[a]
        self._L = np.tril(np.ones((N, N))) * self.cfg.dt
        self._DtD = (D.T @ D).toarray()
        # acceleration differences, with and without a fixed previous input
        Dd = D.toarray()
        self._DaD = np.kron(self._DtD, np.eye(3))
        self._DaD_free = np.kron(Dd[1:].T @ Dd[1:], np.eye(3))

    def reset(self) -> None:
        self._warm = None

    def _bounds(self, v_prev: float, band: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        cfg, N = self.cfg, self.cfg.N
        lo = np.concatenate([np.tile(cfg.a_lo, N), band[0], np.full(N, cfg.dv_theta_min)])
        hi = np.concatenate([np.tile(cfg.a_hi, N), band[1], np.full(N, cfg.dv_theta_max)])
        lo[4 * N] += v_prev
        hi[4 * N] += v_prev
        return lo, hi

    def _project(self, u, v, v_prev: float, band: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Feasible point near ``(u, v)``: clip accelerations, then sweep v_theta.

        A forward sweep clips each stage to its band and rate window; when that
        dead-ends, a backward sweep (always feasible for bands from
        :meth:`_band`) takes over.
        """
        cfg = self.cfg
        u = np.clip(u, cfg.a_lo, cfg.a_hi)
        lo_b, hi_b = band
        out = np.empty_like(v)
        prev = v_prev
        for k, x in enumerate(v):
            lo = max(lo_b[k], prev + cfg.dv_theta_min)
            hi = min(hi_b[k], prev + cfg.dv_theta_max)
            if lo > hi + CONSTRAINT_TOL:
                break
            prev = out[k] = min(max(x, lo), hi)
        else:
            return u, out
        nxt = min(max(v[-1], lo_b[-1]), hi_b[-1])
        out[-1] = nxt
        for k in range(len(v) - 2, -1, -1):
            lo = max(lo_b[k], nxt - cfg.dv_theta_max)
            hi = min(hi_b[k], nxt - cfg.dv_theta_min)
            nxt = out[k] = min(max(v[k], lo), hi)
        return u, out

    def _band(self, path: Path, theta0: float, v_prev: float) -> np.ndarray:
        """Per-stage v_theta interval, each reachable from the last under the rate limits.

        The reference rate for stage ``k`` is how far the plan itself advances
        over that stage, timed from where it passes ``theta0``.
        """
        cfg, N = self.cfg, self.cfg.N
        lo = np.zeros(N)
        hi = np.full(N, cfg.v_theta_max)
        if cfg.speed_band is not None:
            tau = path.time_at(theta0)[0] + cfg.dt * np.arange(N + 1)
            ref = np.diff(path.progress_at(tau)) / cfg.dt
            lo = np.clip(cfg.speed_band[0] * ref - cfg.speed_slack, 0.0, cfg.v_theta_max)
            hi = np.clip(cfg.speed_band[1] * ref + cfg.speed_slack, lo, cfg.v_theta_max)
        L = H = v_prev
        out = np.empty((2, N))
        for k in range(N):
            Lk = max(lo[k], L + cfg.dv_theta_min, 0.0)
            Hk = min(hi[k], H + cfg.dv_theta_max, cfg.v_theta_max)
            if Lk > Hk:
                # the band is out of reach: pin to the nearest reachable speed
                Lk = Hk = min(H + cfg.dv_theta_max, cfg.v_theta_max) if lo[k] > Hk else max(L + cfg.dv_theta_min, 0.0)
            out[:, k] = L, H = Lk, Hk
        return out

    def _shifted_warm(self, v_prev: float) -> tuple[np.ndarray, np.ndarray]:
        N = self.cfg.N
        if self._warm is None:
            return np.zeros((N, 3)), np.full(N, v_prev)
        u, v = self._warm
        shift = int(self.cfg.control_dt // self.cfg.dt)
        idx = np.minimum(np.arange(N) + shift, N - 1)
        return u[idx], v[idx]

    def _start(self, v_prev: float, theta0: float, path: Path):
        """Shifted previous solution made feasible for this tick, with this tick's v_theta band."""
        u, v = self._shifted_warm(v_prev)
        band = self._band(path, theta0, v_prev)
        u, v = self._project(u, v, v_prev, band)
        return u, v, band

    def _u_prev(self) -> np.ndarray | None:
        return None if self._warm is None else self._warm[0][0].copy()

    def _qp(self, p0, v0, theta0, v_prev, u, v, thetas, path, u_prev=None):
        cfg, N = self.cfg, self.cfg.N
        ref, tan = path.evaluate(thetas)
        p_off = np.empty((N, 3))
        for a in range(3):
            p_off[:, a] = p0[a] + self._pred.Pv[a] * v0[a]
        # e = Ax z + b with the reference linearised at thetas
        Ax = self._Ax.copy()
        Ax[:, 3 * N:] = -(tan.reshape(-1, 1) * np.repeat(self._L, 3, axis=0))
        b = (p_off - ref - tan * (theta0 - thetas)[:, None]).reshape(-1)
        # W_k = q_c I + (q_l - q_c) t t^T, applied blockwise
        Axr = Ax.reshape(N, 3, -1)
        along = np.einsum("ki,kin->kn", tan, Axr)
        WA = (cfg.q_c * Axr + (cfg.q_l - cfg.q_c) * tan[:, :, None] * along[:, None, :]).reshape(3 * N, -1)
        H = 2.0 * Ax.T @ WA
        H[3 * N:, 3 * N:] += 2.0 * cfg.r_dv * self._DtD
        H += cfg.prox * np.eye(4 * N)
        z_bar = np.concatenate([u.reshape(-1), v])
        q = 2.0 * WA.T @ b - cfg.prox * z_bar
        q[3 * N] -= 2.0 * cfg.r_dv * v_prev
        q[3 * N:] -= cfg.mu
        if cfg.r_da > 0.0:
            H[:3 * N, :3 * N] += 2.0 * cfg.r_da * (self._DaD if u_prev is not None else self._DaD_free)
            if u_prev is not None:
                q[:3] -= 2.0 * cfg.r_da * u_prev
        return H, q

    def _solve_qp(self, H, q, lo, hi):
        Px = H[self._P_rows, self._P_cols]
        if self._solver is None:
            self._solver = osqp.OSQP()
            P = self._P_pattern.copy()
            P.data = Px
            self._solver.setup(P, q, self._A, lo, hi, verbose=False, eps_abs=1e-5, eps_rel=1e-5,
                               max_iter=4000, polishing=False)
        else:
            self._solver.update(Px=Px, q=q, l=lo, u=hi)
        res = self._solver.solve(raise_error=False)
        x = res.x
        if x is None or not np.all(np.isfinite(x)):
            return None
        return x

    def solve(self, p0, v0, state: TrackerState, path: Path) -> tuple[np.ndarray, TrackerState, Horizon]:
        cfg, N = self.cfg, self.cfg.N
        p0 = np.asarray(p0, dtype=float)
        v0 = np.asarray(v0, dtype=float)
        v_prev = float(np.clip(state.v_theta, 0.0, cfg.v_theta_max))
        theta0 = float(state.theta)
        u_prev = self._u_prev()

        def evaluate(u, v):
            pos, _ = self._pred.rollout(p0, v0, u)
            th = theta0 + cfg.dt * np.cumsum(v)
            return _cost(pos, v, th, path, cfg, v_prev, u, u_prev), th

        u, v, band = self._start(v_prev, theta0, path)
        cost, thetas = evaluate(u, v)
        if not math.isfinite(cost):
            raise SolverDiverged(f"warm start cost is {cost}")
        warm_cost = cost
        costs = [cost]
        lo, hi = self._bounds(v_prev, band)
        it = 0
        for it in range(1, cfg.max_iter + 1):
            H, q = self._qp(p0, v0, theta0, v_prev, u, v, thetas, path, u_prev)
            x = self._solve_qp(H, q, lo, hi)
            if x is None:
                break
            u_new, v_new = self._project(x[:3 * N].reshape(N, 3), x[3 * N:], v_prev, band)
            step = 1.0
            accepted = False
            for _ in range(LINE_SEARCH_STEPS):
                uc = u + step * (u_new - u)
                vc = v + step * (v_new - v)
                c, th = evaluate(uc, vc)
                if c < cost:
                    accepted = True
                    break
                step *= 0.5
            if not accepted:
                break
            improvement = cost - c
            u, v, cost, thetas = uc, vc, c, th
            costs.append(cost)
            if improvement <= 1e-6 * (1.0 + abs(cost)):
                break

        self._check(u, v, v_prev, band)
        self._warm = (u, v)
        pos, vel = self._pred.rollout(p0, v0, u)
        horizon = Horizon(pos, vel, u.copy(), v.copy(), thetas)
        self.last_info = SolveInfo(tuple(costs), it, warm_cost)
        accel = u[0] - cfg.drag * v0
        nxt = TrackerState(
            theta=theta0 + v[0] * cfg.control_dt,
            v_theta=float(v[0]),
            last_accel=tuple(float(x) for x in accel),
        )
        return accel, nxt, horizon

    def _check(self, u, v, v_prev, band) -> None:
        cfg = self.cfg
        dv = np.diff(np.concatenate([[v_prev], v]))
        ok = (
            np.all(u >= cfg.a_lo - CONSTRAINT_TOL)
            and np.all(u <= cfg.a_hi + CONSTRAINT_TOL)
            and np.all(v >= band[0] - CONSTRAINT_TOL)
            and np.all(v <= band[1] + CONSTRAINT_TOL)
            and np.all(dv >= cfg.dv_theta_min - CONSTRAINT_TOL)
            and np.all(dv <= cfg.dv_theta_max + CONSTRAINT_TOL)
        )
        if not ok:
            raise SolverDiverged("horizon violates its constraints")

    def warm_cost(self, p0, v0, state: TrackerState, path: Path) -> float:
        """Cost of the shifted previous solution from the given state."""
        cfg = self.cfg
        v_prev = float(np.clip(state.v_theta, 0.0, cfg.v_theta_max))
        u, v, _ = self._start(v_prev, state.theta, path)
        pos, _ = self._pred.rollout(np.asarray(p0, float), np.asarray(v0, float), u)
        th = state.theta + cfg.dt * np.cumsum(v)
        return _cost(pos, v, th, path, cfg, v_prev, u, self._u_prev())


def solve_contouring(current, tracker_state: TrackerState, path: Path, cfg: ContouringConfig | None = None,
                     controller: ContouringController | None = None):
    """One contouring solve from ``current = (position, velocity)``.

    Pass a persistent ``controller`` to keep warm starts between ticks.
    Returns ``(accel_command, next_state, horizon)``; the command is the net
    acceleration the vehicle should realise, drag included.
    """
    ctrl = controller or ContouringController(cfg)
    p, v = current
    return ctrl.solve(p, v, tracker_state, path)


@dataclass(frozen=True, eq=False)
class CascadeGains:
    k_att: np.ndarray = field(default_factory=lambda: np.array([40.0, 40.0, 5.0]))
    k_rate: np.ndarray = field(default_factory=lambda: np.array([150.0, 150.0, 25.0]))
    yaw: float = 0.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "k_att", np.asarray(self.k_att, dtype=float).reshape(3))
        object.__setattr__(self, "k_rate", np.asarray(self.k_rate, dtype=float).reshape(3))


@dataclass(frozen=True)
class CascadeOutput:
    command: RotorCommand
    saturated: bool
    thrust: float
    rate_cmd: tuple[float, float, float]


@numba.njit(cache=True)
def _cascade_core(a, x, m, J, D, g, k_att, k_rate, yaw, mix_inv, u_min, u_max):
    qw, qx, qy, qz = x[3], x[4], x[5], x[6]
    R = np.empty((3, 3))
    R[0, 0] = 1 - 2 * (qy * qy + qz * qz)
    R[0, 1] = 2 * (qx * qy - qw * qz)
    R[0, 2] = 2 * (qx * qz + qw * qy)
    R[1, 0] = 2 * (qx * qy + qw * qz)
    R[1, 1] = 1 - 2 * (qx * qx + qz * qz)
    R[1, 2] = 2 * (qy * qz - qw * qx)
    R[2, 0] = 2 * (qx * qz - qw * qy)
    R[2, 1] = 2 * (qy * qz + qw * qx)
    R[2, 2] = 1 - 2 * (qx * qx + qy * qy)
    drag = R @ (D * (R.T @ x[7:10]))
    F = m * (a - g) + drag
    Fn = np.sqrt(np.sum(F * F))
    z = F / Fn if Fn > 1e-9 else R[:, 2].copy()

    # desired frame: body z along F, body x as close to the heading as possible
    h = np.array([np.cos(yaw), np.sin(yaw), 0.0])
    y = np.cross(z, h)
    n = np.sqrt(np.sum(y * y))
    if n < 1e-6:
        alt = np.array([0.0, 0.0, 1.0]) if abs(z[2]) < 0.9 else np.array([0.0, 1.0, 0.0])
        y = np.cross(z, alt)
        n = np.sqrt(np.sum(y * y))
    y = y / n
    xd = np.cross(y, z)
    Rd = np.empty((3, 3))
    Rd[:, 0] = xd
    Rd[:, 1] = y
    Rd[:, 2] = z

    # body-frame error quaternion, vector part, short way round
    E = R.T @ Rd
    w = 0.5 * np.sqrt(max(1.0 + E[0, 0] + E[1, 1] + E[2, 2], 0.0))
    err = np.empty(3)
    if w > 1e-6:
        err[0] = (E[2, 1] - E[1, 2]) / (2.0 * w)
        err[1] = (E[0, 2] - E[2, 0]) / (2.0 * w)
        err[2] = (E[1, 0] - E[0, 1]) / (2.0 * w)
    else:
        for i in range(3):
            err[i] = np.sqrt(max((E[i, i] + 1.0) / 2.0, 0.0))
        err *= np.pi / max(np.sqrt(np.sum(err * err)), 1e-12)
    rate_cmd = k_att * err

    om = x[10:13]
    Jw = J * om
    tau = J * (k_rate * (rate_cmd - om)) + np.cross(om, Jw)
    f_T = max(F[0] * R[0, 2] + F[1] * R[1, 2] + F[2] * R[2, 2], 0.0)
    rhs = np.array([f_T, tau[0], tau[1], tau[2]])
    f = mix_inv @ rhs
    # shift the collective first so roll and pitch torque survive saturation
    hi_excess = max(np.max(f) - u_max, 0.0)
    lo_excess = max(u_min - np.min(f), 0.0)
    if hi_excess > 0.0 and lo_excess == 0.0:
        f -= min(hi_excess, np.min(f) - u_min)
    elif lo_excess > 0.0 and hi_excess == 0.0:
        f += min(lo_excess, u_max - np.max(f))
    sat = False
    for i in range(4):
        if f[i] < u_min:
            f[i] = u_min
            sat = True
        elif f[i] > u_max:
            f[i] = u_max
            sat = True
    return f, sat, f_T, rate_cmd


def cascade(accel_cmd, state, params: QuadParams, gains: CascadeGains | None = None, detail: bool = False):
    """Attitude and rate loops from a world-frame acceleration command to rotor thrusts.

    The thrust vector is ``m (accel_cmd - g)`` plus the current body drag;
    body z is aligned with it at zero yaw, the attitude error sets the rate
    command and the rate error the torque. ``state`` may be a
    :class:`QuadState` or the packed 13-vector. Returns the
    :class:`RotorCommand`, or a :class:`CascadeOutput` with the saturation
    flag when ``detail`` is set.
    """
    gains = gains or _DEFAULT_GAINS
    x = state if isinstance(state, np.ndarray) else state.to_array()
    f, sat, f_T, rate = _cascade_core(
        np.asarray(accel_cmd, dtype=float), x, params.m, params.J, params.D, params.g,
        gains.k_att, gains.k_rate, gains.yaw, _mix_inverse(params), params.u_min, params.u_max,
    )
    cmd = RotorCommand(float(f[0]), float(f[1]), float(f[2]), float(f[3]))
    if detail:
        return CascadeOutput(cmd, bool(sat), float(f_T), (float(rate[0]), float(rate[1]), float(rate[2])))
    return cmd


_MIX_INV_CACHE: dict[int, tuple[QuadParams, np.ndarray]] = {}


def _mix_inverse(params: QuadParams) -> np.ndarray:
    hit = _MIX_INV_CACHE.get(id(params))
    if hit is not None and hit[0] is params:
        return hit[1]
    inv = np.linalg.inv(params.mix_matrix)
    _MIX_INV_CACHE[id(params)] = (params, inv)
    return inv


_DEFAULT_GAINS = CascadeGains()
