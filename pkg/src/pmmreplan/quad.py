"""Rigid-body quadrotor model: parameters, state, rotor mixing, RK4 integration.

Quaternions are Hamilton ``(w, x, y, z)`` and rotate body vectors into the
world frame. Thrust acts along body ``+z``; gravity is ``-z`` in the world.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
import numba
import numpy as np

SQRT2 = math.sqrt(2.0)


class NonFinite(FloatingPointError):
    pass


@dataclass(frozen=True, eq=False)
class QuadParams:
    m: float = 0.752
    J: np.ndarray = field(default_factory=lambda: np.array([2.5e-3, 2.1e-3, 4.3e-3]))
    l: float = 0.15
    c_tau: float = 0.022
    u_min: float = 0.0
    u_max: float = 8.5
    D: np.ndarray = field(default_factory=lambda: np.array([0.26, 0.28, 0.42]))
    g: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.0, -9.81]))

    def __post_init__(self) -> None:
        for name in ("J", "D", "g"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float).reshape(3))
        if self.m <= 0 or np.any(self.J <= 0):
            raise ValueError("mass and inertia must be positive")
        if not (0 <= self.u_min < self.u_max):
            raise ValueError("need 0 <= u_min < u_max")
        if np.any(self.D < 0):
            raise ValueError("drag coefficients must be nonnegative")

    @property
    def mix_matrix(self) -> np.ndarray:
        """Maps rotor thrusts to (collective, tau_x, tau_y, tau_z)."""
        k = self.l / SQRT2
        c = self.c_tau
        return np.array(
            [
                [1.0, 1.0, 1.0, 1.0],
                [k, k, -k, -k],
                [-k, k, k, -k],
                [c, -c, c, -c],
            ]
        )


@dataclass(frozen=True, eq=False)
class QuadState:
    p: np.ndarray = field(default_factory=lambda: np.zeros(3))
    q: np.ndarray = field(default_factory=lambda: np.array([1.0, 0.0, 0.0, 0.0]))
    v: np.ndarray = field(default_factory=lambda: np.zeros(3))
    w: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self) -> None:
        for name, n in (("p", 3), ("q", 4), ("v", 3), ("w", 3)):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float).reshape(n))

    def to_array(self) -> np.ndarray:
        return np.concatenate([self.p, self.q, self.v, self.w])

    @classmethod
    def from_array(cls, x: np.ndarray) -> QuadState:
        return cls(x[0:3].copy(), x[3:7].copy(), x[7:10].copy(), x[10:13].copy())

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, QuadState):
            return NotImplemented
        return np.array_equal(self.to_array(), other.to_array())


@dataclass(frozen=True)
class RotorCommand:
    f1: float
    f2: float
    f3: float
    f4: float

    def as_array(self) -> np.ndarray:
        return np.array([self.f1, self.f2, self.f3, self.f4])

    @classmethod
    def hover(cls, params: QuadParams) -> RotorCommand:
        f = params.m * -params.g[2] / 4.0
        return cls(f, f, f, f)


def rotor_mix(f, params: QuadParams) -> tuple[float, np.ndarray]:
    """Collective thrust (N) and body torque (N m) from four rotor thrusts."""
    f = f.as_array() if isinstance(f, RotorCommand) else np.asarray(f, dtype=float)
    k = params.l / SQRT2
    c = params.c_tau
    f1, f2, f3, f4 = f
    tau = np.array(
        [
            k * (f1 + f2 - f3 - f4),
            k * (-f1 + f2 + f3 - f4),
            c * (f1 - f2 + f3 - f4),
        ]
    )
    return float(f1 + f2 + f3 + f4), tau


def rotor_unmix(f_T: float, tau, params: QuadParams, clamp: bool = True) -> tuple[RotorCommand, bool]:
    """Rotor thrusts realising ``(f_T, tau)``, clamped to the thrust limits.

    Returns the command and whether any rotor saturated.
    """
    f = np.linalg.solve(params.mix_matrix, np.concatenate([[f_T], np.asarray(tau, dtype=float)]))
    if not clamp:
        return RotorCommand(*map(float, f)), False
    clipped = np.clip(f, params.u_min, params.u_max)
    # round-off around a zero thrust is not saturation
    return RotorCommand(*map(float, clipped)), bool(np.any(np.abs(clipped - f) > 1e-9))


def quat_mul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return np.array(
        [
            aw * bw - ax * bx - ay * by - az * bz,
            aw * bx + ax * bw + ay * bz - az * by,
            aw * by - ax * bz + ay * bw + az * bx,
            aw * bz + ax * by - ay * bx + az * bw,
        ]
    )


def quat_to_rot(q: np.ndarray) -> np.ndarray:
    w, x, y, z = q
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


def rot_to_quat(R: np.ndarray) -> np.ndarray:
    tr = R[0, 0] + R[1, 1] + R[2, 2]
    if tr > 0:
        s = math.sqrt(tr + 1.0) * 2
        q = [0.25 * s, (R[2, 1] - R[1, 2]) / s, (R[0, 2] - R[2, 0]) / s, (R[1, 0] - R[0, 1]) / s]
    elif R[0, 0] > R[1, 1] and R[0, 0] > R[2, 2]:
        s = math.sqrt(1.0 + R[0, 0] - R[1, 1] - R[2, 2]) * 2
        q = [(R[2, 1] - R[1, 2]) / s, 0.25 * s, (R[0, 1] + R[1, 0]) / s, (R[0, 2] + R[2, 0]) / s]
    elif R[1, 1] > R[2, 2]:
        s = math.sqrt(1.0 + R[1, 1] - R[0, 0] - R[2, 2]) * 2
        q = [(R[0, 2] - R[2, 0]) / s, (R[0, 1] + R[1, 0]) / s, 0.25 * s, (R[1, 2] + R[2, 1]) / s]
    else:
        s = math.sqrt(1.0 + R[2, 2] - R[0, 0] - R[1, 1]) * 2
        q = [(R[1, 0] - R[0, 1]) / s, (R[0, 2] + R[2, 0]) / s, (R[1, 2] + R[2, 1]) / s, 0.25 * s]
    q = np.array(q)
    return q / np.linalg.norm(q)


@numba.njit(cache=True)
def _deriv(x, f_T, tau, m, J, D, g, force):
    qw, qx, qy, qz = x[3], x[4], x[5], x[6]
    wx, wy, wz = x[10], x[11], x[12]
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
    out = np.empty(13)
    out[0:3] = x[7:10]
    # q_dot = 0.5 * q (x) (0, w)
    out[3] = 0.5 * (-qx * wx - qy * wy - qz * wz)
    out[4] = 0.5 * (qw * wx + qy * wz - qz * wy)
    out[5] = 0.5 * (qw * wy - qx * wz + qz * wx)
    out[6] = 0.5 * (qw * wz + qx * wy - qy * wx)
    # linear drag acts in the body frame: R D R^T v
    vb = R.T @ x[7:10]
    drag = R @ (D * vb)
    for i in range(3):
        out[7 + i] = g[i] + (R[i, 2] * f_T - drag[i] + force[i]) / m
    hx, hy, hz = J[0] * wx, J[1] * wy, J[2] * wz
    out[10] = (tau[0] - (wy * hz - wz * hy)) / J[0]
    out[11] = (tau[1] - (wz * hx - wx * hz)) / J[1]
    out[12] = (tau[2] - (wx * hy - wy * hx)) / J[2]
    return out


@numba.njit(cache=True)
def _wind(p, lo, hi, force):
    total = np.zeros(3)
    for k in range(lo.shape[0]):
        inside = True
        for i in range(3):
            if p[i] < lo[k, i] or p[i] > hi[k, i]:
                inside = False
        if inside:
            total += force[k]
    return total


@numba.njit(cache=True)
def _rk4(x, f_T, tau, m, J, D, g, dt, lo, hi, force):
    k1 = _deriv(x, f_T, tau, m, J, D, g, _wind(x[0:3], lo, hi, force))
    x2 = x + 0.5 * dt * k1
    k2 = _deriv(x2, f_T, tau, m, J, D, g, _wind(x2[0:3], lo, hi, force))
    x3 = x + 0.5 * dt * k2
    k3 = _deriv(x3, f_T, tau, m, J, D, g, _wind(x3[0:3], lo, hi, force))
    x4 = x + dt * k3
    k4 = _deriv(x4, f_T, tau, m, J, D, g, _wind(x4[0:3], lo, hi, force))
    out = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    out[3:7] /= np.sqrt(np.sum(out[3:7] ** 2))
    return out


NO_WIND = (np.zeros((0, 3)), np.zeros((0, 3)), np.zeros((0, 3)))


def deriv(state: QuadState, cmd, params: QuadParams, external_force=None) -> QuadState:
    """Time derivative of ``state`` packed in a :class:`QuadState` (``q`` holds q-dot)."""
    f_T, tau = rotor_mix(cmd, params)
    force = np.zeros(3) if external_force is None else np.asarray(external_force, dtype=float)
    out = _deriv(state.to_array(), f_T, tau, params.m, params.J, params.D, params.g, force)
    return QuadState.from_array(out)


def step_array(x: np.ndarray, f_T: float, tau: np.ndarray, params: QuadParams, dt: float, t: float = 0.0,
               wind=NO_WIND) -> np.ndarray:
    """One classical RK4 step on the packed 13-vector, quaternion renormalised.

    ``wind`` is ``(box_min, box_max, force)`` stacked per region; the force is
    re-evaluated at every stage position.
    """
    out = _rk4(x, float(f_T), tau, params.m, params.J, params.D, params.g, dt, *wind)
    if not np.all(np.isfinite(out)):
        raise NonFinite(f"non-finite state after step at t={t:.4f}: {out}")
    return out


def step_rk4(state: QuadState, cmd, params: QuadParams, env=None, dt: float = 1e-3, t: float = 0.0) -> QuadState:
    """Advance ``state`` by ``dt`` under a held rotor command.

    ``env`` supplies wind regions via ``env.arrays()``; ``None`` means no
    disturbances.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    f_T, tau = rotor_mix(cmd, params)
    wind = env.arrays() if env is not None else NO_WIND
    return QuadState.from_array(step_array(state.to_array(), f_T, tau, params, dt, t, wind))
