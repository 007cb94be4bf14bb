"""Arc-length parameterised reference path built from a point-mass plan.

The tracker only needs a tangent-continuous curve, so the plan is sampled at a
fixed time step and reparameterised by cumulative chord length ``theta``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path as FsPath

import numpy as np

from .velocity_graph import PmmPlan

DEFAULT_SAMPLE_DT = 0.01
DEFAULT_WINDOW = 2.0
MIN_SPEED = 0.01
CSV_COLUMNS = ("theta", "x", "y", "z", "tx", "ty", "tz", "plan_time")


class DegeneratePlan(ValueError):
    pass


class OutOfRange(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Path:
    theta: np.ndarray
    positions: np.ndarray
    tangents: np.ndarray
    plan_time: np.ndarray
    gate_thetas: tuple[float, ...] = ()

    @property
    def total_length(self) -> float:
        return float(self.theta[-1])

    @property
    def max_spacing(self) -> float:
        return float(np.max(np.diff(self.theta)))

    def __len__(self) -> int:
        return len(self.theta)

    def evaluate(self, thetas, extrapolate: bool = True) -> tuple[np.ndarray, np.ndarray]:
        """Vectorised position/tangent lookup.

        Beyond the ends the path continues straight along the end tangents
        when ``extrapolate`` is set, otherwise it is clamped.
        """
        th = np.atleast_1d(np.asarray(thetas, dtype=float))
        L = self.total_length
        clamped = np.clip(th, 0.0, L)
        k = np.clip(np.searchsorted(self.theta, clamped, side="right") - 1, 0, len(self.theta) - 2)
        t0, t1 = self.theta[k], self.theta[k + 1]
        w = ((clamped - t0) / (t1 - t0))[:, None]
        pos = (1.0 - w) * self.positions[k] + w * self.positions[k + 1]
        tan = (1.0 - w) * self.tangents[k] + w * self.tangents[k + 1]
        tan /= np.linalg.norm(tan, axis=1, keepdims=True)
        if extrapolate:
            lo, hi = th < 0.0, th > L
            if lo.any():
                pos[lo] = self.positions[0] + th[lo, None] * self.tangents[0]
            if hi.any():
                pos[hi] = self.positions[-1] + (th[hi, None] - L) * self.tangents[-1]
        return pos, tan

    def time_at(self, thetas) -> np.ndarray:
        """Plan time at which the underlying plan reaches arc length ``thetas``."""
        th = np.atleast_1d(np.asarray(thetas, dtype=float))
        return np.interp(th, self.theta, self.plan_time)

    def progress_at(self, times) -> np.ndarray:
        """Arc length the plan has covered at ``times``; past the end it keeps its final rate."""
        t = np.atleast_1d(np.asarray(times, dtype=float))
        out = np.interp(t, self.plan_time, self.theta)
        late = t > self.plan_time[-1]
        if late.any():
            rate = (self.theta[-1] - self.theta[-2]) / (self.plan_time[-1] - self.plan_time[-2])
            out[late] = self.theta[-1] + rate * (t[late] - self.plan_time[-1])
        return out

    def to_csv(self, file) -> None:
        with open(file, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(CSV_COLUMNS)
            for i in range(len(self)):
                w.writerow([repr(float(x)) for x in (self.theta[i], *self.positions[i], *self.tangents[i], self.plan_time[i])])

    @classmethod
    def from_csv(cls, file, gate_thetas=()) -> Path:
        data = np.loadtxt(FsPath(file), delimiter=",", skiprows=1, ndmin=2)
        return cls(data[:, 0], data[:, 1:4], data[:, 4:7], data[:, 7], tuple(gate_thetas))


@dataclass(frozen=True)
class ContourErrors:
    e_c: np.ndarray
    e_l: np.ndarray
    theta_star: float

    @property
    def contour(self) -> float:
        return float(np.linalg.norm(self.e_c))

    @property
    def lag(self) -> float:
        return float(np.linalg.norm(self.e_l))


def _unit_rows(x: np.ndarray) -> np.ndarray:
    return x / np.linalg.norm(x, axis=1, keepdims=True)


def assemble_path(plan: PmmPlan, sample_dt: float = DEFAULT_SAMPLE_DT, runout: float = 0.0) -> Path:
    """Sample ``plan`` every ``sample_dt`` seconds into a :class:`Path`.

    ``runout`` appends that many metres of straight line past the final gate
    along the final direction of travel, so a tracker never runs out of path
    right at the last gate.
    """
    if not plan.segments:
        raise DegeneratePlan("empty plan")
    if sample_dt <= 0:
        raise ValueError("sample_dt must be positive")
    times, pos, vel = [], [], []
    offset = 0.0
    for k, seg in enumerate(plan.segments):
        local = np.arange(0.0, seg.duration, sample_dt)
        if k > 0:
            local = local[1:] if len(local) and local[0] == 0.0 else local
        local = np.append(local, seg.duration)
        p, v, _ = seg.sample(local)
        times.append(offset + local)
        pos.append(p)
        vel.append(v)
        offset += seg.duration
    t = np.concatenate(times)
    p = np.concatenate(pos)
    v = np.concatenate(vel)

    chord = np.linalg.norm(np.diff(p, axis=0), axis=1)
    keep = np.concatenate([[True], chord > 1e-9])
    t, p, v = t[keep], p[keep], v[keep]
    if len(t) < 2:
        raise DegeneratePlan("plan covers no distance")
    theta = np.concatenate([[0.0], np.cumsum(np.linalg.norm(np.diff(p, axis=0), axis=1))])
    if theta[-1] < 1e-6:
        raise DegeneratePlan(f"path length {theta[-1]:.3g} m is below 1e-6 m")

    speed = np.linalg.norm(v, axis=1)
    tangents = np.empty_like(v)
    fast = speed >= MIN_SPEED
    tangents[fast] = v[fast] / speed[fast, None]
    if not fast.all():
        fwd = np.diff(p, axis=0)
        fwd = np.vstack([fwd, fwd[-1]])
        tangents[~fast] = _unit_rows(fwd[~fast])

    gate_times = np.cumsum([seg.duration for seg in plan.segments])
    gate_thetas = tuple(float(x) for x in np.interp(gate_times, t, theta))

    if runout > 0.0:
        n_extra = max(int(np.ceil(runout / max(speed[-1] * sample_dt, 0.05))), 1)
        ds = np.linspace(0.0, runout, n_extra + 1)[1:]
        end_dir = tangents[-1]
        rate = max(speed[-1], MIN_SPEED)
        p = np.vstack([p, p[-1] + ds[:, None] * end_dir])
        tangents = np.vstack([tangents, np.repeat(end_dir[None], len(ds), axis=0)])
        theta = np.concatenate([theta, theta[-1] + ds])
        t = np.concatenate([t, t[-1] + ds / rate])
    return Path(theta, p, tangents, t, gate_thetas)


def point_at(path: Path, theta: float) -> tuple[np.ndarray, np.ndarray]:
    """Interpolated position and unit tangent at arc length ``theta``."""
    if theta < 0.0 or theta > path.total_length:
        raise OutOfRange(f"theta={theta} outside [0, {path.total_length}]")
    pos, tan = path.evaluate(theta, extrapolate=False)
    return pos[0], tan[0]


def project_progress(path: Path, p, theta_guess: float, window: float = DEFAULT_WINDOW) -> ContourErrors:
    """Closest path point to ``p`` within ``theta_guess ± window``, split into lag and contour parts."""
    p = np.asarray(p, dtype=float)
    th = path.theta
    lo = max(int(np.searchsorted(th, theta_guess - window, side="right")) - 1, 0)
    hi = min(int(np.searchsorted(th, theta_guess + window, side="left")) + 1, len(th) - 1)
    if hi <= lo:
        hi = min(lo + 1, len(th) - 1)
        lo = hi - 1
    a = path.positions[lo:hi]
    b = path.positions[lo + 1 : hi + 1]
    ab = b - a
    u = np.einsum("ij,ij->i", p - a, ab) / np.einsum("ij,ij->i", ab, ab)
    u = np.clip(u, 0.0, 1.0)
    closest = a + u[:, None] * ab
    d2 = np.einsum("ij,ij->i", p - closest, p - closest)
    k = int(np.argmin(d2))
    theta_star = float(th[lo + k] + u[k] * (th[lo + k + 1] - th[lo + k]))
    pos, tan = path.evaluate(theta_star, extrapolate=False)
    err = p - pos[0]
    t = tan[0]
    e_l = np.dot(err, t) * t
    return ContourErrors(err - e_l, e_l, theta_star)
