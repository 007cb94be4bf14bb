"""Gates, scripted gate motion and gate-plane crossing detection."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np


@dataclass(frozen=True, eq=False)
class GateMotion:
    """Piecewise-linear displacement of a gate center over time.

    Before the first knot the offset is zero; after the last knot it holds the
    last offset.
    """

    times: np.ndarray
    offsets: np.ndarray

    def __post_init__(self) -> None:
        t = np.asarray(self.times, dtype=float).reshape(-1)
        off = np.asarray(self.offsets, dtype=float).reshape(-1, 3)
        if len(t) != len(off) or len(t) == 0:
            raise ValueError("motion needs one offset per knot time")
        if np.any(np.diff(t) <= 0):
            raise ValueError("motion knot times must be strictly increasing")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "offsets", off)

    @classmethod
    def from_knots(cls, knots: Sequence[tuple[float, Sequence[float]]]) -> GateMotion:
        return cls(np.array([k[0] for k in knots]), np.array([k[1] for k in knots]))

    def offset(self, t: float) -> np.ndarray:
        if t <= self.times[0]:
            # before the schedule starts the gate sits at its base center
            return np.zeros(3) if t < self.times[0] else self.offsets[0].copy()
        if t >= self.times[-1]:
            return self.offsets[-1].copy()
        k = int(np.searchsorted(self.times, t, side="right")) - 1
        w = (t - self.times[k]) / (self.times[k + 1] - self.times[k])
        return (1.0 - w) * self.offsets[k] + w * self.offsets[k + 1]

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, GateMotion):
            return NotImplemented
        return np.array_equal(self.times, other.times) and np.array_equal(self.offsets, other.offsets)


@dataclass(frozen=True, eq=False)
class Gate:
    id: str
    center: np.ndarray
    exit_dir: np.ndarray
    pass_radius: float = 0.5
    motion: GateMotion | None = field(default=None)

    def __post_init__(self) -> None:
        c = np.asarray(self.center, dtype=float).reshape(3)
        d = np.asarray(self.exit_dir, dtype=float).reshape(3)
        n = np.linalg.norm(d)
        if n == 0.0:
            raise ValueError(f"gate {self.id}: zero exit direction")
        if self.pass_radius <= 0:
            raise ValueError(f"gate {self.id}: pass_radius must be positive")
        object.__setattr__(self, "center", c)
        object.__setattr__(self, "exit_dir", d / n)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Gate):
            return NotImplemented
        return (
            self.id == other.id
            and np.array_equal(self.center, other.center)
            and np.array_equal(self.exit_dir, other.exit_dir)
            and self.pass_radius == other.pass_radius
            and self.motion == other.motion
        )


@dataclass(frozen=True)
class PassEvent:
    gate_id: str
    time: float
    deviation: float
    point: tuple[float, float, float]
    valid: bool


def gate_at(gate: Gate, t: float) -> Gate:
    """The gate with its center displaced by its motion schedule at time ``t``."""
    if gate.motion is None:
        return gate
    return replace(gate, center=gate.center + gate.motion.offset(t), motion=None)


def detect_gate_pass(
    p_prev: np.ndarray,
    p_now: np.ndarray,
    gate: Gate,
    t_prev: float = 0.0,
    t_now: float = 0.0,
) -> PassEvent | None:
    """Forward crossing of the gate plane between two consecutive positions.

    The plane passes through the gate center with normal ``exit_dir``; a point
    exactly on the plane at ``p_now`` counts as crossed. Deviation is the
    in-plane distance from the crossing point to the center.
    """
    n = gate.exit_dir
    s0 = float(np.dot(np.asarray(p_prev) - gate.center, n))
    s1 = float(np.dot(np.asarray(p_now) - gate.center, n))
    if not (s0 < 0.0 <= s1):
        return None
    w = s0 / (s0 - s1)
    point = np.asarray(p_prev) + w * (np.asarray(p_now) - np.asarray(p_prev))
    dev = float(np.linalg.norm(point - gate.center))
    return PassEvent(
        gate_id=gate.id,
        time=t_prev + w * (t_now - t_prev),
        deviation=dev,
        point=tuple(float(x) for x in point),
        valid=dev <= gate.pass_radius,
    )
