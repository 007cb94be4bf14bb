"""Simulation environment: wind-force regions and moving gates.

The rigid-body model itself lives in :mod:`pmmreplan.quad`; the closed-loop
episode driver in :mod:`pmmreplan.episode`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .gates import Gate, GateMotion, PassEvent, detect_gate_pass, gate_at
from .quad import NO_WIND, NonFinite, QuadParams, QuadState, RotorCommand, deriv, step_rk4

__all__ = [
    "Environment",
    "Gate",
    "GateMotion",
    "NonFinite",
    "PassEvent",
    "QuadParams",
    "QuadState",
    "RotorCommand",
    "WindRegion",
    "deriv",
    "detect_gate_pass",
    "gate_at",
    "step_rk4",
    "wind_force",
]


@dataclass(frozen=True, eq=False)
class WindRegion:
    """Constant force (N) applied inside a closed axis-aligned box."""

    box_min: np.ndarray
    box_max: np.ndarray
    force: np.ndarray

    def __post_init__(self) -> None:
        for name in ("box_min", "box_max", "force"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float).reshape(3))
        if np.any(self.box_min >= self.box_max):
            raise ValueError("wind box needs min < max on every axis")

    def contains(self, p: np.ndarray) -> bool:
        return bool(np.all(p >= self.box_min) and np.all(p <= self.box_max))


@dataclass(frozen=True)
class Environment:
    wind: tuple[WindRegion, ...] = ()

    def arrays(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Region boxes and forces stacked for the compiled integrator."""
        if not self.wind:
            return NO_WIND
        return (
            np.array([w.box_min for w in self.wind]),
            np.array([w.box_max for w in self.wind]),
            np.array([w.force for w in self.wind]),
        )

    def force(self, p: np.ndarray, t: float = 0.0) -> np.ndarray:
        return wind_force(p, t, self)


def wind_force(p, t: float, env: Environment) -> np.ndarray:
    """Sum of the forces of every region whose closed box contains ``p``."""
    p = np.asarray(p, dtype=float)
    total = np.zeros(3)
    for region in env.wind:
        if region.contains(p):
            total = total + region.force
    return total
