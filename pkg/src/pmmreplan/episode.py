"""Closed-loop episodes: planner, contouring tracker, cascade and simulator.

Two modes are supported. ``fixed`` plans the whole course once before take-off
and tracks that reference. ``replan`` re-plans from the current state over the
next few gates every ``replan_every`` control ticks, using the gates' current
positions.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import threading
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path as FsPath

import numpy as np

from .gates import Gate, detect_gate_pass, gate_at
from .path import Path, assemble_path, project_progress
from .quad import NonFinite, QuadState, rotor_mix, step_array
from .scenario import Scenario
from .sim import Environment, WindRegion
from .tracker import CascadeGains, ContouringController, SolverDiverged, TrackerState, cascade
from .velocity_graph import NoPath, plan_refocusing, plan_track

log = logging.getLogger(__name__)

CAPTURE_DISTANCE = 3.0
PROJECTION_WINDOW = 2.0
# a gate this far (m) from where the current path passes it forces a replan through
GATE_SHIFT_TOL = 0.05
MODE_ALIASES = {
    "fixed": "fixed",
    "fixed_reference": "fixed",
    "replan": "replan",
    "replanning": "replan",
}
LOG_COLUMNS = (
    "t", "px", "py", "pz", "vx", "vy", "vz", "theta", "v_theta", "e_c", "e_l",
    "f1", "f2", "f3", "f4", "saturated", "wind_x", "wind_y", "wind_z", "gate_event",
)


class Timeout(RuntimeError):
    pass


@dataclass(frozen=True)
class GateRecord:
    gate_id: str
    lap: int
    time: float
    deviation: float
    valid: bool


@dataclass
class EpisodeResult:
    mode: str
    seed: int
    status: str
    message: str = ""
    lap_time: float | None = None
    gates: list[GateRecord] = field(default_factory=list)
    mean_contour_error: float = 0.0
    mean_progress_rate: float = 0.0
    start_of_plan_contour_error: float = 0.0
    replans: int = 0
    plans_declined: int = 0
    plan_failures: int = 0
    solver_fallbacks: int = 0
    saturation_fraction: float = 0.0
    plan_wall_time: float = 0.0
    ticks: int = 0
    final_time: float = 0.0
    log: list[tuple] = field(default_factory=list, repr=False)

    @property
    def completed(self) -> bool:
        return self.status == "completed"

    @property
    def deviations(self) -> list[float]:
        return [g.deviation for g in self.gates]

    @property
    def all_valid(self) -> bool:
        return self.completed and all(g.valid for g in self.gates)

    @property
    def misses(self) -> int:
        return sum(not g.valid for g in self.gates)

    def deviation_of(self, gate_id: str, lap: int = 0) -> float | None:
        for g in self.gates:
            if g.gate_id == gate_id and g.lap == lap:
                return g.deviation
        return None

    def metrics(self) -> dict:
        d = asdict(self)
        d.pop("log")
        d["all_valid"] = self.all_valid
        d["misses"] = self.misses
        return d

    def to_json(self, file=None) -> str:
        text = json.dumps(self.metrics(), indent=2)
        if file is not None:
            FsPath(file).write_text(text)
        return text

    @classmethod
    def from_dict(cls, d: dict) -> EpisodeResult:
        d = dict(d)
        d.pop("all_valid", None)
        d.pop("misses", None)
        d["gates"] = [GateRecord(**g) for g in d.get("gates", [])]
        return cls(**d)

    def write_log(self, file) -> None:
        with open(file, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(LOG_COLUMNS)
            for row in self.log:
                w.writerow([repr(x) if isinstance(x, float) else x for x in row])


class _PathBox:
    """Holds the current reference; readers always see a whole Path."""

    def __init__(self, path: Path | None = None) -> None:
        self._lock = threading.Lock()
        self._path = path
        self._version = 0

    def publish(self, path: Path) -> None:
        with self._lock:
            self._path = path
            self._version += 1

    def snapshot(self) -> tuple[Path | None, int]:
        with self._lock:
            return self._path, self._version


def _normalise_mode(mode: str) -> str:
    try:
        return MODE_ALIASES[mode]
    except KeyError:
        raise ValueError(f"unknown mode {mode!r}; expected fixed or replan") from None


class _Replanner:
    """Refocusing replans over the next few gates, with an acceptance test.

    Time-optimal plans change discontinuously with the start state: a vehicle
    a hair late on a maximal braking arc gets a plan with a loop. A fresh plan
    therefore replaces the current one only when the gate window changed, a
    gate moved off the current path, or it reaches the window's last gate no
    later than ``accept_slack`` after the arrival committed to when the window
    was first planned. A vehicle pushed more than ``accept_drift`` off its
    reference always takes the fresh plan.
    """

    def __init__(self, scenario: Scenario, course: list[Gate]) -> None:
        self.sc = scenario
        self.course = course
        self.cone = scenario.cone_grid()
        self.u = scenario.accel_bounds()
        self._first = -1
        self._path: Path | None = None
        self._vels: list[np.ndarray] = []
        self._arrival = math.inf

    def plan(self, p, v, t: float, next_gate: int, theta: float | None = None,
             contour: float = 0.0) -> Path | None:
        """A new reference, or ``None`` when the current one should be kept."""
        pl = self.sc.planner
        window = [gate_at(g, t) for g in self.course[next_gate : next_gate + pl.horizon]]
        incumbent = self._vels[next_gate - self._first :] if next_gate >= self._first >= 0 else None
        res = plan_refocusing((p, v), window, self.cone, self.u, eps=pl.eps, max_iter=pl.max_iter, lazy=pl.lazy,
                              incumbent=incumbent)
        path = assemble_path(res.plan, runout=self.sc.run.runout)
        arrival = t + res.total_time
        stale = contour > pl.accept_drift
        if theta is not None and not stale and not self._window_changed(next_gate, window):
            if arrival > self._arrival + pl.accept_slack:
                return None
            arrival = min(arrival, self._arrival)
        self._first, self._path, self._vels, self._arrival = next_gate, path, list(res.velocities), arrival
        return path

    def _window_changed(self, next_gate: int, window: list[Gate]) -> bool:
        path = self._path
        if path is None or self._first != next_gate or len(path.gate_thetas) != len(window):
            return True
        passes, _ = path.evaluate(np.array(path.gate_thetas), extrapolate=False)
        return any(np.linalg.norm(q - g.center) > GATE_SHIFT_TOL for q, g in zip(passes, window))


def plan_fixed_reference(scenario: Scenario, course: list[Gate], seed: int) -> Path:
    """Whole-course reference from random sampling, with gates where they sit at t = 0."""
    pl = scenario.planner
    gates0 = [gate_at(g, 0.0) for g in course]
    plan = plan_track(
        (np.array(scenario.start.p), np.array(scenario.start.v)),
        gates0,
        scenario.cone_grid(),
        scenario.accel_bounds(),
        horizon=pl.horizon,
        strategy="random",
        h=scenario.cone.h_random,
        rng_seed=seed,
        lazy=pl.lazy,
    )
    return assemble_path(plan, runout=scenario.run.runout)


def run_episode(
    scenario: Scenario,
    mode: str = "replan",
    seed: int | None = None,
    record_log: bool = True,
    async_planner: bool = False,
    gains: CascadeGains | None = None,
    capture_distance: float = CAPTURE_DISTANCE,
) -> EpisodeResult:
    """Fly one episode and collect its metrics; failures are reported, never raised."""
    mode = _normalise_mode(mode)
    seed = scenario.seed if seed is None else seed
    result = EpisodeResult(mode=mode, seed=seed, status="running")
    try:
        _fly(scenario, mode, seed, record_log, async_planner, gains, capture_distance, result)
    except Timeout as exc:
        result.status, result.message = "timeout", str(exc)
    except NonFinite as exc:
        result.status, result.message = "nonfinite", str(exc)
    except NoPath as exc:
        result.status, result.message = "nopath", str(exc)
    return result


def _fly(sc, mode, seed, record_log, async_planner, gains, capture, result) -> None:
    params = sc.quad_params()
    cfg = sc.contouring_config()
    env = Environment(tuple(WindRegion(np.array(w.box_min), np.array(w.box_max), np.array(w.force)) for w in sc.wind))
    gains = gains or CascadeGains()
    base = sc.build_gates()
    course = [base[i % len(base)] for i in range(len(base) * sc.run.laps)]
    n_gates = len(base)
    wind = env.arrays()
    dt = sc.sim.dt
    steps = int(round(1.0 / (sc.sim.control_hz * dt)))
    control_dt = steps * dt
    max_steps = int(math.ceil(sc.run.timeout / dt))

    x = QuadState(np.array(sc.start.p), v=np.array(sc.start.v)).to_array()
    ctrl = ContouringController(cfg)
    tstate = TrackerState()
    box = _PathBox()
    replanner = _Replanner(sc, course)
    next_gate = 0
    k = 0
    tick = 0
    theta_guess = 0.0
    seen_version = -1
    accel = np.zeros(3)
    e_c = 0.0
    ec_sum = vth_sum = 0.0
    start_errors: list[float] = []
    sat_ticks = 0

    t0 = time.perf_counter()
    if mode == "fixed":
        box.publish(plan_fixed_reference(sc, course, seed))
    else:
        box.publish(replanner.plan(x[0:3], x[7:10], 0.0, 0))
        result.replans += 1
    result.plan_wall_time += time.perf_counter() - t0

    shared = {"p": x[0:3].copy(), "v": x[7:10].copy(), "t": 0.0, "gate": 0, "theta": 0.0, "e_c": 0.0, "version": 1}
    stop = threading.Event()
    worker = None
    if mode == "replan" and async_planner:
        lock = threading.Lock()

        def loop() -> None:
            while not stop.is_set():
                with lock:
                    p, v, t, g = shared["p"].copy(), shared["v"].copy(), shared["t"], shared["gate"]
                    theta, ec, seen = shared["theta"], shared["e_c"], shared["version"]
                if g >= len(course):
                    return
                # progress is only meaningful on the path the controller last saw
                theta = theta if seen == box.snapshot()[1] else None
                try:
                    fresh_path = replanner.plan(p, v, t, g, theta, ec)
                    if fresh_path is None:
                        result.plans_declined += 1
                    else:
                        box.publish(fresh_path)
                        result.replans += 1
                except NoPath:
                    result.plan_failures += 1

        worker = threading.Thread(target=loop, name="planner", daemon=True)
        worker.start()

    try:
        while True:
            t = k * dt
            if k >= max_steps:
                raise Timeout(f"timeout after {t:.2f} s with {next_gate}/{len(course)} gates passed")
            if mode == "replan" and worker is None and tick % sc.run.replan_every == 0 and tick > 0:
                t1 = time.perf_counter()
                try:
                    fresh_path = replanner.plan(x[0:3], x[7:10], t, next_gate, theta_guess, e_c)
                    if fresh_path is None:
                        result.plans_declined += 1
                    else:
                        box.publish(fresh_path)
                        result.replans += 1
                except NoPath:
                    result.plan_failures += 1
                result.plan_wall_time += time.perf_counter() - t1
            path, version = box.snapshot()
            if version != seen_version:
                # a new replanned reference starts at the vehicle
                theta_guess = 0.0 if mode == "replan" else theta_guess
                seen_version = version
                fresh = True
            else:
                fresh = False
            proj = project_progress(path, x[0:3], theta_guess, PROJECTION_WINDOW)
            e_c = proj.contour
            if fresh:
                start_errors.append(e_c)
            tstate = TrackerState(proj.theta_star, tstate.v_theta, tstate.last_accel)
            try:
                accel, tstate, _ = ctrl.solve(x[0:3], x[7:10], tstate, path)
            except SolverDiverged as exc:
                result.solver_fallbacks += 1
                log.warning("tracker fallback at t=%.3f: %s", t, exc)
            theta_guess = proj.theta_star + tstate.v_theta * control_dt
            ec_sum += e_c
            vth_sum += tstate.v_theta

            saturated = False
            event = ""
            for _ in range(steps):
                t = k * dt
                out = cascade(accel, x, params, gains, detail=True)
                saturated |= out.saturated
                f_T, tau = rotor_mix(out.command, params)
                x_new = step_array(x, f_T, tau, params, dt, t, wind)
                k += 1
                if next_gate < len(course):
                    gate = gate_at(course[next_gate], k * dt)
                    ev = detect_gate_pass(x[0:3], x_new[0:3], gate, t, k * dt)
                    if ev is not None and ev.deviation <= capture:
                        result.gates.append(GateRecord(ev.gate_id, next_gate // n_gates, ev.time, ev.deviation, ev.valid))
                        event = f"{event};{ev.gate_id}" if event else ev.gate_id
                        next_gate += 1
                        if next_gate == len(course):
                            result.lap_time = ev.time
                x = x_new
            sat_ticks += saturated
            tick += 1
            if worker is not None:
                with lock:
                    shared.update(p=x[0:3].copy(), v=x[7:10].copy(), t=k * dt, gate=next_gate, theta=theta_guess,
                                  e_c=e_c, version=seen_version)
            if record_log:
                push = env.force(x[0:3], k * dt)
                result.log.append((
                    k * dt, *map(float, x[0:3]), *map(float, x[7:10]), proj.theta_star, tstate.v_theta,
                    e_c, proj.lag, *out.command.as_array().tolist(), int(saturated), *map(float, push), event,
                ))
            if next_gate == len(course):
                result.status = "completed"
                break
    finally:
        stop.set()
        if worker is not None:
            worker.join(timeout=5.0)
        result.ticks = tick
        result.final_time = k * dt
        if tick:
            result.mean_contour_error = ec_sum / tick
            result.mean_progress_rate = vth_sum / tick
            result.saturation_fraction = sat_ticks / tick
        if start_errors:
            result.start_of_plan_contour_error = float(np.mean(start_errors))
