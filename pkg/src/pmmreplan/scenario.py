"""Scenario files: strict YAML parsing, defaults and serialisation.

Every mapping in the file is checked against a fixed key set; unknown keys
and missing required keys raise :class:`ParseError` carrying the line number.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields
from pathlib import Path as FsPath
from typing import Any

import numpy as np
import yaml

from .gates import Gate, GateMotion
from .pmm_axis import AxisBounds
from .quad import QuadParams
from .tracker import ContouringConfig
from .velocity_graph import ConeGrid

Vec3 = tuple[float, float, float]


class ParseError(ValueError):
    def __init__(self, message: str, line: int | None = None, key: str | None = None, source: str | None = None):
        self.line = line
        self.key = key
        self.source = source
        where = source or "<scenario>"
        if line is not None:
            where += f":{line}"
        what = f" key '{key}'" if key else ""
        super().__init__(f"{where}:{what} {message}")


@dataclass(frozen=True)
class MotionKnot:
    t: float
    offset: Vec3


@dataclass(frozen=True)
class GateSpec:
    center: Vec3
    exit_dir: Vec3
    id: str = ""
    pass_radius: float = 0.5
    motion: tuple[MotionKnot, ...] = ()

    def build(self) -> Gate:
        motion = None
        if self.motion:
            motion = GateMotion.from_knots([(k.t, k.offset) for k in self.motion])
        return Gate(self.id, np.array(self.center), np.array(self.exit_dir), self.pass_radius, motion)


@dataclass(frozen=True)
class StartSpec:
    p: Vec3 = (0.0, 0.0, 0.0)
    v: Vec3 = (0.0, 0.0, 0.0)


@dataclass(frozen=True)
class PmmSpec:
    a_lo: Vec3 = (-20.0, -20.0, -9.0)
    a_hi: Vec3 = (20.0, 20.0, 25.0)


@dataclass(frozen=True)
class ConeSpec:
    v_min: float = 0.0
    v_max: float = 20.0
    yaw_span_deg: float = 120.0
    pitch_span_deg: float = 90.0
    s: int = 3
    h_random: int = 150


@dataclass(frozen=True)
class WindSpec:
    box_min: Vec3
    box_max: Vec3
    force: Vec3


@dataclass(frozen=True)
class SimSpec:
    dt: float = 0.001
    control_hz: float = 100.0


@dataclass(frozen=True)
class WeightsSpec:
    q_l: float = 100.0
    q_c: float = 200.0
    mu: float = 1.0
    r_dv: float = 0.1
    r_da: float = 0.05


@dataclass(frozen=True)
class TrackerSpec:
    N: int = 20
    dt: float = 0.06
    v_theta_max: float = 30.0
    dv_theta_min: float = -3.0
    dv_theta_max: float = 3.0
    a_lo: Vec3 = (-19.0, -19.0, -6.0)
    a_hi: Vec3 = (19.0, 19.0, 20.0)
    # progress rate held within this band around the plan's own rate; null frees it
    speed_band: tuple[float, float] | None = (1.0, 1.0)
    speed_slack: float = 0.0
    weights: WeightsSpec = field(default_factory=WeightsSpec)


@dataclass(frozen=True)
class RunSpec:
    laps: int = 1
    timeout: float = 30.0
    replan_every: int = 1
    runout: float = 10.0


@dataclass(frozen=True)
class PlannerSpec:
    horizon: int = 3
    eps: float = 0.99
    max_iter: int = 10
    lazy: bool = False
    # a fresh plan over the same gates may be this much slower (s) than what
    # remains of the current one and still replace it
    accept_slack: float = 0.1
    # contour error (m) beyond which the current reference counts as stale and
    # any fresh plan replaces it
    accept_drift: float = 0.1


@dataclass(frozen=True)
class QuadSpec:
    m: float = 0.752
    J: Vec3 = (2.5e-3, 2.1e-3, 4.3e-3)
    l: float = 0.15
    c_tau: float = 0.022
    u_min: float = 0.0
    u_max: float = 8.5
    D: Vec3 = (0.26, 0.28, 0.42)


@dataclass(frozen=True)
class Scenario:
    gates: tuple[GateSpec, ...]
    name: str = ""
    start: StartSpec = field(default_factory=StartSpec)
    pmm: PmmSpec = field(default_factory=PmmSpec)
    cone: ConeSpec = field(default_factory=ConeSpec)
    wind: tuple[WindSpec, ...] = ()
    sim: SimSpec = field(default_factory=SimSpec)
    tracker: TrackerSpec = field(default_factory=TrackerSpec)
    run: RunSpec = field(default_factory=RunSpec)
    planner: PlannerSpec = field(default_factory=PlannerSpec)
    quad: QuadSpec = field(default_factory=QuadSpec)
    seed: int = 0

    def __post_init__(self) -> None:
        if not self.gates:
            raise ValueError("scenario needs at least one gate")
        if self.run.laps < 1:
            raise ValueError("laps must be >= 1")

    def build_gates(self) -> list[Gate]:
        return [g.build() for g in self.gates]

    def accel_bounds(self) -> tuple[AxisBounds, AxisBounds, AxisBounds]:
        return tuple(AxisBounds(lo, hi) for lo, hi in zip(self.pmm.a_lo, self.pmm.a_hi))

    def cone_grid(self) -> ConeGrid:
        c = self.cone
        return ConeGrid.symmetric(c.v_max, c.yaw_span_deg, c.pitch_span_deg, c.s, c.v_min)

    def quad_params(self) -> QuadParams:
        q = self.quad
        return QuadParams(q.m, np.array(q.J), q.l, q.c_tau, q.u_min, q.u_max, np.array(q.D))

    def contouring_config(self) -> ContouringConfig:
        t, w = self.tracker, self.tracker.weights
        params = self.quad_params()
        return ContouringConfig(
            q_l=w.q_l, q_c=w.q_c, mu=w.mu, r_dv=w.r_dv, r_da=w.r_da,
            v_theta_max=t.v_theta_max, dv_theta_min=t.dv_theta_min, dv_theta_max=t.dv_theta_max,
            N=t.N, dt=t.dt, a_lo=np.array(t.a_lo), a_hi=np.array(t.a_hi),
            drag=params.D / params.m, control_dt=1.0 / self.sim.control_hz,
            speed_band=t.speed_band, speed_slack=t.speed_slack,
        )


class _Map(dict):
    line: int = 0
    lines: dict


class _Loader(yaml.SafeLoader):
    pass


def _construct_map(loader: _Loader, node: yaml.MappingNode) -> _Map:
    out = _Map()
    out.line = node.start_mark.line + 1
    out.lines = {}
    for k_node, v_node in node.value:
        key = loader.construct_object(k_node, deep=True)
        if key in out:
            raise ParseError("duplicate key", k_node.start_mark.line + 1, str(key))
        out[key] = loader.construct_object(v_node, deep=True)
        out.lines[key] = k_node.start_mark.line + 1
    return out


_Loader.add_constructor(yaml.resolver.BaseResolver.DEFAULT_MAPPING_TAG, _construct_map)

# keys that must be present; everything else falls back to the dataclass default
_REQUIRED = {
    GateSpec: {"center", "exit_dir"},
    WindSpec: {"box_min", "box_max", "force"},
    MotionKnot: {"t", "offset"},
}


class _Parser:
    def __init__(self, source: str | None) -> None:
        self.source = source

    def fail(self, msg: str, node: Any = None, key: str | None = None, path: str = "") -> ParseError:
        line = None
        if isinstance(node, _Map):
            line = node.lines.get(key.rsplit(".", 1)[-1], node.line) if key else node.line
        full = f"{path}.{key}" if path and key else (key or path or None)
        return ParseError(msg, line, full, self.source)

    def mapping(self, node: Any, cls: type, path: str, parent: Any = None, key: str | None = None,
                extra: dict | None = None):
        if not isinstance(node, dict):
            raise self.fail("expected a mapping", parent, key, path.rsplit(".", 1)[0] if "." in path else "")
        names = {f.name: f for f in fields(cls)}
        unknown = sorted(set(node) - set(names))
        if unknown:
            raise self.fail("unknown key", node, str(unknown[0]), path)
        missing = sorted(_REQUIRED.get(cls, set()) - set(node))
        if missing:
            raise self.fail("missing required key", node, missing[0], path)
        kwargs = dict(extra or {})
        for name, value in node.items():
            kwargs[name] = self.value(value, cls, name, node, f"{path}.{name}" if path else name)
        try:
            return cls(**kwargs)
        except (TypeError, ValueError) as exc:
            raise self.fail(str(exc), node, None, path) from exc

    def value(self, value: Any, cls: type, name: str, parent: _Map, path: str):
        sub = _NESTED.get((cls, name))
        where = path.rsplit(".", 1)[0] if "." in path else ""
        if sub is not None:
            if isinstance(sub, list):
                if not isinstance(value, list):
                    raise self.fail("expected a list", parent, name, where)
                return tuple(self.mapping(v, sub[0], f"{path}[{i}]", parent, name) for i, v in enumerate(value))
            return self.mapping(value, sub, path, parent, name)
        kind = _KINDS.get((cls, name), "float")
        try:
            return _coerce(value, kind)
        except (TypeError, ValueError) as exc:
            raise self.fail(f"invalid value {value!r}: {exc}", parent, name, where) from exc


def _coerce(value: Any, kind: str):
    if kind == "band":
        if value is None:
            return None
        if not isinstance(value, (list, tuple)) or len(value) != 2:
            raise ValueError("expected null or a list of 2 numbers")
        return tuple(_coerce(v, "float") for v in value)
    if kind == "vec3":
        if not isinstance(value, (list, tuple)) or len(value) != 3:
            raise ValueError("expected a list of 3 numbers")
        out = tuple(_coerce(v, "float") for v in value)
        return out
    if kind == "float":
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise TypeError("expected a number")
        x = float(value)
        if not np.isfinite(x):
            raise ValueError("must be finite")
        return x
    if kind == "int":
        if isinstance(value, bool) or not isinstance(value, int):
            raise TypeError("expected an integer")
        return int(value)
    if kind == "bool":
        if not isinstance(value, bool):
            raise TypeError("expected true or false")
        return value
    if kind == "str":
        if not isinstance(value, (str, int)):
            raise TypeError("expected a string")
        return str(value)
    raise AssertionError(kind)


_NESTED: dict[tuple[type, str], Any] = {
    (Scenario, "start"): StartSpec,
    (Scenario, "pmm"): PmmSpec,
    (Scenario, "cone"): ConeSpec,
    (Scenario, "wind"): [WindSpec],
    (Scenario, "sim"): SimSpec,
    (Scenario, "tracker"): TrackerSpec,
    (Scenario, "run"): RunSpec,
    (Scenario, "planner"): PlannerSpec,
    (Scenario, "quad"): QuadSpec,
    (TrackerSpec, "weights"): WeightsSpec,
    (GateSpec, "motion"): [MotionKnot],
}

_KINDS: dict[tuple[type, str], str] = {
    (Scenario, "name"): "str",
    (Scenario, "seed"): "int",
    (GateSpec, "id"): "str",
    (GateSpec, "center"): "vec3",
    (GateSpec, "exit_dir"): "vec3",
    (MotionKnot, "offset"): "vec3",
    (StartSpec, "p"): "vec3",
    (StartSpec, "v"): "vec3",
    (PmmSpec, "a_lo"): "vec3",
    (PmmSpec, "a_hi"): "vec3",
    (ConeSpec, "s"): "int",
    (ConeSpec, "h_random"): "int",
    (WindSpec, "box_min"): "vec3",
    (WindSpec, "box_max"): "vec3",
    (WindSpec, "force"): "vec3",
    (TrackerSpec, "N"): "int",
    (TrackerSpec, "a_lo"): "vec3",
    (TrackerSpec, "a_hi"): "vec3",
    (TrackerSpec, "speed_band"): "band",
    (RunSpec, "laps"): "int",
    (RunSpec, "replan_every"): "int",
    (PlannerSpec, "horizon"): "int",
    (PlannerSpec, "max_iter"): "int",
    (PlannerSpec, "lazy"): "bool",
    (QuadSpec, "J"): "vec3",
    (QuadSpec, "D"): "vec3",
}

_TOP_KEYS = {f.name for f in fields(Scenario)} - {"gates"} | {"track"}


def _validate(sc: Scenario, parser: _Parser, root: _Map) -> None:
    def check(cond: bool, msg: str, key: str) -> None:
        if not cond:
            raise parser.fail(msg, root, key)

    check(all(lo < 0 < hi for lo, hi in zip(sc.pmm.a_lo, sc.pmm.a_hi)), "need a_lo < 0 < a_hi per axis", "pmm")
    check(0 <= sc.cone.v_min <= sc.cone.v_max and sc.cone.s >= 1 and sc.cone.h_random >= 1, "invalid cone", "cone")
    check(sc.sim.dt > 0 and sc.sim.control_hz > 0, "dt and control_hz must be positive", "sim")
    steps = 1.0 / (sc.sim.control_hz * sc.sim.dt)
    check(abs(steps - round(steps)) < 1e-9 and round(steps) >= 1, "control period must be a multiple of sim dt", "sim")
    check(sc.run.timeout > 0 and sc.run.replan_every >= 1 and sc.run.runout >= 0, "invalid run settings", "run")
    check(sc.planner.horizon >= 1 and 0 < sc.planner.eps < 1 and sc.planner.max_iter >= 1, "invalid planner", "planner")
    check(sc.planner.accept_slack >= 0 and sc.planner.accept_drift > 0, "invalid plan acceptance settings", "planner")
    for w in sc.wind:
        check(all(a < b for a, b in zip(w.box_min, w.box_max)), "wind box_min must be < box_max per axis", "wind")
    ids = [g.id for g in sc.gates]
    check(len(set(ids)) == len(ids), "gate ids must be unique", "track")
    for g in sc.gates:
        check(g.pass_radius > 0, f"gate {g.id}: pass_radius must be positive", "track")
        check(np.linalg.norm(g.exit_dir) > 0, f"gate {g.id}: zero exit_dir", "track")
        times = [k.t for k in g.motion]
        check(all(b > a for a, b in zip(times, times[1:])), f"gate {g.id}: motion times must increase", "track")
    try:
        sc.quad_params()
    except ValueError as exc:
        raise parser.fail(str(exc), root, "quad") from exc
    try:
        sc.contouring_config()
    except ValueError as exc:
        raise parser.fail(str(exc), root, "tracker") from exc


def parse_scenario_text(text: str, source: str | None = None) -> Scenario:
    parser = _Parser(source)
    try:
        root = yaml.load(text, Loader=_Loader)
    except ParseError as exc:
        raise ParseError(str(exc).split(": ", 1)[-1], exc.line, exc.key, source) from None
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise ParseError(f"invalid YAML: {getattr(exc, 'problem', exc)}", mark.line + 1 if mark else None,
                         None, source) from None
    if not isinstance(root, _Map):
        raise ParseError("top level must be a mapping", 1, None, source)
    unknown = sorted(set(root) - _TOP_KEYS)
    if unknown:
        raise parser.fail("unknown key", root, str(unknown[0]))
    if "track" not in root:
        raise ParseError("missing required key", 1, "track", source)
    track = root["track"]
    if not isinstance(track, _Map):
        raise parser.fail("expected a mapping", root, "track")
    if set(track) - {"gates"}:
        raise parser.fail("unknown key", track, sorted(set(track) - {"gates"})[0], "track")
    if "gates" not in track:
        raise parser.fail("missing required key", track, "gates", "track")
    if not isinstance(track["gates"], list) or not track["gates"]:
        raise parser.fail("need a non-empty list of gates", track, "gates", "track")
    gates = []
    for i, g in enumerate(track["gates"]):
        spec = parser.mapping(g, GateSpec, f"track.gates[{i}]", track, "gates")
        if not spec.id:
            spec = GateSpec(spec.center, spec.exit_dir, f"G{i + 1}", spec.pass_radius, spec.motion)
        gates.append(spec)
    body = _Map({k: v for k, v in root.items() if k != "track"})
    body.line, body.lines = root.line, root.lines
    sc = parser.mapping(body, Scenario, "", extra={"gates": tuple(gates)})
    _validate(sc, parser, root)
    return sc


def parse_scenario(file) -> Scenario:
    """Read and validate a scenario file."""
    path = FsPath(file)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ParseError(f"cannot read file: {exc.strerror}", None, None, str(path)) from None
    return parse_scenario_text(text, str(path))


def _plain(x: Any) -> Any:
    if isinstance(x, dict):
        return {k: _plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    return x


def scenario_to_dict(sc: Scenario) -> dict:
    d = _plain(asdict(sc))
    gates = d.pop("gates")
    return {"name": d.pop("name"), "track": {"gates": gates}, **d}


def dump_scenario(sc: Scenario) -> str:
    return yaml.safe_dump(scenario_to_dict(sc), sort_keys=False, default_flow_style=None)


def write_scenario(sc: Scenario, file) -> None:
    FsPath(file).write_text(dump_scenario(sc))
