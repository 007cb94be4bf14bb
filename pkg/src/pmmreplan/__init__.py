"""Time-optimal point-mass replanning for quadrotor gate flight.

Closed-form bang-bang axis solutions feed a layered velocity graph searched
with Dijkstra; a contouring tracker follows the resulting path on a simulated
quadrotor.
"""

from .bench import BenchReport, PlanArtifacts, cmd_bench, cmd_plan, cmd_race
from .episode import EpisodeResult, run_episode
from .gates import Gate, GateMotion, PassEvent, detect_gate_pass, gate_at
from .path import ContourErrors, Path, assemble_path, point_at, project_progress
from .pmm_axis import (
    AxisBangBang,
    AxisBoundary,
    AxisBounds,
    PmmSegment,
    evaluate_axis,
    scale_axis_to_duration,
    solve_axis_min_time,
    solve_segment,
)
from .quad import QuadParams, QuadState, RotorCommand, rotor_mix, step_rk4
from .scenario import ParseError, Scenario, parse_scenario, write_scenario
from .sim import Environment, WindRegion, wind_force
from .tracker import CascadeGains, ContouringConfig, ContouringController, TrackerState, cascade
from .velocity_graph import (
    ConeGrid,
    NoPath,
    PmmPlan,
    grid_samples,
    plan_random,
    plan_refocusing,
    random_cone_samples,
    refocus_cone,
    shortest_velocity_path,
)

__version__ = "0.1.0"
