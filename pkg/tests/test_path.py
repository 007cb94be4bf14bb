"""Arc-length reference path built from a point-mass plan."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import arc_length_quadrature, dense_projection
from pmmreplan.path import (
    DegeneratePlan,
    OutOfRange,
    Path,
    assemble_path,
    point_at,
    project_progress,
)
from pmmreplan.pmm_axis import AxisBounds
from pmmreplan.velocity_graph import build_plan

U1 = AxisBounds(-1, 1)
U = AxisBounds(-8, 8)
REST = np.zeros(3)


def straight_path():
    plan = build_plan((REST, REST), [np.array([4.0, 0, 0])], [REST], U1)
    return plan, assemble_path(plan)


def curved_plan():
    return build_plan(
        (REST, REST),
        [np.array([6.0, 3.0, 0.0]), np.array([8.0, 10.0, 0.0])],
        [np.array([4.0, 3.0, 0.0]), np.array([0.0, 5.0, 0.0])],
        U,
    )


class TestAssemble:
    """Sampling the plan into a path."""

    def test_straight_rest_to_rest(self):
        _, path = straight_path()
        assert path.total_length == pytest.approx(4.0, abs=1e-3)
        np.testing.assert_allclose(path.tangents, np.tile([1.0, 0.0, 0.0], (len(path), 1)), atol=1e-12)

    def test_monotone_parameters(self):
        path = assemble_path(curved_plan())
        assert np.all(np.diff(path.theta) > 0)
        assert np.all(np.diff(path.plan_time) > 0)
        assert path.theta[0] == 0.0

    def test_unit_tangents(self):
        path = assemble_path(curved_plan())
        np.testing.assert_allclose(np.linalg.norm(path.tangents, axis=1), 1.0, atol=1e-6)

    def test_spacing_bounded_by_speed(self):
        plan = curved_plan()
        path = assemble_path(plan, sample_dt=0.01)
        vmax = max(np.linalg.norm(plan.evaluate(t)[1]) for t in np.linspace(0, plan.total_time, 400))
        assert path.max_spacing <= 1.01 * vmax * 0.01 + 1e-9

    def test_arc_length_matches_quadrature(self):
        plan = curved_plan()
        path = assemble_path(plan, sample_dt=0.01)
        breaks = []
        t0 = 0.0
        for seg in plan.segments:
            breaks += [t0 + ax.t1 for ax in seg.axes] + [t0 + seg.duration]
            t0 += seg.duration
        length = arc_length_quadrature(lambda t: np.linalg.norm(plan.evaluate(t)[1]), plan.total_time, breaks)
        assert path.total_length == pytest.approx(length, rel=1e-3)

    def test_gate_thetas_near_gates(self):
        plan = curved_plan()
        path = assemble_path(plan)
        for th, pos in zip(path.gate_thetas, plan.gate_positions):
            p, _ = point_at(path, th)
            assert np.linalg.norm(p - pos) <= 0.5

    def test_translation_and_mirror_keep_length(self):
        plan = curved_plan()
        shift, flip = np.array([1.0, -2.0, 3.0]), np.array([-1.0, 1.0, 1.0])
        other = build_plan(
            (shift, REST),
            [flip * s.end[0] + shift for s in plan.segments],
            [flip * v for v in plan.gate_velocities],
            U,
        )
        assert assemble_path(other).total_length == pytest.approx(assemble_path(plan).total_length, rel=1e-9)

    def test_axis_permutation_keeps_length(self):
        # swapping x and y is an isometry that maps identical per-axis bounds onto themselves
        plan = curved_plan()
        swap = np.array([[0, 1, 0], [1, 0, 0], [0, 0, 1.0]])
        other = build_plan(
            (REST, REST),
            [swap @ s.end[0] for s in plan.segments],
            [swap @ v for v in plan.gate_velocities],
            U,
        )
        assert assemble_path(other).total_length == pytest.approx(assemble_path(plan).total_length, rel=1e-9)

    def test_degenerate_plan(self):
        plan = build_plan((REST, REST), [REST], [REST], U)
        with pytest.raises(DegeneratePlan):
            assemble_path(plan)

    def test_runout_extends_straight(self):
        plan = curved_plan()
        a, b = assemble_path(plan), assemble_path(plan, runout=5.0)
        assert b.total_length == pytest.approx(a.total_length + 5.0, abs=1e-9)
        np.testing.assert_allclose(b.tangents[-1], a.tangents[-1])
        assert b.gate_thetas == a.gate_thetas


class TestPointAt:
    """Interpolation along the path."""

    def test_ends_and_midpoint(self):
        _, path = straight_path()
        p, _ = point_at(path, 0.0)
        np.testing.assert_array_equal(p, path.positions[0])
        p, _ = point_at(path, path.total_length)
        np.testing.assert_allclose(p, path.positions[-1], atol=1e-12)
        p, t = point_at(path, 2.0)
        np.testing.assert_allclose(p, [2.0, 0, 0], atol=1e-9)
        np.testing.assert_allclose(t, [1.0, 0, 0], atol=1e-12)

    def test_exact_at_knots(self):
        path = assemble_path(curved_plan())
        for k in (1, 17, len(path) // 2):
            p, t = point_at(path, float(path.theta[k]))
            np.testing.assert_allclose(p, path.positions[k], atol=1e-12)
            np.testing.assert_allclose(t, path.tangents[k], atol=1e-9)

    def test_out_of_range(self):
        _, path = straight_path()
        with pytest.raises(OutOfRange):
            point_at(path, -0.1)
        with pytest.raises(OutOfRange):
            point_at(path, path.total_length + 0.1)

    def test_time_and_progress_inverse(self):
        path = assemble_path(curved_plan())
        th = np.linspace(0.0, path.total_length, 37)
        np.testing.assert_allclose(path.progress_at(path.time_at(th)), th, atol=1e-9)


class TestProjection:
    """Contour and lag decomposition."""

    def test_on_path(self):
        path = assemble_path(curved_plan())
        for k in (5, 60, len(path) - 10):
            err = project_progress(path, path.positions[k], float(path.theta[k]))
            assert err.contour <= 1e-6 and err.lag <= 1e-6

    def test_lateral_offset(self):
        _, path = straight_path()
        err = project_progress(path, [2.0, 0.3, 0.0], 1.8)
        assert err.contour == pytest.approx(0.3, abs=1e-9)
        assert err.lag == pytest.approx(0.0, abs=1e-9)
        assert err.theta_star == pytest.approx(2.0, abs=1e-9)

    def test_components_orthogonal(self):
        path = assemble_path(curved_plan())
        rng = np.random.default_rng(0)
        for _ in range(20):
            th = rng.uniform(0, path.total_length)
            p = point_at(path, th)[0] + rng.normal(scale=0.3, size=3)
            err = project_progress(path, p, th)
            _, t = point_at(path, err.theta_star)
            assert abs(np.dot(err.e_c, t)) <= 1e-6
            assert np.linalg.norm(np.cross(err.e_l, t)) <= 1e-6

    def test_matches_dense_oracle(self):
        path = assemble_path(curved_plan())
        rng = np.random.default_rng(1)
        for _ in range(30):
            p = point_at(path, rng.uniform(0, path.total_length))[0] + rng.normal(scale=0.5, size=3)
            ref = dense_projection(path.positions, path.theta, p)
            err = project_progress(path, p, ref, window=path.total_length)
            assert abs(err.theta_star - ref) <= path.max_spacing

    @settings(max_examples=60, deadline=None)
    @given(st.floats(0.0, 1.0))
    def test_idempotent(self, frac):
        path = assemble_path(curved_plan())
        th = frac * path.total_length
        p, _ = point_at(path, th)
        assert abs(project_progress(path, p, th).theta_star - th) <= path.max_spacing

    def test_clamped_to_ends(self):
        _, path = straight_path()
        assert project_progress(path, [-3.0, 0.0, 0.0], 0.0).theta_star == 0.0
        assert project_progress(path, [9.0, 0.0, 0.0], 4.0).theta_star == pytest.approx(path.total_length)


class TestCsv:
    """Path dump round trip."""

    def test_round_trip(self, tmp_path):
        path = assemble_path(curved_plan())
        path.to_csv(tmp_path / "path.csv")
        header = (tmp_path / "path.csv").read_text().splitlines()[0]
        assert header == "theta,x,y,z,tx,ty,tz,plan_time"
        back = Path.from_csv(tmp_path / "path.csv")
        for name in ("theta", "positions", "tangents", "plan_time"):
            np.testing.assert_array_equal(getattr(back, name), getattr(path, name))
