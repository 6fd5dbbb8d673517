"""Geometry and kinematics: integration accuracy, collision, lane projection."""

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from treeplan import (
    AgentState,
    DynamicsLimits,
    Footprint,
    Lane,
    LaneGraph,
    Trajectory,
    UnicycleInput,
    check_collision,
    integrate_unicycle,
    is_offroad,
    project_to_lane,
)
from treeplan.world import (
    concat_trajectories,
    footprint_corners,
    lane_point_at,
    lane_points_at_batch,
    obb_clearance,
    obb_overlap,
    point_in_polygon,
    project_to_lane_batch,
    wrap_angle,
)


class TestIntegrateUnicycle:
    def test_straight_constant_speed(self):
        s = integrate_unicycle(AgentState(0, 0, 10, 0), UnicycleInput(0, 0), 1.0)
        assert s.x == pytest.approx(10.0, abs=1e-12)
        assert s.y == pytest.approx(0.0, abs=1e-12)

    def test_constant_acceleration(self):
        s = integrate_unicycle(AgentState(0, 0, 10, 0), UnicycleInput(2, 0), 1.0)
        assert s.v == pytest.approx(12.0, abs=1e-9)
        assert s.x == pytest.approx(11.0, abs=1e-9)

    def test_constant_turn_matches_arc(self):
        """Closed-form circular arc x = (v/w) sin(wt), y = (v/w)(1 - cos(wt))."""
        v, w = 10.0, 0.5
        s = integrate_unicycle(AgentState(0, 0, v, 0), UnicycleInput(0, w), 1.0)
        assert abs(s.x - (v / w) * math.sin(w)) < 1e-6
        assert abs(s.y - (v / w) * (1 - math.cos(w))) < 1e-6
        assert s.psi == pytest.approx(w, abs=1e-9)

    def test_speed_clamped_at_zero(self):
        s = integrate_unicycle(AgentState(0, 0, 1.0, 0), UnicycleInput(-6, 0), 1.0)
        assert s.v == 0.0

    def test_speed_clamped_at_vmax(self):
        lim = DynamicsLimits(v_max=12.0)
        s = integrate_unicycle(AgentState(0, 0, 10, 0), UnicycleInput(4, 0), 1.0, lim)
        assert s.v == pytest.approx(12.0)

    @given(
        v=st.floats(0.0, 20.0),
        a=st.floats(-4.0, 4.0),
        w=st.floats(-1.0, 1.0),
        psi=st.floats(-3.1, 3.1),
    )
    @settings(max_examples=50, deadline=None)
    def test_heading_advances_linearly(self, v, a, w, psi):
        s = integrate_unicycle(AgentState(0, 0, v, psi), UnicycleInput(a, w), 0.5)
        assert abs(wrap_angle(s.psi - (psi + 0.5 * w))) < 1e-9


class TestAgentState:
    def test_rejects_negative_speed(self):
        with pytest.raises(ValueError):
            AgentState(0, 0, -1.0, 0)

    def test_heading_wrapped(self):
        s = AgentState(0, 0, 1, 3 * math.pi)
        assert -math.pi < s.psi <= math.pi

    def test_fields_are_plain_floats(self):
        s = AgentState(np.float64(1.0), np.float64(2.0), np.float64(3.0), np.float64(0.1))
        assert all(type(v) is float for v in (s.x, s.y, s.v, s.psi))


class TestCollision:
    def test_contact_longitudinal(self):
        """4 m boxes nose to tail: centers 3.9 m apart overlap, 4.1 m do not."""
        fp = Footprint(4.0, 2.0)
        a = AgentState(0, 0, 1, 0)
        assert check_collision(a, fp, AgentState(3.9, 0, 1, 0), fp)
        assert not check_collision(a, fp, AgentState(4.1, 0, 1, 0), fp)

    def test_symmetry(self):
        fa, fb = Footprint(4.6, 1.8), Footprint(2.0, 1.0)
        a = AgentState(0, 0, 1, 0.3)
        b = AgentState(2.5, 1.0, 1, -0.8)
        assert check_collision(a, fa, b, fb) == check_collision(b, fb, a, fa)

    def test_rotated_overlap(self):
        fp = Footprint(4.0, 2.0)
        a = AgentState(0, 0, 1, 0)
        b = AgentState(0, 2.5, 1, math.pi / 2)
        # b's long axis is vertical; half extents 2 and 1 meet at gap 3
        assert check_collision(a, fp, b, fp)
        assert not check_collision(a, fp, AgentState(0, 3.2, 1, math.pi / 2), fp)

    def test_clearance_zero_on_overlap_positive_otherwise(self):
        fp = Footprint(4.0, 2.0)
        assert obb_clearance(0, 0, 0, fp, 3.0, 0, 0, fp) == 0.0
        d = obb_clearance(0, 0, 0, fp, 6.0, 0, 0, fp)
        assert d == pytest.approx(2.0, abs=1e-9)

    def test_clearance_vectorized_matches_scalar(self):
        fp = Footprint(4.6, 1.8)
        rng = np.random.default_rng(0)
        xs = rng.uniform(-10, 10, 20)
        ys = rng.uniform(-5, 5, 20)
        psis = rng.uniform(-1, 1, 20)
        batch = obb_clearance(xs, ys, psis, fp, 3.0, 1.0, 0.2, fp)
        for k in range(20):
            single = obb_clearance(xs[k], ys[k], psis[k], fp, 3.0, 1.0, 0.2, fp)
            assert float(batch[k]) == pytest.approx(float(single), abs=1e-12)


class TestOffroad:
    @pytest.fixture
    def band(self):
        """Drivable band y in [-2, 2]."""
        lane = Lane("L", np.array([[0.0, 0.0], [100.0, 0.0]]), 10.0)
        area = np.array([[0.0, -2.0], [100.0, -2.0], [100.0, 2.0], [0.0, 2.0]])
        return LaneGraph((lane,), (area,))

    def test_parallel_near_boundary_stays_on(self, band):
        """4.6x1.8 box, center 0.9 m from the y=2 edge, heading parallel:
        corners reach y = 1.1 + 0.9 = 2.0 exactly; boundary counts inside."""
        fp = Footprint(4.6, 1.8)
        assert not is_offroad(AgentState(50.0, 1.1, 1, 0.0), fp, band)

    def test_perpendicular_near_boundary_goes_off(self, band):
        """Same center but heading perpendicular: corners reach y = 1.1 + 2.3."""
        fp = Footprint(4.6, 1.8)
        assert is_offroad(AgentState(50.0, 1.1, 1, math.pi / 2), fp, band)

    def test_point_in_polygon_boundary_inside(self):
        poly = np.array([[0.0, 0.0], [2.0, 0.0], [2.0, 2.0], [0.0, 2.0]])
        assert point_in_polygon(1.0, 0.0, poly)
        assert point_in_polygon(1.0, 1.0, poly)
        assert not point_in_polygon(3.0, 1.0, poly)


class TestLaneProjection:
    def test_l_shape_matches_dense_sampling(self):
        """Projection near the corner of an L agrees with brute force."""
        cl = np.array([[0.0, 0.0], [10.0, 0.0], [10.0, 10.0]])
        p = (11.0, 1.0)
        arc, lat, heading = project_to_lane(p, cl)

        # dense brute force over the polyline
        ts = np.linspace(0, 1, 20001)
        seg1 = np.stack([10 * ts, np.zeros_like(ts)], axis=1)
        seg2 = np.stack([np.full_like(ts, 10.0), 10 * ts], axis=1)
        pts = np.vstack([seg1, seg2])
        d = np.hypot(pts[:, 0] - p[0], pts[:, 1] - p[1])
        assert abs(lat) == pytest.approx(d.min(), abs=1e-3)

    def test_signed_lateral(self):
        cl = np.array([[0.0, 0.0], [10.0, 0.0]])
        _, lat_left, _ = project_to_lane((5.0, 1.0), cl)
        _, lat_right, _ = project_to_lane((5.0, -1.0), cl)
        assert lat_left == pytest.approx(1.0)
        assert lat_right == pytest.approx(-1.0)

    def test_batch_matches_scalar(self):
        cl = np.array([[0.0, 0.0], [10.0, 0.0], [10.0, 10.0], [20.0, 12.0]])
        rng = np.random.default_rng(1)
        pts = rng.uniform(-2, 22, size=(40, 2))
        arcs, lats, heads = project_to_lane_batch(pts, cl)
        for k, p in enumerate(pts):
            a, l, h = project_to_lane(p, cl)
            assert a == pytest.approx(float(arcs[k]), abs=1e-12)
            assert l == pytest.approx(float(lats[k]), abs=1e-12)
            assert h == pytest.approx(float(heads[k]), abs=1e-12)

    def test_lane_point_batch_matches_scalar(self):
        cl = np.array([[0.0, 0.0], [10.0, 0.0], [10.0, 10.0]])
        arcs = np.array([-1.0, 0.0, 3.0, 10.0, 15.0, 25.0])
        xs, ys, hs = lane_points_at_batch(cl, arcs)
        for k, arc in enumerate(arcs):
            x, y, h = lane_point_at(cl, float(arc))
            assert (x, y, h) == (pytest.approx(float(xs[k])), pytest.approx(float(ys[k])), pytest.approx(float(hs[k])))


class TestTrajectory:
    def test_state_at_interpolates(self):
        samples = (AgentState(0, 0, 2, 0), AgentState(2, 0, 2, 0))
        traj = Trajectory(0.0, 1.0, samples)
        mid = traj.state_at(0.5)
        assert mid.x == pytest.approx(1.0)

    def test_concat_drops_duplicate_join(self):
        a = Trajectory(0.0, 0.1, (AgentState(0, 0, 1, 0), AgentState(0.1, 0, 1, 0)))
        b = Trajectory(0.1, 0.1, (AgentState(0.1, 0, 1, 0), AgentState(0.2, 0, 1, 0)))
        joined = concat_trajectories([a, b])
        assert len(joined.samples) == 3
        assert joined.samples[-1].x == pytest.approx(0.2)

    def test_footprint_corners_axis_aligned(self):
        corners = footprint_corners(0.0, 0.0, 0.0, Footprint(4.0, 2.0))
        xs = sorted(c[0] for c in corners)
        ys = sorted(c[1] for c in corners)
        assert xs == pytest.approx([-2.0, -2.0, 2.0, 2.0])
        assert ys == pytest.approx([-1.0, -1.0, 1.0, 1.0])
