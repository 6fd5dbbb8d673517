"""Running cost terms and their stage integrals."""

import math

import numpy as np
import pytest

from treeplan import (
    AgentState,
    CostWeights,
    Footprint,
    Lane,
    LaneGraph,
    StageSchedule,
    Trajectory,
    running_cost,
)
from treeplan.costs import (
    DEFAULT_FOOTPRINT,
    _lane_errors,
    _lane_errors_batch,
    ego_per_sample_cost,
    stage_cost,
)
from treeplan.errors import ScheduleMismatch
from treeplan.prediction import ScenarioNode


def _const_traj(state, n, dt=0.1, t0=0.0):
    return Trajectory(t0, dt, (state,) * n)


class TestRunningCost:
    def test_collision_term_at_one_scale(self):
        """Clearance equal to collision_scale gives exactly e^-1."""
        w = CostWeights(w_collision=1.0, w_lane=0.0, w_goal=0.0, w_comfort=0.0, collision_scale=2.0)
        ego = AgentState(0, 0, 5, 0)
        # 4.6 m boxes nose to tail: clearance = gap - length = 6.6 - 4.6 = 2
        env = {"a": (AgentState(6.6, 0, 5, 0), DEFAULT_FOOTPRINT)}
        c = running_cost(ego, DEFAULT_FOOTPRINT, env, None, w)
        assert c == pytest.approx(math.exp(-1.0), abs=1e-9)

    def test_collision_term_is_one_at_contact(self):
        w = CostWeights(w_collision=1.0, w_lane=0.0, w_goal=0.0, w_comfort=0.0)
        ego = AgentState(0, 0, 5, 0)
        env = {"a": (AgentState(1.0, 0, 5, 0), DEFAULT_FOOTPRINT)}
        c = running_cost(ego, DEFAULT_FOOTPRINT, env, None, w)
        assert c == pytest.approx(1.0)

    def test_comfort_term(self):
        w = CostWeights(w_collision=0.0, w_lane=0.0, w_goal=0.0, w_comfort=0.5)
        c = running_cost(AgentState(0, 0, 5, 0), DEFAULT_FOOTPRINT, {}, None, w,
                         accel=2.0, yaw_rate=0.3)
        assert c == pytest.approx(0.5 * (4.0 + 0.09))


class TestStageCost:
    def _weights(self, **kw):
        base = dict(w_collision=0.0, w_lane=0.0, w_goal=0.0, w_comfort=0.0)
        base.update(kw)
        return CostWeights(**base)

    def test_trapezoid_exact_for_linear_integrand(self):
        """Goal distance decreasing linearly in time integrates exactly.

        Ego moves from x=-2 to x=0 at 1 m/s toward goal (0,0): the goal
        term is c(t) = 2 - t over [0,2], whose integral is 2."""
        w = CostWeights(w_collision=0.0, w_lane=0.0, w_goal=1.0, w_comfort=0.0, goal=(0.0, 0.0))
        n = 21
        samples = tuple(AgentState(-2.0 + 0.1 * k, 0.0, 1.0, 0.0) for k in range(n))
        seg = Trajectory(0.0, 0.1, samples)
        node = ScenarioNode((), 1, {}, 1.0)
        c = stage_cost(seg, node, None, w, goal_norm=1.0)
        assert c.value == pytest.approx(2.0, abs=1e-12)

    def test_zero_duration_segment_costs_nothing(self):
        w = self._weights(w_goal=1.0)
        seg = Trajectory(0.0, 0.1, (AgentState(0, 0, 5, 0),))
        node = ScenarioNode((), 0, {}, 1.0)
        assert stage_cost(seg, node, None, CostWeights(goal=(10.0, 0.0))).value == 0.0

    def test_mismatched_support_raises(self):
        seg = _const_traj(AgentState(0, 0, 5, 0), 21)
        bad = ScenarioNode((0,), 1, {"a": _const_traj(AgentState(9, 0, 5, 0), 15)}, 1.0)
        with pytest.raises(ScheduleMismatch):
            stage_cost(seg, bad, None, CostWeights())

    def test_collision_term_integrated(self):
        """Constant clearance of one scale over 2 s integrates to 2 e^-1."""
        w = self._weights(w_collision=1.0, collision_scale=2.0)
        seg = _const_traj(AgentState(0, 0, 5, 0), 21)
        node = ScenarioNode((0,), 1, {"a": _const_traj(AgentState(6.6, 0, 5, 0), 21)}, 1.0)
        c = stage_cost(seg, node, None, w)
        assert c.value == pytest.approx(2.0 * math.exp(-1.0), abs=1e-9)

    def test_precomputed_ego_terms_match(self):
        lane = Lane("L", np.array([[0.0, 0.0], [100.0, 0.0]]), 10.0)
        lm = LaneGraph((lane,), (np.array([[0, -4], [100, -4], [100, 4], [0, 4]], dtype=float),))
        w = CostWeights(goal=(50.0, 0.0))
        samples = tuple(AgentState(0.5 * k, 0.3, 5.0, 0.01) for k in range(21))
        seg = Trajectory(0.0, 0.1, samples)
        node = ScenarioNode((0,), 1, {"a": _const_traj(AgentState(30, 0, 5, 0), 21)}, 1.0)
        direct = stage_cost(seg, node, lm, w, goal_norm=50.0)
        terms = ego_per_sample_cost(seg, lm, w, goal_norm=50.0)
        cached = stage_cost(seg, node, lm, w, goal_norm=50.0, ego_terms=terms)
        assert cached.value == pytest.approx(direct.value, abs=1e-12)

    def test_lane_errors_batch_matches_scalar(self):
        l0 = Lane("L0", np.array([[0.0, 0.0], [50.0, 0.0], [100.0, 10.0]]), 10.0)
        l1 = Lane("L1", np.array([[0.0, 3.5], [100.0, 3.5]]), 10.0)
        lm = LaneGraph((l0, l1), (np.array([[0, -4], [100, -4], [100, 14], [0, 14]], dtype=float),))
        rng = np.random.default_rng(3)
        xs = rng.uniform(0, 100, 30)
        ys = rng.uniform(-2, 12, 30)
        psis = rng.uniform(-1, 1, 30)
        lats, herrs = _lane_errors_batch(xs, ys, psis, lm)
        for k in range(30):
            lat, herr = _lane_errors(xs[k], ys[k], psis[k], lm)
            assert lat == pytest.approx(float(lats[k]), abs=1e-12)
            assert herr == pytest.approx(float(herrs[k]), abs=1e-12)
