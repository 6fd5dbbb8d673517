"""Shared fixtures: small maps, hand-built trees, and the worked cut-in
contingency instance used across the DP and baseline tests."""

import numpy as np
import pytest

from treeplan import (
    AgentState,
    CostTensor,
    Footprint,
    Lane,
    LaneGraph,
    ScenarioNode,
    ScenarioTree,
    StageSchedule,
    Trajectory,
    TrajectoryTree,
    fit_spline,
)
from treeplan.sampler import TreeNode, spline_to_trajectory


@pytest.fixture
def two_lane_map():
    """Two parallel straight lanes 3.5 m apart, bounded drivable band."""
    l0 = Lane("L0", np.array([[float(x), 0.0] for x in range(-20, 301, 20)]), 12.0)
    l1 = Lane("L1", np.array([[float(x), 3.5] for x in range(-20, 301, 20)]), 12.0)
    area = np.array([[-20.0, -1.75], [300.0, -1.75], [300.0, 5.25], [-20.0, 5.25]])
    return LaneGraph((l0, l1), (area,))


def _segment(start, terminal, duration, dt, t0):
    sp = fit_spline(start, terminal, duration, dt)
    return spline_to_trajectory(sp, start, terminal, dt, t0)


def build_ego_chain(states, schedule):
    """Linear helper: one ego node per stage, chained segments."""
    dt = schedule.dt
    root = TreeNode(id=0, stage=0, parent_id=None, segment=Trajectory(0.0, dt, (states[0],)))
    nodes = [root]
    for i in range(1, len(states)):
        seg = _segment(states[i - 1], states[i], schedule.stage_durations[i], dt, schedule.stage_start(i))
        nodes.append(TreeNode(id=i, stage=i, parent_id=i - 1, segment=seg))
    return TrajectoryTree(nodes=tuple(nodes), schedule=schedule)


@pytest.fixture
def cutin_instance():
    """Worked contingency instance: nudge forward, observe, then pass or brake.

    Two-stage tree with a single stage-1 node (nudge) and two stage-2
    children (pass, brake). The scenario branches once at stage 1 into A
    (the other car blocks) and B (it yields); each branch has a single
    stage-2 continuation. Costs are chosen so only the stage-2 choice
    matters: passing costs 10 under A and 0 under B, braking costs 1 under
    either, everything else is free.
    """
    schedule = StageSchedule.uniform(2)
    dt = schedule.dt
    s0 = AgentState(0.0, 0.0, 5.0, 0.0)
    s_nudge = AgentState(10.0, 0.0, 5.0, 0.0)
    s_pass = AgentState(24.0, 0.0, 9.0, 0.0)
    s_brake = AgentState(16.0, 0.0, 1.0, 0.0)

    root = TreeNode(id=0, stage=0, parent_id=None, segment=Trajectory(0.0, dt, (s0,)))
    nudge = TreeNode(id=1, stage=1, parent_id=0, segment=_segment(s0, s_nudge, 2.0, dt, 0.0))
    n_pass = TreeNode(id=2, stage=2, parent_id=1, segment=_segment(s_nudge, s_pass, 2.0, dt, 2.0))
    n_brake = TreeNode(id=3, stage=2, parent_id=1, segment=_segment(s_nudge, s_brake, 2.0, dt, 2.0))
    tree = TrajectoryTree(nodes=(root, nudge, n_pass, n_brake), schedule=schedule)

    def scenario(p_a, p_b):
        nodes = {
            (): ScenarioNode((), 0, {}, 1.0),
            (0,): ScenarioNode((0,), 1, {}, p_a),
            (1,): ScenarioNode((1,), 1, {}, p_b),
            (0, 0): ScenarioNode((0, 0), 2, {}, 1.0),
            (1, 0): ScenarioNode((1, 0), 2, {}, 1.0),
        }
        return ScenarioTree(nodes=nodes, schedule=schedule)

    costs = CostTensor(
        {
            (0, ()): 0.0,
            (1, (0,)): 0.0,
            (1, (1,)): 0.0,
            (2, (0, 0)): 10.0,
            (2, (1, 0)): 0.0,
            (3, (0, 0)): 1.0,
            (3, (1, 0)): 1.0,
        }
    )
    return tree, scenario, costs


@pytest.fixture
def n1_instance():
    """One-stage instance with two ego children and cost matrix [[1,5],[4,2]]
    against branch probabilities (0.6, 0.4); optimum is 2.6 via child 1."""
    schedule = StageSchedule.uniform(1)
    dt = schedule.dt
    s0 = AgentState(0.0, 0.0, 5.0, 0.0)
    sa = AgentState(10.0, 0.0, 5.0, 0.0)
    sb = AgentState(8.0, 1.0, 4.0, 0.0)
    root = TreeNode(id=0, stage=0, parent_id=None, segment=Trajectory(0.0, dt, (s0,)))
    c1 = TreeNode(id=1, stage=1, parent_id=0, segment=_segment(s0, sa, 2.0, dt, 0.0))
    c2 = TreeNode(id=2, stage=1, parent_id=0, segment=_segment(s0, sb, 2.0, dt, 0.0))
    tree = TrajectoryTree(nodes=(root, c1, c2), schedule=schedule)
    scenario = ScenarioTree(
        nodes={
            (): ScenarioNode((), 0, {}, 1.0),
            (0,): ScenarioNode((0,), 1, {}, 0.6),
            (1,): ScenarioNode((1,), 1, {}, 0.4),
        },
        schedule=schedule,
    )
    costs = CostTensor(
        {
            (0, ()): 0.0,
            (1, (0,)): 1.0,
            (1, (1,)): 5.0,
            (2, (0,)): 4.0,
            (2, (1,)): 2.0,
        }
    )
    return tree, scenario, costs
