"""Running cost and its stage integral.

Terms: collision proximity (exponential in clearance, 1 at contact), lane
keeping (lateral offset and heading error), goal progress (remaining distance,
normalized), and ride comfort (squared accel and yaw rate from finite
differences). Stage costs integrate the running cost with the trapezoid rule
over the aligned ego/environment samples.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ScheduleMismatch
from .prediction import ECPredictionEnsemble, ScenarioNode, ScenarioTree
from .sampler import TrajectoryTree
from .world import (
    AgentState,
    Footprint,
    LaneGraph,
    Trajectory,
    obb_clearance,
    project_to_lane,
    project_to_lane_batch,
    wrap_angle,
)

DEFAULT_FOOTPRINT = Footprint(length=4.6, width=1.8)


@dataclass(frozen=True)
class CostWeights:
    w_collision: float = 10.0
    w_lane: float = 0.1
    w_goal: float = 1.0
    w_comfort: float = 0.05
    collision_scale: float = 2.0
    goal: tuple | None = None  # target point (x, y)

    def __post_init__(self):
        for name in ("w_collision", "w_lane", "w_goal", "w_comfort"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")
        if self.collision_scale <= 0:
            raise ValueError("collision_scale must be positive")
        if self.goal is not None:
            object.__setattr__(self, "goal", (float(self.goal[0]), float(self.goal[1])))


def running_cost(
    ego: AgentState,
    ego_fp: Footprint,
    env: dict,
    lane_map: LaneGraph | None,
    weights: CostWeights,
    accel: float = 0.0,
    yaw_rate: float = 0.0,
    goal_norm: float = 1.0,
) -> float:
    """Instantaneous cost of one ego state against one joint environment state.

    env maps agent_id -> (AgentState, Footprint). accel/yaw_rate supply the
    comfort term (finite-differenced by callers that have trajectory context).
    """
    cost = 0.0
    if weights.w_collision > 0:
        for state, fp in env.values():
            d = float(
                obb_clearance(ego.x, ego.y, ego.psi, ego_fp, state.x, state.y, state.psi, fp)
            )
            cost += weights.w_collision * math.exp(-d / weights.collision_scale)
    if weights.w_lane > 0 and lane_map is not None and lane_map.lanes:
        lat, herr = _lane_errors(ego.x, ego.y, ego.psi, lane_map)
        cost += weights.w_lane * (lat**2 + herr**2)
    if weights.w_goal > 0 and weights.goal is not None:
        d = math.hypot(ego.x - weights.goal[0], ego.y - weights.goal[1])
        cost += weights.w_goal * d / max(goal_norm, 1e-9)
    cost += weights.w_comfort * (accel**2 + yaw_rate**2)
    return cost


def _lane_errors(x: float, y: float, psi: float, lane_map: LaneGraph):
    best = (math.inf, 0.0)
    for lane in lane_map.lanes:
        _, lat, heading = project_to_lane((x, y), lane.centerline)
        if abs(lat) < abs(best[0]):
            best = (lat, wrap_angle(psi - heading))
    return best


def _lane_errors_batch(xs, ys, psis, lane_map: LaneGraph):
    """Per-sample (lateral offset, heading error) against the nearest lane."""
    pts = np.column_stack([xs, ys])
    best_lat = np.full(len(pts), np.inf)
    best_herr = np.zeros(len(pts))
    for lane in lane_map.lanes:
        _, lat, heading = project_to_lane_batch(pts, lane.centerline)
        better = np.abs(lat) < np.abs(best_lat)
        best_lat = np.where(better, lat, best_lat)
        herr = np.arctan2(np.sin(psis - heading), np.cos(psis - heading))
        best_herr = np.where(better, herr, best_herr)
    return best_lat, best_herr


def ego_per_sample_cost(
    ego_segment: Trajectory,
    lane_map: LaneGraph | None,
    weights: CostWeights,
    goal_norm: float = 1.0,
) -> np.ndarray:
    """Per-sample running cost of the terms that depend on the ego alone:
    lane keeping, goal progress, and comfort. Shared across every scenario
    node evaluated against the same ego segment."""
    n = len(ego_segment.samples)
    xs, ys, vs, psis = ego_segment.arrays()
    per_sample = np.zeros(n)
    if n < 2:
        return per_sample
    dt = ego_segment.dt

    if weights.w_lane > 0 and lane_map is not None and lane_map.lanes:
        lat, herr = _lane_errors_batch(xs, ys, psis, lane_map)
        per_sample += weights.w_lane * (lat**2 + herr**2)

    if weights.w_goal > 0 and weights.goal is not None:
        gd = np.hypot(xs - weights.goal[0], ys - weights.goal[1])
        per_sample += weights.w_goal * gd / max(goal_norm, 1e-9)

    if weights.w_comfort > 0:
        acc = np.diff(vs) / dt
        dpsi = np.array([wrap_angle(d) for d in np.diff(psis)])
        yaw = dpsi / dt
        acc = np.append(acc, acc[-1])
        yaw = np.append(yaw, yaw[-1])
        per_sample += weights.w_comfort * (acc**2 + yaw**2)
    return per_sample


@dataclass(frozen=True)
class StageCost:
    value: float


def stage_cost(
    ego_segment: Trajectory,
    env_node: ScenarioNode,
    lane_map: LaneGraph | None,
    weights: CostWeights,
    ego_fp: Footprint = DEFAULT_FOOTPRINT,
    agent_fps: dict | None = None,
    goal_norm: float = 1.0,
    ego_terms: np.ndarray | None = None,
) -> StageCost:
    """Trapezoidal integral of the running cost over one stage.

    The ego segment and every agent trajectory in the node must share the
    same sample count and dt. Zero-duration (root) segments cost 0.
    ego_terms optionally carries a precomputed ego_per_sample_cost array.
    """
    agent_fps = agent_fps or {}
    n = len(ego_segment.samples)
    dt = ego_segment.dt
    for aid, traj in env_node.agent_trajectories.items():
        if len(traj.samples) != n or abs(traj.dt - dt) > 1e-12:
            raise ScheduleMismatch(f"agent {aid} support differs from ego segment")
    if n < 2:
        return StageCost(0.0)

    xs, ys, vs, psis = ego_segment.arrays()
    if ego_terms is None:
        ego_terms = ego_per_sample_cost(ego_segment, lane_map, weights, goal_norm)
    per_sample = np.array(ego_terms, dtype=float, copy=True)

    if weights.w_collision > 0:
        for aid, traj in env_node.agent_trajectories.items():
            ax, ay, _, apsi = traj.arrays()
            fp = agent_fps.get(aid, DEFAULT_FOOTPRINT)
            d = obb_clearance(xs, ys, psis, ego_fp, ax, ay, apsi, fp)
            per_sample += weights.w_collision * np.exp(-d / weights.collision_scale)

    return StageCost(float(np.trapezoid(per_sample, dx=dt)))


@dataclass(frozen=True)
class CostTensor:
    """Stage costs for same-stage (ego node, scenario node) pairs.

    Keys are (ego_node_id, scenario_node_path).
    """

    values: dict = field(default_factory=dict)

    def get(self, ego_id: int, scen_path: tuple) -> float:
        return self.values[(ego_id, scen_path)]

    def scaled(self, factor: float) -> "CostTensor":
        return CostTensor({k: factor * v for k, v in self.values.items()})


def _goal_norm(tree: TrajectoryTree, weights: CostWeights) -> float:
    if weights.goal is None:
        return 1.0
    root = tree.node(tree.root_id).segment.start
    return max(1.0, math.hypot(root.x - weights.goal[0], root.y - weights.goal[1]))


def build_cost_tensor(
    tree: TrajectoryTree,
    scenario: ScenarioTree,
    lane_map: LaneGraph | None,
    weights: CostWeights,
    ego_fp: Footprint = DEFAULT_FOOTPRINT,
    agent_fps: dict | None = None,
) -> CostTensor:
    """Costs for every same-stage pair of one ego tree and one scenario tree."""
    norm = _goal_norm(tree, weights)
    values = {}
    for stage in range(min(tree.max_stage, scenario.max_stage) + 1):
        scen_nodes = scenario.stage_nodes(stage)
        for ego_node in tree.stage_nodes(stage):
            terms = ego_per_sample_cost(ego_node.segment, lane_map, weights, norm)
            for scen in scen_nodes:
                values[(ego_node.id, scen.path)] = stage_cost(
                    ego_node.segment, scen, lane_map, weights, ego_fp, agent_fps, norm, terms
                ).value
    return CostTensor(values)


def build_cost_tensor_ec(
    tree: TrajectoryTree,
    ensemble: ECPredictionEnsemble,
    lane_map: LaneGraph | None,
    weights: CostWeights,
    ego_fp: Footprint = DEFAULT_FOOTPRINT,
    agent_fps: dict | None = None,
) -> CostTensor:
    """Costs for ego nodes against the scenario tree their mode resolves to.

    Causal consistency makes the per-node mode resolution immaterial: any two
    trees through a shared ego prefix carry identical nodes there.
    """
    norm = _goal_norm(tree, weights)
    values = {}
    for ego_node in tree.nodes:
        scen_tree = ensemble.tree_for_ego_node(ego_node.id)
        terms = ego_per_sample_cost(ego_node.segment, lane_map, weights, norm)
        for scen in scen_tree.stage_nodes(ego_node.stage):
            values[(ego_node.id, scen.path)] = stage_cost(
                ego_node.segment, scen, lane_map, weights, ego_fp, agent_fps, norm, terms
            ).value
    return CostTensor(values)
