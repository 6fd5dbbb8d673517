"""Randomized verification suites: DP-vs-enumeration, consistency, splines.

Shared between the CLI `verify` command and the acceptance tests. All
generators are seeded and deterministic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .costs import CostTensor
from .dp import brute_force_value, count_policies, policy_expected_cost, solve_policy, solve_policy_ec
from .errors import CausalConsistencyViolation
from .prediction import (
    ECMode,
    KinematicPredictor,
    Scene,
    ScenarioNode,
    ScenarioTree,
    predict_ensemble,
    validate_causal_consistency,
)
from .sampler import (
    SamplerConfig,
    StageSchedule,
    TrajectoryTree,
    TreeNode,
    fit_spline,
    grow_tree,
    spline_to_trajectory,
)
from .world import AgentState, DynamicsLimits


# ---------------------------------------------------------------------------
# abstract random instances (plain trees, random probabilities and costs)


def random_tree(rng: np.random.Generator, num_stages: int, max_branch: int) -> TrajectoryTree:
    """Random structural ego tree; segments are omitted (DP never reads them)."""
    nodes = [TreeNode(id=0, stage=0, parent_id=None, segment=None)]
    frontier = [0]
    next_id = 1
    for stage in range(1, num_stages + 1):
        new_frontier = []
        for pid in frontier:
            for _ in range(int(rng.integers(1, max_branch + 1))):
                nodes.append(TreeNode(id=next_id, stage=stage, parent_id=pid, segment=None))
                new_frontier.append(next_id)
                next_id += 1
        frontier = new_frontier
    return TrajectoryTree(nodes=tuple(nodes), schedule=StageSchedule.uniform(num_stages))


def random_scenario_tree(rng: np.random.Generator, num_stages: int, max_branch: int) -> ScenarioTree:
    nodes = {(): ScenarioNode(path=(), stage=0, agent_trajectories={}, branch_probability=1.0)}
    frontier = [()]
    for stage in range(1, num_stages + 1):
        new_frontier = []
        for path in frontier:
            k = int(rng.integers(1, max_branch + 1))
            probs = rng.random(k) + 0.05
            probs = probs / probs.sum()
            for j in range(k):
                p = path + (j,)
                nodes[p] = ScenarioNode(
                    path=p, stage=stage, agent_trajectories={}, branch_probability=float(probs[j])
                )
                new_frontier.append(p)
        frontier = new_frontier
    return ScenarioTree(nodes=nodes, schedule=StageSchedule.uniform(num_stages))


def random_costs(rng: np.random.Generator, tree: TrajectoryTree, view_pairs) -> CostTensor:
    return CostTensor({key: float(rng.uniform(0.0, 10.0)) for key in view_pairs})


def _pairs_plain(tree: TrajectoryTree, scenario: ScenarioTree):
    for stage in range(tree.max_stage + 1):
        for ego in tree.stage_nodes(stage):
            for scen in scenario.stage_nodes(stage):
                yield (ego.id, scen.path)


def random_dp_instance(rng: np.random.Generator, policy_cap: int = 2000):
    """Random (tree, scenario, costs) with at most policy_cap policies."""
    while True:
        num_stages = int(rng.integers(1, 4))
        max_branch = int(rng.integers(1, 4))
        tree = random_tree(rng, num_stages, max_branch)
        scenario = random_scenario_tree(rng, num_stages, int(rng.integers(1, 4)))
        if count_policies(tree, scenario) <= policy_cap:
            costs = random_costs(rng, tree, _pairs_plain(tree, scenario))
            return tree, scenario, costs


def run_dp_oracle_suite(n_instances: int = 200, seed: int = 0, tol: float = 1e-9):
    """solve_policy vs exhaustive enumeration on random instances."""
    rng = np.random.default_rng(seed)
    failures = []
    for i in range(n_instances):
        tree, scenario, costs = random_dp_instance(rng)
        values, policy = solve_policy(tree, scenario, costs)
        root_v = values.V[(0, ())]
        bf_value, _ = brute_force_value(tree, scenario, costs)
        replayed = policy_expected_cost(tree, scenario, costs, policy)
        if abs(root_v - bf_value) > tol or abs(replayed - bf_value) > tol:
            failures.append((i, root_v, bf_value, replayed))
    return failures


# ---------------------------------------------------------------------------
# EC instances around the kinematic predictor


_VERIFY_SAMPLER = SamplerConfig(
    accel_grid=(-2.0, 0.0, 2.0),
    yaw_rate_grid=(-0.1, 0.0, 0.1),
    speed_grid=(),
    lateral_offsets=(),
    max_children=2,
    limits=DynamicsLimits(),
)


def random_scene(rng: np.random.Generator, n_agents: int) -> Scene:
    agents = {}
    for k in range(n_agents):
        agents[f"a{k}"] = AgentState(
            x=float(rng.uniform(5.0, 30.0)),
            y=float(rng.uniform(-6.0, 6.0)),
            v=float(rng.uniform(0.0, 12.0)),
            psi=float(rng.uniform(-math.pi / 4, math.pi / 4)),
        )
    return Scene(agents=agents)


def random_ec_instance(rng: np.random.Generator, policy_cap: int = 3000):
    """Random (ego tree, EC ensemble, costs) built by the kinematic predictor."""
    while True:
        num_stages = int(rng.integers(1, 4))
        max_children = int(rng.integers(1, 3))
        branching = int(rng.integers(1, 3))
        seed = int(rng.integers(0, 2**31))
        schedule = StageSchedule.uniform(num_stages, stage_duration=1.0)
        sampler = SamplerConfig(
            accel_grid=_VERIFY_SAMPLER.accel_grid,
            yaw_rate_grid=_VERIFY_SAMPLER.yaw_rate_grid,
            speed_grid=(),
            lateral_offsets=(),
            max_children=max_children,
        )
        root = AgentState(0.0, 0.0, float(rng.uniform(2.0, 10.0)), 0.0)
        tree = grow_tree(root, None, schedule, sampler, seed)
        if tree.max_stage < num_stages:
            continue
        scene = random_scene(rng, int(rng.integers(1, 3)))
        predictor = KinematicPredictor(branching_factor=branching)
        ensemble = predict_ensemble(predictor, scene, tree, schedule, branching, seed)
        if count_policies(tree, ensemble) > policy_cap:
            continue
        keys = []
        for ego_node in tree.nodes:
            scen_tree = ensemble.tree_for_ego_node(ego_node.id)
            for scen in scen_tree.stage_nodes(ego_node.stage):
                keys.append((ego_node.id, scen.path))
        costs = random_costs(rng, tree, keys)
        return tree, ensemble, costs


def run_ec_oracle_suite(n_instances: int = 200, seed: int = 1, tol: float = 1e-9):
    rng = np.random.default_rng(seed)
    failures = []
    for i in range(n_instances):
        tree, ensemble, costs = random_ec_instance(rng)
        values, policy = solve_policy_ec(tree, ensemble, costs)
        root_v = values.V[(0, ())]
        bf_value, _ = brute_force_value(tree, ensemble, costs)
        replayed = policy_expected_cost(tree, ensemble, costs, policy)
        if abs(root_v - bf_value) > tol or abs(replayed - bf_value) > tol:
            failures.append((i, root_v, bf_value, replayed))
    return failures


def run_consistency_suite(n_instances: int = 200, seed: int = 2):
    """Kinematic-predictor ensembles must always validate."""
    rng = np.random.default_rng(seed)
    failures = []
    for i in range(n_instances):
        num_stages = int(rng.integers(1, 4))
        max_children = int(rng.integers(1, 4))
        branching = int(rng.integers(1, 4))
        inst_seed = int(rng.integers(0, 2**31))
        schedule = StageSchedule.uniform(num_stages, stage_duration=1.0)
        sampler = SamplerConfig(
            accel_grid=(-2.0, 0.0, 2.0),
            yaw_rate_grid=(-0.1, 0.0, 0.1),
            speed_grid=(),
            lateral_offsets=(),
            max_children=max_children,
        )
        root = AgentState(0.0, 0.0, float(rng.uniform(2.0, 10.0)), 0.0)
        tree = grow_tree(root, None, schedule, sampler, inst_seed)
        scene = random_scene(rng, int(rng.integers(1, 3)))
        predictor = KinematicPredictor(branching_factor=branching)
        try:
            predict_ensemble(predictor, scene, tree, schedule, branching, inst_seed)
        except CausalConsistencyViolation as exc:
            failures.append((i, str(exc)))
    return failures


# ---------------------------------------------------------------------------
# adversarial predictor: conditions on the whole candidate ego trajectory


@dataclass
class FuturePeekingPredictor(KinematicPredictor):
    """Breaks consistency on purpose: output depends on the ego path's end."""

    conditions_on_full_mode: bool = True

    def set_mode(self, mode: ECMode):
        self._mode_end = mode.ego_trajectory.end

    def predict_stage(self, history, ego_segment, stage, rng_key):
        hypotheses = super().predict_stage(history, ego_segment, stage, rng_key)
        # leak: shift every prediction by a function of the full ego future
        shift = 0.01 * self._mode_end.x
        out = []
        for trajs, prob in hypotheses:
            shifted = {
                aid: type(t)(
                    t0=t.t0,
                    dt=t.dt,
                    samples=tuple(
                        type(s)(s.x + shift, s.y, s.v, s.psi) for s in t.samples
                    ),
                )
                for aid, t in trajs.items()
            }
            out.append((shifted, prob))
        return out


def make_shared_prefix_tree(dt: float = 0.1) -> tuple:
    """Ego tree with one stage-1 node and two stage-2 children (2 modes)."""
    schedule = StageSchedule((0.0, 1.0, 1.0), dt)
    s0 = AgentState(0.0, 0.0, 5.0, 0.0)
    from .world import Trajectory

    root = TreeNode(id=0, stage=0, parent_id=None, segment=Trajectory(0.0, dt, (s0,)))
    s1 = AgentState(5.0, 0.0, 5.0, 0.0)
    sp1 = fit_spline(s0, s1, 1.0, dt)
    n1 = TreeNode(id=1, stage=1, parent_id=0, segment=spline_to_trajectory(sp1, s0, s1, dt, 0.0), spline=sp1)
    kids = []
    for k, term in enumerate(
        [AgentState(10.0, 0.0, 5.0, 0.0), AgentState(9.0, 1.5, 4.0, 0.3)]
    ):
        sp = fit_spline(s1, term, 1.0, dt)
        kids.append(
            TreeNode(id=2 + k, stage=2, parent_id=1, segment=spline_to_trajectory(sp, s1, term, dt, 1.0), spline=sp)
        )
    tree = TrajectoryTree(nodes=(root, n1, *kids), schedule=schedule)
    return tree, schedule


def run_adversarial_consistency_case(seed: int = 3) -> bool:
    """True when the whole-future-peeking predictor is caught by validation."""
    tree, schedule = make_shared_prefix_tree()
    scene = Scene(agents={"a0": AgentState(12.0, 0.0, 4.0, 0.0)})
    predictor = FuturePeekingPredictor(branching_factor=2)
    try:
        predict_ensemble(predictor, scene, tree, schedule, 2, seed)
    except CausalConsistencyViolation as exc:
        return exc.stage <= 1
    return False


# ---------------------------------------------------------------------------
# spline residuals


def spline_residual(start: AgentState, terminal: AgentState, duration: float) -> float:
    """Max violation of the eight endpoint conditions of a fitted spline."""
    sp = fit_spline(start, terminal, duration)
    x0, y0 = sp.position(0.0)
    xT, yT = sp.position(duration)
    vx0, vy0 = sp.velocity(0.0)
    vxT, vyT = sp.velocity(duration)
    return max(
        abs(x0 - start.x),
        abs(y0 - start.y),
        abs(xT - terminal.x),
        abs(yT - terminal.y),
        abs(vx0 - start.v * math.cos(start.psi)),
        abs(vy0 - start.v * math.sin(start.psi)),
        abs(vxT - terminal.v * math.cos(terminal.psi)),
        abs(vyT - terminal.v * math.sin(terminal.psi)),
    )


def run_spline_suite(n_pairs: int = 1000, seed: int = 4, tol: float = 1e-9):
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_pairs):
        start = AgentState(
            float(rng.uniform(-50, 50)),
            float(rng.uniform(-50, 50)),
            float(rng.uniform(0, 20)),
            float(rng.uniform(-math.pi, math.pi)),
        )
        terminal = AgentState(
            float(rng.uniform(-50, 50)),
            float(rng.uniform(-50, 50)),
            float(rng.uniform(0, 20)),
            float(rng.uniform(-math.pi, math.pi)),
        )
        duration = float(rng.uniform(0.5, 4.0))
        worst = max(worst, spline_residual(start, terminal, duration))
    return worst if worst >= tol else None, worst
