"""Ego-conditioned, multi-stage, scene-centric scenario trees.

A predictor expands one stage at a time given the agents' concatenated
histories and the ego's conditioned motion through that stage. Flattening the
ego tree yields the conditioning modes; per mode, a scenario tree is built
with rng keys derived from the shared ego prefix so that modes agreeing
through stage i produce identical trees through stage i (causal consistency).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import CausalConsistencyViolation, PredictorFailure
from .sampler import StageSchedule, TrajectoryTree
from .world import (
    AgentState,
    Footprint,
    LaneGraph,
    Trajectory,
    concat_trajectories,
    project_to_lane,
    lane_point_at,
    lane_points_at_batch,
)


@dataclass(frozen=True)
class Scene:
    """Initial multi-agent scene: current states, footprints, optional map."""

    agents: dict  # agent_id -> AgentState
    footprints: dict = field(default_factory=dict)  # agent_id -> Footprint
    lane_map: LaneGraph | None = None

    def initial_history(self, dt: float) -> dict:
        return {
            aid: Trajectory(t0=0.0, dt=dt, samples=(state,))
            for aid, state in sorted(self.agents.items())
        }


@dataclass(frozen=True)
class ScenarioNode:
    """One joint hypothesis for all agents over a stage interval.

    `path` is the tuple of child indices from the root; the root path is ().
    """

    path: tuple
    stage: int
    agent_trajectories: dict  # agent_id -> Trajectory
    branch_probability: float

    @property
    def parent_path(self):
        return self.path[:-1] if self.path else None


@dataclass(frozen=True)
class ScenarioTree:
    nodes: dict  # path -> ScenarioNode
    schedule: StageSchedule

    @property
    def root(self) -> ScenarioNode:
        return self.nodes[()]

    def children(self, path: tuple) -> list:
        out = []
        j = 0
        while path + (j,) in self.nodes:
            out.append(self.nodes[path + (j,)])
            j += 1
        return out

    def stage_nodes(self, stage: int) -> list:
        return sorted(
            (n for n in self.nodes.values() if n.stage == stage), key=lambda n: n.path
        )

    @property
    def max_stage(self) -> int:
        return max(n.stage for n in self.nodes.values())

    def leaf_paths_with_probability(self) -> list:
        """(path, probability) for every root-to-leaf path."""
        out = []

        def walk(path, prob):
            kids = self.children(path)
            if not kids:
                out.append((path, prob))
                return
            for child in kids:
                walk(child.path, prob * child.branch_probability)

        walk((), 1.0)
        return out

    def validate(self):
        for node in self.nodes.values():
            kids = self.children(node.path)
            if kids:
                total = sum(k.branch_probability for k in kids)
                if abs(total - 1.0) > 1e-9:
                    raise ValueError(f"children probabilities at {node.path} sum to {total}")
                agents = set(node.agent_trajectories)
                for k in kids:
                    if not agents <= set(k.agent_trajectories):
                        raise ValueError(f"agent disappears below {node.path}")
        if abs(self.root.branch_probability - 1.0) > 1e-12:
            raise ValueError("root probability must be 1")


@dataclass(frozen=True)
class ECMode:
    """One flattened root-to-leaf ego path used as a conditioning mode."""

    mode_id: int
    ego_path: tuple  # ego node ids, root first
    ego_trajectory: Trajectory


def flatten_ec_modes(tree: TrajectoryTree) -> list:
    """One conditioning mode per root-to-leaf path, in depth-first order."""
    modes = []

    def walk(node_id, ids):
        kids = tree.children(node_id)
        if not kids:
            segs = [tree.node(i).segment for i in ids]
            modes.append(
                ECMode(
                    mode_id=len(modes),
                    ego_path=tuple(ids),
                    ego_trajectory=concat_trajectories(segs),
                )
            )
            return
        for child in kids:
            walk(child, ids + [child])

    walk(tree.root_id, [tree.root_id])
    return modes


def slice_stage(traj: Trajectory, schedule: StageSchedule, stage: int) -> Trajectory:
    """The stage-i portion of a full-horizon trajectory."""
    start = schedule.stage_start(stage)
    dur = schedule.stage_durations[stage]
    k0 = int(round((start - traj.t0) / traj.dt))
    k1 = k0 + int(round(dur / traj.dt))
    return Trajectory(t0=start, dt=traj.dt, samples=traj.samples[k0 : k1 + 1])


def _rng_key(seed: int, stage: int, scen_path: tuple, ego_prefix: tuple) -> int:
    # shared among all EC modes with the same ego prefix through this stage
    ss = np.random.SeedSequence(
        entropy=int(seed), spawn_key=(stage,) + tuple(scen_path) + tuple(ego_prefix)
    )
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def predict_scenario_tree(
    predictor,
    scene: Scene,
    mode: ECMode,
    schedule: StageSchedule,
    branching_factor: int,
    seed: int,
) -> ScenarioTree:
    """Stage-by-stage scenario tree conditioned on one ego mode.

    Each node's expansion sees only the agents' concatenated histories and
    the ego motion through the current stage, never the ego's later stages.
    """
    if branching_factor < 1:
        raise ValueError("branching_factor must be >= 1")
    dt = schedule.dt
    base_history = scene.initial_history(dt)
    root = ScenarioNode(
        path=(),
        stage=0,
        agent_trajectories=base_history,
        branch_probability=1.0,
    )
    nodes = {(): root}
    frontier = [root]
    n_stages = min(schedule.num_stages, _mode_stage_count(mode, schedule))
    for stage in range(1, n_stages + 1):
        ego_seg = slice_stage(mode.ego_trajectory, schedule, stage)
        ego_prefix = mode.ego_path[: stage + 1]
        new_frontier = []
        for node in frontier:
            history = _accumulate_history(base_history, nodes, node.path)
            key = _rng_key(seed, stage, node.path, ego_prefix)
            try:
                hypotheses = predictor.predict_stage(history, ego_seg, stage, key)
            except Exception as exc:  # noqa: BLE001 - context re-raise
                raise PredictorFailure(stage, node.path, exc) from exc
            if len(hypotheses) > branching_factor:
                raise PredictorFailure(
                    stage, node.path, f"{len(hypotheses)} modes exceed branching factor"
                )
            for j, (trajs, prob) in enumerate(hypotheses):
                child = ScenarioNode(
                    path=node.path + (j,),
                    stage=stage,
                    agent_trajectories=dict(trajs),
                    branch_probability=float(prob),
                )
                nodes[child.path] = child
                new_frontier.append(child)
        frontier = new_frontier
    tree = ScenarioTree(nodes=nodes, schedule=schedule)
    tree.validate()
    return tree


def _mode_stage_count(mode: ECMode, schedule: StageSchedule) -> int:
    return len(mode.ego_path) - 1


def _accumulate_history(base_history: dict, nodes: dict, path: tuple) -> dict:
    """Original history extended by the predictions along the node's ancestry."""
    chain = [nodes[path[:k]] for k in range(1, len(path) + 1)]
    out = {}
    for aid, hist in base_history.items():
        parts = [hist] + [n.agent_trajectories[aid] for n in chain if aid in n.agent_trajectories]
        out[aid] = concat_trajectories(parts)
    return out


@dataclass(frozen=True)
class ECPredictionEnsemble:
    modes: tuple
    trees: dict  # mode_id -> ScenarioTree

    def __post_init__(self):
        object.__setattr__(self, "modes", tuple(self.modes))

    def mode_for_ego_node(self, ego_node_id: int) -> ECMode:
        """Lexicographically-first mode whose ego path passes through the node.

        Causal consistency makes the choice immaterial for any stage at or
        before the node's stage.
        """
        for mode in self.modes:
            if ego_node_id in mode.ego_path:
                return mode
        raise KeyError(ego_node_id)

    def tree_for_ego_node(self, ego_node_id: int) -> ScenarioTree:
        return self.trees[self.mode_for_ego_node(ego_node_id).mode_id]


def _common_prefix_stage(path_a: tuple, path_b: tuple) -> int:
    k = 0
    for a, b in zip(path_a, path_b):
        if a != b:
            break
        k += 1
    return k - 1  # stage index of the last shared ego node


def _trajectories_equal(ta: dict, tb: dict) -> bool:
    if set(ta) != set(tb):
        return False
    for aid in ta:
        a, b = ta[aid], tb[aid]
        if len(a.samples) != len(b.samples):
            return False
        for sa, sb in zip(a.samples, b.samples):
            if sa.as_array().tolist() != sb.as_array().tolist():
                return False
    return True


def validate_causal_consistency(ensemble: ECPredictionEnsemble):
    """Def.-style check: shared ego prefixes imply identical tree prefixes.

    Raises CausalConsistencyViolation naming the earliest (mode pair, stage)
    mismatch.
    """
    modes = ensemble.modes
    for i in range(len(modes)):
        for j in range(i + 1, len(modes)):
            stage = _common_prefix_stage(modes[i].ego_path, modes[j].ego_path)
            if stage < 0:
                continue
            ta = ensemble.trees[modes[i].mode_id]
            tb = ensemble.trees[modes[j].mode_id]
            for s in range(stage + 1):
                na = {n.path: n for n in ta.stage_nodes(s)}
                nb = {n.path: n for n in tb.stage_nodes(s)}
                if set(na) != set(nb):
                    raise CausalConsistencyViolation(i, j, s, "node structure differs")
                for path in sorted(na):
                    a, b = na[path], nb[path]
                    if a.branch_probability != b.branch_probability:
                        raise CausalConsistencyViolation(
                            i, j, s, f"probability differs at {path}"
                        )
                    if not _trajectories_equal(a.agent_trajectories, b.agent_trajectories):
                        raise CausalConsistencyViolation(
                            i, j, s, f"trajectories differ at {path}"
                        )


def predict_ensemble(
    predictor,
    scene: Scene,
    tree: TrajectoryTree,
    schedule: StageSchedule,
    branching_factor: int,
    seed: int,
    validate: bool = True,
) -> ECPredictionEnsemble:
    """Flatten the ego tree, predict per mode, and validate consistency."""
    modes = flatten_ec_modes(tree)
    trees = {}
    # modes are independent given the rng keying and may run concurrently
    for mode in modes:
        if getattr(predictor, "conditions_on_full_mode", False):
            predictor.set_mode(mode)
        trees[mode.mode_id] = predict_scenario_tree(
            predictor, scene, mode, schedule, branching_factor, seed
        )
    ensemble = ECPredictionEnsemble(modes=tuple(modes), trees=trees)
    if validate:
        validate_causal_consistency(ensemble)
    return ensemble


# ---------------------------------------------------------------------------
# kinematic baseline predictor


@dataclass
class KinematicPredictor:
    """Two per-agent hypotheses: maintain speed, or brake to a stop.

    Agents follow their nearest lane centerline when a map is given, a
    straight line otherwise. Joint scene modes are the per-agent product
    truncated to the most probable branching_factor combinations and
    renormalized. When the conditioned ego motion crosses in front of an
    agent within tau_yield, that agent's brake prior is boosted.
    """

    lane_map: LaneGraph | None = None
    branching_factor: int = 4
    maintain_prior: float = 0.7
    brake_prior: float = 0.3
    b_decel: float = 4.0
    tau_yield: float = 3.0
    yield_boost: float = 2.0
    yield_lateral: float = 2.0

    def predict_stage(self, history: dict, ego_segment: Trajectory, stage: int, rng_key: int):
        del stage, rng_key  # deterministic model
        duration = ego_segment.duration
        dt = ego_segment.dt
        per_agent = []
        for aid in sorted(history):
            state = history[aid].end
            maintain = _advance_agent(state, 0.0, duration, dt, ego_segment.t0, self.lane_map)
            brake = _advance_agent(state, -self.b_decel, duration, dt, ego_segment.t0, self.lane_map)
            p_brake = self.brake_prior
            if _ego_crosses_in_front(ego_segment, state, self.tau_yield, self.yield_lateral):
                p_brake *= self.yield_boost
            p_maintain = self.maintain_prior
            total = p_maintain + p_brake
            per_agent.append(
                (aid, [("maintain", maintain, p_maintain / total), ("brake", brake, p_brake / total)])
            )

        if not per_agent:
            return [({}, 1.0)]

        joint = [({}, 1.0, ())]
        for aid, hyps in per_agent:
            joint = [
                ({**trajs, aid: traj}, p * hp, names + (name,))
                for trajs, p, names in joint
                for name, traj, hp in hyps
            ]
        # deterministic: by descending probability, then lexicographic label
        joint.sort(key=lambda item: (-item[1], item[2]))
        joint = joint[: self.branching_factor]
        total = sum(p for _, p, _ in joint)
        return [(trajs, p / total) for trajs, p, _ in joint]


def _advance_agent(
    state: AgentState,
    accel: float,
    duration: float,
    dt: float,
    t0: float,
    lane_map: LaneGraph | None,
) -> Trajectory:
    """Constant-acceleration advance along heading or the nearest centerline."""
    n = int(round(duration / dt))
    lane = lane_map.nearest_lane(state.x, state.y) if lane_map else None
    vs = np.maximum(0.0, state.v + accel * dt * np.arange(n + 1))
    s = np.concatenate([[0.0], np.cumsum(0.5 * (vs[:-1] + vs[1:]) * dt)])
    if lane is not None:
        arc0, lat, _ = project_to_lane((state.x, state.y), lane.centerline)
        px, py, heading = lane_points_at_batch(lane.centerline, arc0 + s)
        xs = px - lat * np.sin(heading)
        ys = py + lat * np.cos(heading)
        samples = [state] + [
            AgentState(xs[k], ys[k], vs[k], heading[k]) for k in range(1, n + 1)
        ]
    else:
        samples = [state] + [
            AgentState(
                state.x + s[k] * math.cos(state.psi),
                state.y + s[k] * math.sin(state.psi),
                vs[k],
                state.psi,
            )
            for k in range(1, n + 1)
        ]
    return Trajectory(t0=t0, dt=dt, samples=tuple(samples))


def _ego_crosses_in_front(
    ego_segment: Trajectory, agent: AgentState, tau_yield: float, lateral_band: float
) -> bool:
    """True when some conditioned ego sample lies in the agent's near corridor."""
    reach = max(agent.v, 1.0) * tau_yield
    c, s = math.cos(agent.psi), math.sin(agent.psi)
    for sample in ego_segment.samples:
        dx, dy = sample.x - agent.x, sample.y - agent.y
        lon = dx * c + dy * s
        lat = -dx * s + dy * c
        if 0.0 < lon <= reach and abs(lat) <= lateral_band:
            return True
    return False
