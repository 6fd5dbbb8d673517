"""Scenario and planner configuration: JSON schemas, parsing, canonical output.

All files are JSON with a canonical writer (sorted keys, fixed separators) so
identical inputs produce byte-identical outputs.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

from .costs import CostWeights
from .errors import ScenarioError
from .sampler import SamplerConfig, StageSchedule
from .world import AgentState, DynamicsLimits, Footprint, Lane, LaneGraph


def canonical_dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def config_hash(obj) -> str:
    return hashlib.sha256(canonical_dumps(obj).encode()).hexdigest()[:16]


def _state_from(d: dict) -> AgentState:
    return AgentState(x=float(d["x"]), y=float(d["y"]), v=float(d["v"]), psi=float(d["psi"]))


def _state_to(s: AgentState) -> dict:
    return {"x": s.x, "y": s.y, "v": s.v, "psi": s.psi}


def _footprint_from(d: dict) -> Footprint:
    return Footprint(length=float(d["length"]), width=float(d["width"]))


@dataclass(frozen=True)
class AgentSpec:
    id: str
    state: AgentState
    footprint: Footprint
    behavior: dict = field(default_factory=dict)


@dataclass(frozen=True)
class ScenarioSpec:
    name: str
    lane_map: LaneGraph
    ego_state: AgentState
    ego_footprint: Footprint
    goal: tuple
    agents: tuple = ()
    raw: dict = field(default_factory=dict, compare=False)


def parse_scenario(doc: dict) -> ScenarioSpec:
    try:
        lanes = tuple(
            Lane(
                id=str(l["id"]),
                centerline=l["centerline"],
                speed_limit=float(l.get("speed_limit", 13.0)),
                successors=tuple(l.get("successors", ())),
            )
            for l in doc["map"]["lanes"]
        )
        lane_map = LaneGraph(lanes=lanes, drivable_area=tuple(doc["map"]["drivable_area"]))
        ego = doc["ego"]
        agents = []
        seen = set()
        for a in doc.get("agents", ()):
            aid = str(a["id"])
            if aid in seen:
                raise ScenarioError(f"duplicate agent id {aid}")
            seen.add(aid)
            agents.append(
                AgentSpec(
                    id=aid,
                    state=_state_from(a["state"]),
                    footprint=_footprint_from(a["footprint"]),
                    behavior=dict(a.get("behavior", {})),
                )
            )
        return ScenarioSpec(
            name=str(doc.get("name", "scenario")),
            lane_map=lane_map,
            ego_state=_state_from(ego["state"]),
            ego_footprint=_footprint_from(ego["footprint"]),
            goal=(float(ego["goal"][0]), float(ego["goal"][1])),
            agents=tuple(agents),
            raw=doc,
        )
    except ScenarioError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ScenarioError(f"invalid scenario: {exc}") from exc


def load_scenario(path) -> ScenarioSpec:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ScenarioError(f"cannot read scenario {path}: {exc}") from exc
    return parse_scenario(doc)


@dataclass(frozen=True)
class PredictorConfig:
    kind: str = "kinematic"
    branching_factor: int = 4
    maintain_prior: float = 0.7
    brake_prior: float = 0.3
    b_decel: float = 4.0
    tau_yield: float = 3.0
    yield_boost: float = 2.0


@dataclass(frozen=True)
class OUParams:
    theta: float = 0.5
    mu: float = 0.0
    sigma: float = 0.2


@dataclass(frozen=True)
class SpawnConfig:
    enabled: bool = False
    rate: float = 6.0  # agents per minute
    radius_min: float = 20.0
    radius_max: float = 50.0
    max_agents: int = 8


@dataclass(frozen=True)
class SimConfig:
    total_duration: float = 10.0
    sim_dt: float = 0.1
    replan_period: float = 2.0
    spawn: SpawnConfig = field(default_factory=SpawnConfig)
    ou: OUParams = field(default_factory=OUParams)
    seed: int = 0

    def __post_init__(self):
        if self.sim_dt <= 0:
            raise ValueError("sim_dt must be positive")
        steps = self.replan_period / self.sim_dt
        if abs(steps - round(steps)) > 1e-9:
            raise ValueError("replan_period must be a multiple of sim_dt")
        if self.spawn.radius_min >= self.spawn.radius_max:
            raise ValueError("spawn radius band must be increasing")


@dataclass(frozen=True)
class PlannerConfig:
    """Everything a closed-loop run needs besides the scenario."""

    sampler: SamplerConfig = field(default_factory=SamplerConfig)
    schedule: StageSchedule = field(default_factory=lambda: StageSchedule.uniform(2))
    predictor: PredictorConfig = field(default_factory=PredictorConfig)
    weights: CostWeights = field(default_factory=CostWeights)
    planner: str = "tpp"
    ncr_worst_case: bool = False
    sim: SimConfig = field(default_factory=SimConfig)
    seed: int = 0


def parse_planner_config(doc: dict) -> PlannerConfig:
    try:
        s = doc.get("sampler", {})
        limits = DynamicsLimits(**doc.get("limits", {}))
        sampler = SamplerConfig(
            accel_grid=tuple(s.get("accel_grid", SamplerConfig.accel_grid)),
            yaw_rate_grid=tuple(s.get("yaw_rate_grid", SamplerConfig.yaw_rate_grid)),
            speed_grid=tuple(s.get("speed_grid", SamplerConfig.speed_grid)),
            lateral_offsets=tuple(s.get("lateral_offsets", SamplerConfig.lateral_offsets)),
            max_children=int(s.get("max_children", SamplerConfig.max_children)),
            limits=limits,
        )
        sched = doc.get("schedule", {})
        schedule = StageSchedule.uniform(
            num_stages=int(sched.get("num_stages", 2)),
            stage_duration=float(sched.get("stage_duration", 2.0)),
            dt=float(sched.get("dt", 0.1)),
        )
        predictor = PredictorConfig(**doc.get("predictor", {}))
        w = doc.get("cost", {})
        weights = CostWeights(
            w_collision=float(w.get("w_collision", CostWeights.w_collision)),
            w_lane=float(w.get("w_lane", CostWeights.w_lane)),
            w_goal=float(w.get("w_goal", CostWeights.w_goal)),
            w_comfort=float(w.get("w_comfort", CostWeights.w_comfort)),
            collision_scale=float(w.get("collision_scale", CostWeights.collision_scale)),
        )
        sim_doc = dict(doc.get("sim", {}))
        spawn = SpawnConfig(**sim_doc.pop("spawn", {}))
        ou = OUParams(**sim_doc.pop("ou", {}))
        seed = int(doc.get("seed", 0))
        sim = SimConfig(spawn=spawn, ou=ou, seed=seed, **sim_doc)
        return PlannerConfig(
            sampler=sampler,
            schedule=schedule,
            predictor=predictor,
            weights=weights,
            planner=str(doc.get("planner", "tpp")),
            ncr_worst_case=bool(doc.get("ncr_worst_case", False)),
            sim=sim,
            seed=seed,
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ScenarioError(f"invalid planner config: {exc}") from exc


def load_planner_config(path) -> PlannerConfig:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ScenarioError(f"cannot read config {path}: {exc}") from exc
    return parse_planner_config(doc)


def scenario_to_dict(spec: ScenarioSpec) -> dict:
    return {
        "name": spec.name,
        "map": {
            "lanes": [
                {
                    "id": lane.id,
                    "centerline": [[float(x), float(y)] for x, y in lane.centerline],
                    "speed_limit": lane.speed_limit,
                    "successors": list(lane.successors),
                }
                for lane in spec.lane_map.lanes
            ],
            "drivable_area": [
                [[float(x), float(y)] for x, y in poly] for poly in spec.lane_map.drivable_area
            ],
        },
        "ego": {
            "state": _state_to(spec.ego_state),
            "footprint": {"length": spec.ego_footprint.length, "width": spec.ego_footprint.width},
            "goal": [spec.goal[0], spec.goal[1]],
        },
        "agents": [
            {
                "id": a.id,
                "state": _state_to(a.state),
                "footprint": {"length": a.footprint.length, "width": a.footprint.width},
                "behavior": a.behavior,
            }
            for a in spec.agents
        ],
    }
