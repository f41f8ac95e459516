"""Fixed-step closed-loop simulation of the expert policy.

One frame, in order: scripted agents choose their actions, the ego runs the
hazard checks, lead-vehicle relation and chain-of-thought resolution, plans
waypoints and computes PID commands; then every actor advances by one 50 ms
bicycle step and infractions are checked on the synchronized new state.
Every 10th frame (2 Hz) the decision inputs and outputs are logged.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from . import kernels
from .ahead_relation import AheadState, ahead_decision, observe_ahead
from .config import DT, LOG_EVERY, PolicyConfig, mps_to_kmh
from .control import PIDController, lateral_control, longitudinal_control
from .cot_policy import CoTAspects, CoTRecord, render_reason, resolve
from .hazards import check_collision_hazard, find_light_stop_hazards, make_safety_box
from .kinematics import BicycleParams, actuate, bicycle_step
from .waypoints import DenseRoute, PlannedPath, densify_route, plan_waypoints, world_to_local
from .world import (
    AgentScript,
    AgentState,
    Behavior,
    ConstantAction,
    EgoState,
    Pose2D,
    ScenarioSpec,
    Triggered,
    WaypointFollow,
    normalize_yaw,
)

BLOCKED_AFTER_S = 30.0
BLOCKED_PROGRESS_M = 0.1
COLLISION_DEDUP_S = 2.0
DEVIATION_M = 5.0
STOPPED_MPS = 0.1
TURN_LOOKAHEAD_M = 30.0
LANE_CHANGE_LOOKAHEAD_M = 20.0

INFRACTION_KINDS = ("collision_vehicle", "collision_pedestrian", "red_light", "stop_sign", "route_deviation")


@dataclass
class SimClock:
    frame: int = 0

    @property
    def sim_time(self) -> float:
        return self.frame * DT

    @property
    def is_log_frame(self) -> bool:
        return self.frame % LOG_EVERY == 0

    def tick(self):
        self.frame += 1


@dataclass(frozen=True)
class InfractionEvent:
    frame: int
    kind: str
    agent_id: Optional[str] = None


@dataclass
class InfractionLog:
    events: list[InfractionEvent] = field(default_factory=list)

    def add(self, frame: int, kind: str, agent_id: Optional[str] = None):
        if kind not in INFRACTION_KINDS:
            raise ValueError(f"unknown infraction kind {kind!r}")
        if self.events and frame < self.events[-1].frame:
            raise ValueError("infraction frames must be non-decreasing")
        self.events.append(InfractionEvent(frame, kind, agent_id))

    def count(self, kind: str) -> int:
        return sum(e.kind == kind for e in self.events)

    @property
    def collisions(self) -> int:
        return self.count("collision_vehicle") + self.count("collision_pedestrian")


@dataclass
class RunResult:
    scenario_id: str
    frames: list[dict]
    infractions: InfractionLog
    completed_arc: float
    total_arc: float
    terminated_by: str
    sim_frames: int

    def to_jsonl(self) -> str:
        return "".join(json.dumps(rec) + "\n" for rec in self.frames)

    def summary(self) -> dict:
        return {
            "scenario_id": self.scenario_id,
            "completed_arc": round(self.completed_arc, 6),
            "total_arc": round(self.total_arc, 6),
            "terminated_by": self.terminated_by,
            "sim_frames": self.sim_frames,
            "records": len(self.frames),
            "infractions": [asdict(e) for e in self.infractions.events],
        }


# --- scripted agents ----------------------------------------------------------


class _Path:
    """Unit-spaced polyline for pure-pursuit tracking."""

    def __init__(self, points):
        pts = [tuple(map(float, p)) for p in points]
        self.target_only = len(pts) < 2 or all(math.dist(pts[0], p) == 0 for p in pts[1:])
        if self.target_only:
            self.xy = np.array([pts[-1], pts[-1]])
            self.length = 0.0
        else:
            from .world import with_arc_lengths
            clean = [pts[0]] + [p for a, p in zip(pts, pts[1:]) if math.dist(a, p) > 0]
            n = len(clean)
            dense = densify_route(with_arc_lengths(clean, ["normal"] * n, ["0"] * n, ["0"] * n))
            if len(dense) < 2:
                dense = with_arc_lengths([clean[0], clean[-1]], ["normal"] * 2, ["0"] * 2, ["0"] * 2)
            self.xy = np.ascontiguousarray([w.position for w in dense])
            self.length = float(len(dense) - 1)


@dataclass
class AgentRuntime:
    state: AgentState
    behavior: Behavior
    path: Optional[_Path] = None
    path_s: float = 0.0

    @classmethod
    def from_script(cls, script: AgentScript) -> "AgentRuntime":
        rt = cls(script.initial, script.behavior)
        rt._prepare()
        return rt

    def _prepare(self):
        if isinstance(self.behavior, WaypointFollow):
            self.path = _Path(self.behavior.path)
            p = self.state.pose
            self.path_s = 0.0 if self.path.target_only else kernels.project_on_route(
                self.path.xy, p.x, p.y, 0.0, len(self.path.xy))


def _pursue(rt: AgentRuntime, params: BicycleParams) -> AgentState:
    """Set steer/accel (vehicles) or heading/speed (pedestrians) toward the path."""
    b = rt.behavior
    st = rt.state
    p = st.pose
    path = rt.path
    if path.target_only:
        tx, ty = path.xy[-1]
        remaining = math.hypot(tx - p.x, ty - p.y)
    else:
        rt.path_s = kernels.project_on_route(path.xy, p.x, p.y, rt.path_s, 10)
        remaining = path.length - rt.path_s
        lookahead = max(3.0, 0.8 * st.speed)
        tx, ty = kernels.point_at_arc(path.xy, min(rt.path_s + lookahead, path.length))
    done = remaining < 0.5
    if st.kind == "pedestrian":
        if done:
            return replace(st, speed=0.0, accel=0.0)
        yaw = math.atan2(ty - p.y, tx - p.x)
        return replace(st, pose=Pose2D(p.x, p.y, yaw), speed=b.speed, accel=0.0)
    target_speed = 0.0 if done else b.speed
    accel = min(max(2.0 * (target_speed - st.speed), -6.0), 3.0)
    dx, dy = tx - p.x, ty - p.y
    ld = math.hypot(dx, dy)
    steer = 0.0
    if ld > 1e-6 and not done:
        alpha = normalize_yaw(math.atan2(dy, dx) - p.yaw)
        steer = math.atan2(2.0 * params.wheelbase * math.sin(alpha), ld)
    return replace(st, steer=steer, accel=accel)


def step_scripts(runtimes: Sequence[AgentRuntime], ego: EgoState,
                 params: BicycleParams = BicycleParams()) -> list[AgentState]:
    """Resolve triggers and choose each agent's action for this frame.

    Returns the agent states (positions unchanged) carrying the chosen action.
    """
    out = []
    for rt in runtimes:
        while isinstance(rt.behavior, Triggered):
            b = rt.behavior
            d = math.hypot(rt.state.pose.x - ego.pose.x, rt.state.pose.y - ego.pose.y)
            if d > b.trigger_distance:
                break
            rt.behavior = b.then
            rt._prepare()
        if isinstance(rt.behavior, WaypointFollow):
            rt.state = _pursue(rt, params)
        out.append(rt.state)
    return out


def advance_agents(runtimes: Sequence[AgentRuntime], params: BicycleParams = BicycleParams()):
    for rt in runtimes:
        rt.state = bicycle_step(rt.state, params)


# --- road context ---------------------------------------------------------------


def road_context(route: DenseRoute, s: float) -> tuple[str, bool]:
    """Navigation command and whether the ego is inside a junction."""
    i = route.index_at(s)
    sem = route.semantics
    in_junction = sem[i] in ("junction", "turn")
    n = len(route)

    def run_from(kind, horizon):
        j = next((k for k in range(i, min(n, i + int(horizon) + 1)) if sem[k] == kind), None)
        if j is None:
            return None
        k = j
        while k + 1 < n and sem[k + 1] == kind:
            k += 1
        return j, k

    turn = run_from("turn", TURN_LOOKAHEAD_M)
    if turn is not None:
        j, k = turn
        before = route.heading_at(max(j - 1, 0))
        after = route.heading_at(min(k + 1, n - 2))
        delta = normalize_yaw(after - before)
        if abs(delta) > math.radians(10):
            return ("turn_left" if delta > 0 else "turn_right"), in_junction
    change = run_from("lane_change", LANE_CHANGE_LOOKAHEAD_M)
    if change is not None:
        j, k = change
        h = route.heading_at(max(j - 1, 0))
        d = route.xy[min(k + 1, n - 1)] - route.xy[j]
        cross = math.cos(h) * d[1] - math.sin(h) * d[0]
        return ("lane_change_left" if cross > 0 else "lane_change_right"), in_junction
    return ("straight" if in_junction else "follow"), in_junction


# --- frame records ----------------------------------------------------------------


def _r(x: Optional[float], nd: int = 6):
    if x is None or not math.isfinite(x):
        return None
    return round(float(x), nd) + 0.0


def frame_record(spec: ScenarioSpec, clock: SimClock, ego: EgoState, agents: Sequence[AgentState],
                 record: CoTRecord, plan: PlannedPath, target_point, reason: str) -> dict:
    a = record.aspects
    ahead = a.ahead
    return {
        "scenario_id": spec.scenario_id,
        "frame": clock.frame,
        "sim_time_s": _r(clock.sim_time),
        "ego": {
            "x": _r(ego.pose.x), "y": _r(ego.pose.y), "yaw": _r(ego.pose.yaw),
            "speed_kmh": _r(ego.speed_kmh), "lane_id": ego.lane_id, "road_id": ego.road_id,
            "half_length": ego.extents[0], "half_width": ego.extents[1],
        },
        "agents": [
            {"id": ag.id, "kind": ag.kind, "x": _r(ag.pose.x), "y": _r(ag.pose.y), "yaw": _r(ag.pose.yaw),
             "speed_kmh": _r(mps_to_kmh(ag.speed)), "half_length": ag.extents[0], "half_width": ag.extents[1]}
            for ag in agents
        ],
        "cot": {
            "light_hazard": a.light_hazard,
            "stop_hazard": a.stop_hazard,
            "collision_hazard": a.collision_hazard,
            "is_junction": a.is_junction,
            "nav_is_turn": a.nav_is_turn,
            "ahead": {
                "exists": ahead.exists,
                "agent_id": ahead.agent_id,
                "distance_m": _r(ahead.distance),
                "rel_speed_mps": _r(ahead.rel_speed),
                "ttc_s": _r(ahead.ttc),
                "ahead_speed_kmh": _r(ahead.ahead_speed_kmh),
                "decision": a.ahead_decision.name,
            },
            "final_decision": record.final.value,
            "target_speed_kmh": _r(record.target_speed),
            "reason": reason,
            "labels": record.labels,
        },
        "waypoints": [[_r(x), _r(y)] for x, y in plan.waypoints],
        "target_point": [_r(target_point[0]), _r(target_point[1])],
        "nav_command": ego.nav_command,
        "route_type": plan.route_type,
        "speed_limit_kmh": _r(a.speed_limit),
    }


# --- main loop ----------------------------------------------------------------------


class InfractionChecker:
    """Collision, red-light, stop-sign and route-deviation events for one run."""

    def __init__(self, spec: ScenarioSpec, route: DenseRoute):
        self.log = InfractionLog()
        self.contact: dict[str, bool] = {}
        self.last_event: dict[str, int] = {}
        self.deviating = False
        self.lines = []
        lanes_on_route = set(route.lanes)
        for vol in spec.trigger_volumes:
            if not vol.affected_lanes & lanes_on_route:
                continue
            # the stop line is the far edge of the trigger volume along the route
            s_mid = route.project(vol.box.center.x, vol.box.center.y, 0.0, len(route))
            s_line = max(route.project(x, y, max(s_mid - 20.0, 0.0), 40) for x, y in vol.box.corners())
            if vol.affected_lanes & route.lanes_between(s_mid - 1, s_mid + 1):
                self.lines.append((vol, s_line))

    def check(self, frame: int, ego: EgoState, agents: Sequence[AgentState], route: DenseRoute,
              s_front_prev: float, s_front: float, s_ego: float, t: float, served: set):
        dedup = int(round(COLLISION_DEDUP_S / DT))
        if agents:
            rows = np.array([ag.box.as_row() for ag in agents])
            ego_rows = np.repeat(np.array([ego.box.as_row()]), len(agents), axis=0)
            hits = kernels.overlap_rows(ego_rows, rows)
        else:
            hits = []
        for ag, hit in zip(agents, hits):
            was = self.contact.get(ag.id, False)
            if hit and not was:
                last = self.last_event.get(ag.id)
                if last is None or frame - last >= dedup:
                    self.log.add(frame, f"collision_{ag.kind}", ag.id)
                    self.last_event[ag.id] = frame
            self.contact[ag.id] = bool(hit)
        for vol, s_line in self.lines:
            if s_front_prev < s_line <= s_front:
                if vol.kind == "traffic_light" and vol.state_at(t) == "red":
                    self.log.add(frame, "red_light", vol.id)
                elif vol.kind == "stop_sign" and vol.id not in served:
                    self.log.add(frame, "stop_sign", vol.id)
        off = abs(route.lateral_offset(ego.pose.x, ego.pose.y, s_ego)) > DEVIATION_M
        if off and not self.deviating:
            self.log.add(frame, "route_deviation")
        self.deviating = off


def _target_point(spec: ScenarioSpec, s_ego: float, ego: EgoState) -> np.ndarray:
    for w in spec.route:
        if w.arc_length > s_ego + 1.0:
            pt = w.position
            break
    else:
        pt = spec.route[-1].position
    return world_to_local([pt], ego.pose.x, ego.pose.y, ego.pose.yaw)[0]


def run_scenario(spec: ScenarioSpec, seed: int = 0, config: Optional[PolicyConfig] = None) -> RunResult:
    """Simulate ``spec`` until the duration cap, route completion or blockage."""
    cfg = config or spec.policy_config()
    vehicle = cfg.vehicle
    params = BicycleParams.from_vehicle(vehicle)
    route = DenseRoute.from_sparse(spec.route)
    total_arc = min(route.project(*spec.trigger_point, 0.0, len(route)), route.length)
    if total_arc <= 0:
        total_arc = route.length

    start = route.xy[0]
    ego = EgoState.from_kmh(Pose2D(float(start[0]), float(start[1]), route.heading_at(0.0)),
                            spec.ego_speed_kmh, extents=spec.ego_extents)
    lon = PIDController.from_gains(cfg.longitudinal)
    lat = PIDController.from_gains(cfg.lateral)
    ahead_state = AheadState(band=cfg.ahead.band)
    dangerous: dict[str, int] = {}
    served: set = set()
    runtimes = [AgentRuntime.from_script(s) for s in spec.agent_scripts]
    infractions = InfractionChecker(spec, route)

    clock = SimClock()
    max_frames = int(round(spec.duration_cap_s / DT))
    blocked_frames = int(round(BLOCKED_AFTER_S / DT))
    records: list[dict] = []
    s_ego = 0.0
    progress_anchor = (0, 0.0)
    terminated_by = "duration_cap"

    while clock.frame < max_frames:
        t = clock.sim_time
        agents = step_scripts(runtimes, ego, params)

        s_ego = route.project(ego.pose.x, ego.pose.y, s_ego)
        nav, in_junction = road_context(route, s_ego)
        road_id, lane_id = route.lanes[route.index_at(s_ego)]
        ego = replace(ego, nav_command=nav, lane_id=lane_id, road_id=road_id)

        sbox = make_safety_box(ego, cfg.hazards.brake_decel)
        planned_lanes = route.lanes_between(s_ego, s_ego + ego.extents[0] + sbox.length + 10.0)
        light_id, stop_id = find_light_stop_hazards(sbox, spec.trigger_volumes, planned_lanes, t,
                                                    frozenset(served), cfg.hazards.yellow_is_red)
        if stop_id is not None and ego.speed < STOPPED_MPS:
            served.add(stop_id)

        obs = observe_ahead(ego, agents, route, s_ego, cfg.ahead)
        adec, ahead_state = ahead_decision(obs, ahead_state, spec.speed_limit, cfg.ahead, cfg.speeds)

        base = CoTAspects(
            light_hazard=light_id is not None, stop_hazard=stop_id is not None, collision_hazard=False,
            is_junction=in_junction, nav_is_turn=nav in ("turn_left", "turn_right"),
            ahead=obs, ahead_decision=adec, speed_limit=spec.speed_limit,
            light_id=light_id, stop_id=stop_id,
        )
        provisional = resolve(base, cfg.speeds)
        report = check_collision_hazard(ego, agents, route, s_ego, provisional.target_speed, lon, lat,
                                        dangerous, cfg.hazards, vehicle)
        dangerous = report.dangerous_agents
        if report.collision_hazard:
            other = next(ag for ag in agents if ag.id == report.colliding_agent)
            gap = float(kernels.min_distance_rows(np.array(ego.box.as_row()), np.array(other.box.as_row()))[0])
            aspects = replace(base, collision_hazard=True, colliding_agent=other.id, collision_distance=gap)
            record = resolve(aspects, cfg.speeds)
        else:
            record = provisional

        plan = plan_waypoints(ego, route, s_ego)
        throttle, brake = longitudinal_control(ego.speed_kmh, record.target_speed, lon)
        steer = lateral_control(ego, plan.first, lat)

        if clock.is_log_frame:
            reason = render_reason(record, seed * 100_003 + clock.frame)
            records.append(frame_record(spec, clock, ego, agents, record, plan,
                                        _target_point(spec, s_ego, ego), reason))

        advance_agents(runtimes, params)
        accel, wheel = actuate(throttle, brake, steer, vehicle)
        x, y, yaw, v = kernels.bicycle_update(ego.pose.x, ego.pose.y, ego.pose.yaw, ego.speed, wheel, accel,
                                              vehicle.wheelbase, vehicle.max_steer, vehicle.dt)
        s_front_prev = s_ego + ego.extents[0]
        ego = replace(ego, pose=Pose2D(x, y, yaw), speed=v)
        clock.tick()

        s_new = route.project(ego.pose.x, ego.pose.y, s_ego)
        infractions.check(clock.frame, ego, [rt.state for rt in runtimes], route,
                          s_front_prev, s_new + ego.extents[0], s_new, clock.sim_time, served)
        s_ego = s_new
        if s_ego >= total_arc - 0.5:
            terminated_by = "route_complete"
            break
        if s_ego - progress_anchor[1] >= BLOCKED_PROGRESS_M:
            progress_anchor = (clock.frame, s_ego)
        elif clock.frame - progress_anchor[0] >= blocked_frames:
            terminated_by = "blocked"
            break

    return RunResult(
        scenario_id=spec.scenario_id,
        frames=records,
        infractions=infractions.log,
        completed_arc=min(s_ego, total_arc),
        total_arc=total_arc,
        terminated_by=terminated_by,
        sim_frames=clock.frame,
    )
