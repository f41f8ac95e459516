"""World types and scenario-file ingestion.

Scenario files are TOML. Top-level keys::

    scenario_id, scenario_type, weather, time_of_day, speed_limit_kmh,
    duration_cap_s, trigger_point, route[], agents[], trigger_volumes[]

plus the optional tables ``[ego]`` (initial speed and body extents) and
``[config]`` (policy overrides, see :class:`cotdrive.config.PolicyConfig`).
The full schema is documented in ``docs/scenario_format.md``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Mapping, Sequence, Union

try:
    import tomllib
except ImportError:  # Python < 3.11
    import tomli as tomllib

import tomli_w

from .config import PolicyConfig, kmh_to_mps, mps_to_kmh

log = logging.getLogger(__name__)

SCENARIO_TYPES = (
    "signal_stop",
    "crossing_pedestrian",
    "lane_merge_cutin",
    "ahead_vehicle",
    "sharp_turn",
)
AGENT_KINDS = ("vehicle", "pedestrian")
SEMANTICS = ("normal", "junction", "turn", "lane_change", "target")
NAV_COMMANDS = ("follow", "turn_left", "turn_right", "lane_change_left", "lane_change_right", "straight")
VOLUME_KINDS = ("traffic_light", "stop_sign")
LIGHT_STATES = ("red", "yellow", "green", "none")

PEDESTRIAN_EXTENTS = (0.25, 0.25)
DEFAULT_EGO_EXTENTS = (2.45, 1.05)


class ScenarioError(ValueError):
    """A scenario file failed to parse or validate."""


def normalize_yaw(angle: float) -> float:
    """Wrap ``angle`` into (-pi, pi]."""
    if not math.isfinite(angle):
        raise ValueError(f"cannot normalize non-finite angle {angle!r}")
    two_pi = 2.0 * math.pi
    wrapped = math.fmod(angle, two_pi)
    if wrapped > math.pi:
        wrapped -= two_pi
    elif wrapped <= -math.pi:
        wrapped += two_pi
    return wrapped


@dataclass(frozen=True)
class Pose2D:
    x: float
    y: float
    yaw: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "yaw", normalize_yaw(float(self.yaw)))

    @property
    def heading(self) -> tuple[float, float]:
        return math.cos(self.yaw), math.sin(self.yaw)


@dataclass(frozen=True)
class OBB2D:
    center: Pose2D
    half_length: float
    half_width: float

    def __post_init__(self):
        if not (self.half_length > 0 and self.half_width > 0):
            raise ValueError("box half extents must be strictly positive")

    def as_row(self) -> tuple[float, float, float, float, float]:
        c = self.center
        return (c.x, c.y, c.yaw, self.half_length, self.half_width)

    def corners(self) -> list[tuple[float, float]]:
        c, s = math.cos(self.center.yaw), math.sin(self.center.yaw)
        out = []
        for sl, sw in ((1, 1), (1, -1), (-1, -1), (-1, 1)):
            dx, dy = sl * self.half_length, sw * self.half_width
            out.append((self.center.x + c * dx - s * dy, self.center.y + s * dx + c * dy))
        return out


@dataclass
class AgentState:
    id: str
    kind: str
    pose: Pose2D
    speed: float = 0.0  # m/s
    steer: float = 0.0  # rad
    accel: float = 0.0  # m/s^2
    extents: tuple[float, float] = (2.25, 0.95)
    lane_id: str = ""

    def __post_init__(self):
        if self.kind not in AGENT_KINDS:
            raise ValueError(f"unknown agent kind {self.kind!r}")
        if self.speed < 0:
            raise ValueError(f"agent {self.id}: speed must be >= 0")
        if self.kind == "pedestrian":
            self.steer = 0.0
        if not (self.extents[0] > 0 and self.extents[1] > 0):
            raise ValueError(f"agent {self.id}: extents must be positive")

    @property
    def box(self) -> OBB2D:
        return OBB2D(self.pose, *self.extents)


@dataclass
class EgoState:
    pose: Pose2D
    speed: float = 0.0  # m/s, canonical
    extents: tuple[float, float] = DEFAULT_EGO_EXTENTS
    lane_id: str = ""
    road_id: str = ""
    nav_command: str = "follow"

    def __post_init__(self):
        if self.speed < 0:
            raise ValueError("ego speed must be >= 0")
        if self.nav_command not in NAV_COMMANDS:
            raise ValueError(f"unknown nav command {self.nav_command!r}")

    @classmethod
    def from_kmh(cls, pose: Pose2D, speed_kmh: float, **kw) -> "EgoState":
        if speed_kmh < 0:
            raise ValueError("ego speed must be >= 0")
        return cls(pose, kmh_to_mps(speed_kmh), **kw)

    @property
    def speed_kmh(self) -> float:
        return mps_to_kmh(self.speed)

    @property
    def box(self) -> OBB2D:
        return OBB2D(self.pose, *self.extents)


@dataclass(frozen=True)
class RouteWaypoint:
    position: tuple[float, float]
    semantic: str = "normal"
    lane_id: str = "1"
    arc_length: float = 0.0
    road_id: str = "1"

    def __post_init__(self):
        if self.semantic not in SEMANTICS:
            raise ValueError(f"unknown waypoint semantic {self.semantic!r}")


@dataclass(frozen=True)
class TriggerVolume:
    id: str
    box: OBB2D
    kind: str
    affected_lanes: frozenset = frozenset()
    light_state: str = "none"
    # (time_s, state) switches applied in order; only for traffic lights
    schedule: tuple[tuple[float, str], ...] = ()

    def __post_init__(self):
        if self.kind not in VOLUME_KINDS:
            raise ValueError(f"unknown trigger volume kind {self.kind!r}")
        if self.light_state not in LIGHT_STATES:
            raise ValueError(f"unknown light state {self.light_state!r}")
        if (self.light_state == "none") != (self.kind == "stop_sign"):
            raise ValueError(f"volume {self.id}: light_state must be 'none' exactly for stop signs")
        for _, state in self.schedule:
            if state not in LIGHT_STATES or state == "none":
                raise ValueError(f"volume {self.id}: bad scheduled state {state!r}")

    def state_at(self, t: float) -> str:
        state = self.light_state
        for when, new_state in self.schedule:
            if t >= when:
                state = new_state
        return state


# --- agent behaviors -------------------------------------------------------


@dataclass(frozen=True)
class ConstantAction:
    pass


@dataclass(frozen=True)
class WaypointFollow:
    path: tuple[tuple[float, float], ...]
    speed: float  # m/s

    def __post_init__(self):
        if len(self.path) < 1:
            raise ValueError("waypoint_follow needs a non-empty path")
        if self.speed < 0:
            raise ValueError("waypoint_follow speed must be >= 0")


@dataclass(frozen=True)
class Triggered:
    trigger_distance: float
    then: "Behavior"

    def __post_init__(self):
        if not self.trigger_distance > 0:
            raise ValueError("trigger_distance must be > 0")


Behavior = Union[ConstantAction, WaypointFollow, Triggered]


@dataclass(frozen=True)
class AgentScript:
    initial: AgentState
    behavior: Behavior = ConstantAction()


@dataclass
class ScenarioSpec:
    scenario_id: str
    scenario_type: str
    weather: str
    time_of_day: str
    route: list[RouteWaypoint]
    speed_limit: float  # km/h
    agent_scripts: list[AgentScript]
    trigger_point: tuple[float, float]
    duration_cap_s: float = 20.0
    trigger_volumes: list[TriggerVolume] = field(default_factory=list)
    ego_speed_kmh: float = 0.0
    ego_extents: tuple[float, float] = DEFAULT_EGO_EXTENTS
    config: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.scenario_type not in SCENARIO_TYPES:
            raise ValueError(f"unknown scenario_type {self.scenario_type!r}; expected one of {SCENARIO_TYPES}")
        if len(self.route) < 2:
            raise ValueError("route must have at least 2 waypoints")
        if not self.duration_cap_s > 0:
            raise ValueError("duration_cap_s must be > 0")
        if not self.speed_limit > 0:
            raise ValueError("speed_limit_kmh must be > 0")
        arcs = [w.arc_length for w in self.route]
        if any(b <= a for a, b in zip(arcs, arcs[1:])):
            raise ValueError("route arc_length must be strictly increasing")
        ids = [s.initial.id for s in self.agent_scripts]
        if len(set(ids)) != len(ids):
            raise ValueError("agent ids must be unique")

    @property
    def lane_set(self) -> frozenset:
        return frozenset((w.road_id, w.lane_id) for w in self.route)

    def policy_config(self) -> PolicyConfig:
        return PolicyConfig.from_mapping(self.config)


# --- parsing ---------------------------------------------------------------

_TOP_KEYS = {
    "scenario_id", "scenario_type", "weather", "time_of_day", "speed_limit_kmh",
    "duration_cap_s", "trigger_point", "route", "agents", "trigger_volumes", "ego", "config",
}


def _req(d: Mapping, key: str, where: str):
    if key not in d:
        raise ScenarioError(f"{where}: missing required key {key!r}")
    return d[key]


def _num(d: Mapping, key: str, where: str, default=None) -> float:
    v = d.get(key, default) if default is not None else _req(d, key, where)
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
        raise ScenarioError(f"{where}.{key}: expected a finite number, got {v!r}")
    return float(v)


def _point(v, where: str) -> tuple[float, float]:
    if not (isinstance(v, (list, tuple)) and len(v) == 2):
        raise ScenarioError(f"{where}: expected [x, y]")
    try:
        return (float(v[0]), float(v[1]))
    except (TypeError, ValueError) as exc:
        raise ScenarioError(f"{where}: {exc}") from None


def with_arc_lengths(points: Sequence[tuple[float, float]], semantics, lane_ids, road_ids) -> list[RouteWaypoint]:
    out = []
    s = 0.0
    for i, p in enumerate(points):
        if i:
            s += math.dist(points[i - 1], p)
        out.append(RouteWaypoint(tuple(p), semantics[i], lane_ids[i], s, road_ids[i]))
    return out


def _parse_behavior(d: Mapping, where: str) -> Behavior:
    kind = d.get("type", "constant_action")
    if kind == "constant_action":
        return ConstantAction()
    if kind == "waypoint_follow":
        path = tuple(_point(p, f"{where}.path[{i}]") for i, p in enumerate(_req(d, "path", where)))
        return WaypointFollow(path, kmh_to_mps(_num(d, "speed_kmh", where)))
    if kind == "triggered":
        dist = _num(d, "trigger_distance", where)
        if dist <= 0:
            raise ScenarioError(f"{where}.trigger_distance: must be > 0")
        return Triggered(dist, _parse_behavior(_req(d, "then", where), f"{where}.then"))
    raise ScenarioError(f"{where}.type: unknown behavior {kind!r}")


def _parse_agent(d: Mapping, where: str) -> AgentScript:
    kind = d.get("kind", "vehicle")
    if kind == "pedestrian":
        default_ext = PEDESTRIAN_EXTENTS
    else:
        default_ext = (2.25, 0.95)
    state = AgentState(
        id=str(_req(d, "id", where)),
        kind=kind,
        pose=Pose2D(_num(d, "x", where), _num(d, "y", where), _num(d, "yaw", where, 0.0)),
        speed=kmh_to_mps(_num(d, "speed_kmh", where, 0.0)),
        steer=_num(d, "steer", where, 0.0),
        accel=_num(d, "accel", where, 0.0),
        extents=(_num(d, "half_length", where, default_ext[0]), _num(d, "half_width", where, default_ext[1])),
        lane_id=str(d.get("lane_id", "")),
    )
    return AgentScript(state, _parse_behavior(d.get("behavior", {}), f"{where}.behavior"))


def _parse_volume(d: Mapping, where: str) -> TriggerVolume:
    center = Pose2D(_num(d, "x", where), _num(d, "y", where), _num(d, "yaw", where, 0.0))
    lanes = frozenset((str(r), str(l)) for r, l in d.get("affected_lanes", []))
    schedule = tuple((float(t), str(s)) for t, s in d.get("schedule", []))
    kind = str(_req(d, "kind", where))
    return TriggerVolume(
        id=str(_req(d, "id", where)),
        box=OBB2D(center, _num(d, "half_length", where), _num(d, "half_width", where)),
        kind=kind,
        affected_lanes=lanes,
        light_state=str(d.get("light_state", "none" if kind == "stop_sign" else "red")),
        schedule=schedule,
    )


def scenario_from_dict(data: Mapping[str, Any]) -> ScenarioSpec:
    unknown = set(data) - _TOP_KEYS
    if unknown:
        raise ScenarioError(f"unknown top-level keys {sorted(unknown)}")
    try:
        route_raw = _req(data, "route", "scenario")
        if not isinstance(route_raw, list) or len(route_raw) < 2:
            raise ScenarioError("route: at least 2 waypoints required")
        pts = [_point((_num(w, "x", f"route[{i}]"), _num(w, "y", f"route[{i}]")), f"route[{i}]")
               for i, w in enumerate(route_raw)]
        for i in range(1, len(pts)):
            if math.dist(pts[i - 1], pts[i]) == 0:
                raise ScenarioError(f"route[{i}]: duplicate consecutive waypoint")
        route = with_arc_lengths(
            pts,
            [str(w.get("semantic", "normal")) for w in route_raw],
            [str(w.get("lane_id", "1")) for w in route_raw],
            [str(w.get("road_id", "1")) for w in route_raw],
        )
        agents = [_parse_agent(a, f"agents[{i}]") for i, a in enumerate(data.get("agents", []))]
        volumes = [_parse_volume(v, f"trigger_volumes[{i}]") for i, v in enumerate(data.get("trigger_volumes", []))]
        ego = data.get("ego", {})
        spec = ScenarioSpec(
            scenario_id=str(_req(data, "scenario_id", "scenario")),
            scenario_type=str(_req(data, "scenario_type", "scenario")),
            weather=str(data.get("weather", "clear")),
            time_of_day=str(data.get("time_of_day", "noon")),
            route=route,
            speed_limit=_num(data, "speed_limit_kmh", "scenario", 50.0),
            agent_scripts=agents,
            trigger_point=_point(data.get("trigger_point", pts[-1]), "trigger_point"),
            duration_cap_s=_num(data, "duration_cap_s", "scenario", 20.0),
            trigger_volumes=volumes,
            ego_speed_kmh=_num(ego, "speed_kmh", "ego", 0.0),
            ego_extents=(_num(ego, "half_length", "ego", DEFAULT_EGO_EXTENTS[0]),
                         _num(ego, "half_width", "ego", DEFAULT_EGO_EXTENTS[1])),
            config=dict(data.get("config", {})),
        )
        spec.policy_config()
    except ScenarioError:
        raise
    except (ValueError, TypeError) as exc:
        raise ScenarioError(f"validation failed: {exc}") from None
    if spec.ego_speed_kmh < 0:
        raise ScenarioError("ego.speed_kmh: must be >= 0")
    lanes = spec.lane_set
    for vol in spec.trigger_volumes:
        missing = vol.affected_lanes - lanes
        if missing:
            log.warning("trigger volume %s references lanes %s not on the route", vol.id, sorted(missing))
    return spec


def load_scenario(path: Union[str, Path]) -> ScenarioSpec:
    """Parse and validate a TOML scenario file."""
    path = Path(path)
    try:
        data = tomllib.loads(path.read_text())
    except tomllib.TOMLDecodeError as exc:
        raise ScenarioError(f"{path}: parse error: {exc}") from None
    try:
        return scenario_from_dict(data)
    except ScenarioError as exc:
        raise ScenarioError(f"{path}: {exc}") from None


# --- serialization ---------------------------------------------------------


def _behavior_dict(b: Behavior) -> dict:
    if isinstance(b, ConstantAction):
        return {"type": "constant_action"}
    if isinstance(b, WaypointFollow):
        return {"type": "waypoint_follow", "speed_kmh": mps_to_kmh(b.speed), "path": [list(p) for p in b.path]}
    return {"type": "triggered", "trigger_distance": b.trigger_distance, "then": _behavior_dict(b.then)}


def scenario_to_dict(spec: ScenarioSpec) -> dict:
    d: dict[str, Any] = {
        "scenario_id": spec.scenario_id,
        "scenario_type": spec.scenario_type,
        "weather": spec.weather,
        "time_of_day": spec.time_of_day,
        "speed_limit_kmh": spec.speed_limit,
        "duration_cap_s": spec.duration_cap_s,
        "trigger_point": list(spec.trigger_point),
        "ego": {
            "speed_kmh": spec.ego_speed_kmh,
            "half_length": spec.ego_extents[0],
            "half_width": spec.ego_extents[1],
        },
        "route": [
            {"x": w.position[0], "y": w.position[1], "semantic": w.semantic,
             "road_id": w.road_id, "lane_id": w.lane_id}
            for w in spec.route
        ],
        "agents": [],
        "trigger_volumes": [],
    }
    for script in spec.agent_scripts:
        a = script.initial
        d["agents"].append({
            "id": a.id, "kind": a.kind, "x": a.pose.x, "y": a.pose.y, "yaw": a.pose.yaw,
            "speed_kmh": mps_to_kmh(a.speed), "steer": a.steer, "accel": a.accel,
            "half_length": a.extents[0], "half_width": a.extents[1], "lane_id": a.lane_id,
            "behavior": _behavior_dict(script.behavior),
        })
    for v in spec.trigger_volumes:
        c = v.box.center
        d["trigger_volumes"].append({
            "id": v.id, "kind": v.kind, "x": c.x, "y": c.y, "yaw": c.yaw,
            "half_length": v.box.half_length, "half_width": v.box.half_width,
            "affected_lanes": sorted([list(p) for p in v.affected_lanes]),
            "light_state": v.light_state,
            "schedule": [[t, s] for t, s in v.schedule],
        })
    if spec.config:
        d["config"] = spec.config
    return d


def dump_scenario(spec: ScenarioSpec) -> str:
    """Canonical TOML text of ``spec``; ``load`` of the output reproduces it."""
    return tomli_w.dumps(scenario_to_dict(spec))


def with_agents(spec: ScenarioSpec, scripts: list[AgentScript]) -> ScenarioSpec:
    return replace(spec, agent_scripts=list(scripts))
