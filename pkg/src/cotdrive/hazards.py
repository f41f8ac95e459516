"""Emergency-brake hazard checks: red light, stop sign, predicted collision."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from . import kernels
from .config import HazardConfig, VehicleParams
from .control import PIDController
from .kinematics import BicycleParams, Rollout, predict_agent_rollout
from .waypoints import PROJECTION_WINDOW, DenseRoute
from .world import OBB2D, AgentState, EgoState, Pose2D, TriggerVolume


def safety_distance(speed_kmh: float, brake_decel: float = 5.0) -> float:
    """Length (m) of the forward safety box for lights and stop signs."""
    if speed_kmh < 0:
        raise ValueError("speed must be >= 0")
    if speed_kmh < 30.0:
        return 3.0
    return (speed_kmh / 3.6) ** 2 / (2 * abs(brake_decel)) - 4.0


@dataclass(frozen=True)
class SafetyBox:
    box: OBB2D
    length: float


def make_safety_box(ego: EgoState, brake_decel: float = 5.0) -> SafetyBox:
    """Box of length ``safety_distance`` starting at the front bumper, ego-wide."""
    d = safety_distance(ego.speed_kmh, brake_decel)
    p = ego.pose
    offset = ego.extents[0] + d / 2
    center = Pose2D(p.x + offset * math.cos(p.yaw), p.y + offset * math.sin(p.yaw), p.yaw)
    return SafetyBox(OBB2D(center, d / 2, ego.extents[1]), d)


def _overlaps(a: OBB2D, b: OBB2D) -> bool:
    return bool(kernels.overlap_rows(np.array(a.as_row()), np.array(b.as_row()))[0])


def find_light_stop_hazards(
    safety_box: SafetyBox,
    volumes: Iterable[TriggerVolume],
    planned_lanes: set,
    t: float = 0.0,
    served_stops: frozenset = frozenset(),
    yellow_is_red: bool = True,
) -> tuple[Optional[str], Optional[str]]:
    """Ids of the first triggering light and stop sign (or None)."""
    blocking = {"red", "yellow"} if yellow_is_red else {"red"}
    light_id = stop_id = None
    for vol in volumes:
        if not (vol.affected_lanes & planned_lanes):
            continue
        if vol.kind == "traffic_light":
            if light_id is None and vol.state_at(t) in blocking and _overlaps(safety_box.box, vol.box):
                light_id = vol.id
        elif stop_id is None and vol.id not in served_stops and _overlaps(safety_box.box, vol.box):
            stop_id = vol.id
    return light_id, stop_id


def check_light_stop_hazard(ego: EgoState, safety_box: SafetyBox, volumes: Sequence[TriggerVolume],
                            planned_lanes: set, t: float = 0.0,
                            served_stops: frozenset = frozenset(),
                            yellow_is_red: bool = True) -> tuple[bool, bool]:
    light_id, stop_id = find_light_stop_hazards(safety_box, volumes, planned_lanes, t, served_stops, yellow_is_red)
    return light_id is not None, stop_id is not None


@dataclass
class HazardReport:
    light_hazard: bool = False
    light_id: Optional[str] = None
    stop_hazard: bool = False
    stop_id: Optional[str] = None
    collision_hazard: bool = False
    colliding_agent: Optional[str] = None
    # index into the predicted horizon (0 = one frame ahead)
    first_collision_frame: Optional[int] = None
    dangerous_agents: dict = field(default_factory=dict)

    def __post_init__(self):
        if (self.colliding_agent is not None) != self.collision_hazard:
            raise ValueError("colliding_agent must be set exactly when collision_hazard is")

    @property
    def any(self) -> bool:
        return self.light_hazard or self.stop_hazard or self.collision_hazard


def horizon_frames(speed_kmh: float, cfg: HazardConfig = HazardConfig()) -> int:
    return cfg.short_horizon if speed_kmh < cfg.horizon_switch_kmh else cfg.long_horizon


def predict_ego_rollout(ego: EgoState, route: DenseRoute, ego_arc: float, target_kmh: float,
                        lon: PIDController, lat: PIDController, frames: int,
                        vehicle: VehicleParams = VehicleParams()) -> Rollout:
    """Virtual ego trajectory under copies of both controllers tracking the route."""
    lon_buf, lon_count, lon_head = lon.ring_state()
    lat_buf, lat_count, lat_head = lat.ring_state()
    p = ego.pose
    states = kernels.ego_virtual_rollout(
        route.xy, float(ego_arc), p.x, p.y, p.yaw, ego.speed, float(target_kmh),
        lon_buf, lon_count, lon_head, lon.gains(),
        lat_buf, lat_count, lat_head, lat.gains(),
        vehicle.wheelbase, vehicle.max_steer, vehicle.max_accel, vehicle.max_brake,
        vehicle.dt, int(frames), PROJECTION_WINDOW,
    )
    return Rollout(states, ego.extents)


def check_collision_hazard(
    ego: EgoState,
    agents: Sequence[AgentState],
    route: DenseRoute,
    ego_arc: float,
    target_kmh: float,
    lon: PIDController,
    lat: PIDController,
    prior_dangerous: Mapping[str, int] | None = None,
    cfg: HazardConfig = HazardConfig(),
    vehicle: VehicleParams = VehicleParams(),
) -> HazardReport:
    """Predict frame-aligned ego/agent box overlaps over the speed-dependent horizon.

    Agents whose consecutive-hit count exceeds ``cfg.dangerous_after`` are
    flagged on proximity (< ``cfg.dangerous_distance``) instead of overlap.
    The returned ``dangerous_agents`` holds the updated counts.
    """
    prior = dict(prior_dangerous or {})
    frames = horizon_frames(ego.speed_kmh, cfg)
    counts: dict[str, int] = {}
    if not agents:
        return HazardReport(dangerous_agents=counts)
    ego_rows = predict_ego_rollout(ego, route, ego_arc, target_kmh, lon, lat, frames, vehicle).box_rows
    params = BicycleParams.from_vehicle(vehicle)
    best: tuple[int, str] | None = None
    for agent in agents:
        agent_rows = predict_agent_rollout(agent, frames, params).box_rows
        if prior.get(agent.id, 0) > cfg.dangerous_after:
            hits = kernels.min_distance_rows(ego_rows, agent_rows) < cfg.dangerous_distance
        else:
            hits = kernels.overlap_rows(ego_rows, agent_rows)
        idx = np.flatnonzero(hits)
        if idx.size:
            counts[agent.id] = prior.get(agent.id, 0) + 1
            cand = (int(idx[0]), agent.id)
            if best is None or cand < best:
                best = cand
        else:
            counts[agent.id] = 0
    if best is None:
        return HazardReport(dangerous_agents=counts)
    return HazardReport(collision_hazard=True, colliding_agent=best[1],
                        first_collision_frame=best[0], dangerous_agents=counts)
