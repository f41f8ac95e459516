"""Relation to the lead vehicle in the ego lane, with hysteresis."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace
from typing import Optional, Sequence

from .config import AheadThresholds, SpeedTable, mps_to_kmh
from .waypoints import DenseRoute
from .world import AgentState, EgoState


class AheadDecision(enum.IntEnum):
    """Ordered from most to least conservative."""

    Brake = 0
    NearStaticApproach = 1
    SlowDown = 2
    FollowAhead = 3
    AimSpeedLimit = 4


# decisions indexed by the interval a gap / ttc falls into
_BANDED = (AheadDecision.Brake, AheadDecision.SlowDown, AheadDecision.FollowAhead, AheadDecision.AimSpeedLimit)


@dataclass(frozen=True)
class AheadObservation:
    exists: bool = False
    agent_id: Optional[str] = None
    distance: float = math.inf  # bumper-to-bumper gap, m
    rel_speed: float = 0.0  # ego minus lead, m/s; positive when closing
    ttc: float = math.inf
    ahead_speed: float = 0.0  # m/s

    @classmethod
    def of(cls, agent_id: str, distance: float, ego_speed: float, ahead_speed: float) -> "AheadObservation":
        rel = ego_speed - ahead_speed
        ttc = distance / rel if rel > 0 else math.inf
        return cls(True, agent_id, max(distance, 0.0), rel, ttc, ahead_speed)

    @property
    def ahead_speed_kmh(self) -> float:
        return mps_to_kmh(self.ahead_speed)


@dataclass(frozen=True)
class AheadState:
    previous: AheadDecision = AheadDecision.AimSpeedLimit
    band: float = 0.2
    # decision before the near-static override; hysteresis widens this one
    previous_raw: AheadDecision = AheadDecision.AimSpeedLimit

    def __post_init__(self):
        if not 0.0 <= self.band <= 0.5:
            raise ValueError("band must lie in [0, 0.5]")


def observe_ahead(ego: EgoState, agents: Sequence[AgentState], route: DenseRoute, ego_arc: float,
                  thresholds: AheadThresholds = AheadThresholds()) -> AheadObservation:
    """Nearest vehicle whose center sits on the ego's route lane ahead of it."""
    best = None
    window = int(thresholds.search_range) + 2
    for agent in agents:
        if agent.kind != "vehicle":
            continue
        s = route.project(agent.pose.x, agent.pose.y, ego_arc, window)
        ahead = s - ego_arc
        if not (0.0 < ahead <= thresholds.search_range):
            continue
        if abs(route.lateral_offset(agent.pose.x, agent.pose.y, s)) > thresholds.lane_half_width:
            continue
        key = (ahead, agent.id)
        if best is None or key < best[0]:
            best = (key, agent, s)
    if best is None:
        return AheadObservation()
    (ahead, _), agent, s = best
    gap = ahead - ego.extents[0] - agent.extents[0]
    along = agent.speed * math.cos(agent.pose.yaw - route.heading_at(s))
    return AheadObservation.of(agent.id, gap, ego.speed, max(along, 0.0))


def _classify(value: float, cuts: Sequence[float], prev: AheadDecision, band: float) -> AheadDecision:
    bounds = (0.0, *cuts, math.inf)
    if prev in _BANDED and band > 0:
        i = _BANDED.index(prev)
        lo, hi = bounds[i], bounds[i + 1]
        width = hi - lo if math.isfinite(hi) else lo
        if lo - band * width <= value < hi + band * width:
            return prev
    for i, cut in enumerate(cuts):
        if value < cut:
            return _BANDED[i]
    return AheadDecision.AimSpeedLimit


def uses_distance(obs: AheadObservation, thresholds: AheadThresholds) -> bool:
    return obs.distance < thresholds.near_gap or (
        obs.distance < thresholds.mid_gap and abs(obs.rel_speed) < thresholds.mid_dv)


def decision_target_kmh(decision: AheadDecision, obs: AheadObservation, cruise_kmh: float,
                        speeds: SpeedTable = SpeedTable()) -> float:
    if decision == AheadDecision.Brake:
        return speeds.brake
    if decision == AheadDecision.NearStaticApproach:
        return speeds.slow_approach
    if decision == AheadDecision.SlowDown:
        return min(speeds.slow_down_factor * obs.ahead_speed_kmh, cruise_kmh)
    if decision == AheadDecision.FollowAhead:
        return min(obs.ahead_speed_kmh, cruise_kmh)
    return cruise_kmh


def ahead_decision(obs: AheadObservation, state: AheadState, ego_target: float,
                   thresholds: AheadThresholds = AheadThresholds(),
                   speeds: SpeedTable = SpeedTable()) -> tuple[AheadDecision, AheadState]:
    """Pick one of the five lead-vehicle actions.

    ``ego_target`` is the cruise target (km/h) used by AimSpeedLimit. The
    previous decision's interval is widened by ``state.band`` of its width
    before re-classifying.
    """
    if not obs.exists:
        aim = AheadDecision.AimSpeedLimit
        return aim, replace(state, previous=aim, previous_raw=aim)
    if uses_distance(obs, thresholds):
        raw = _classify(obs.distance, thresholds.dist_cuts, state.previous_raw, state.band)
    else:
        raw = _classify(obs.ttc, thresholds.ttc_cuts, state.previous_raw, state.band)
    decision = raw
    target = decision_target_kmh(raw, obs, ego_target, speeds)
    if target < thresholds.near_static_kmh and obs.ahead_speed_kmh < thresholds.near_static_kmh:
        decision = AheadDecision.NearStaticApproach
    return decision, replace(state, previous=decision, previous_raw=raw)
