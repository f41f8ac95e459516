"""Chain-of-thought resolution of the final speed decision.

Hazards are consulted first and force a brake; otherwise the lead-vehicle
relation decides, and finally the road structure (turning inside a junction)
caps the speed.
"""

from __future__ import annotations

import enum
import math
import random
from dataclasses import dataclass, field
from typing import Optional

from .ahead_relation import AheadDecision, AheadObservation, decision_target_kmh
from .config import SpeedTable


class SpeedDecisionClass(str, enum.Enum):
    SpeedLimit = "SpeedLimit"
    FollowAhead = "FollowAhead"
    SlowDown = "SlowDown"
    SlowApproach = "SlowApproach"
    CautiousTurn = "CautiousTurn"
    Brake = "Brake"


SPEED_CLASSES = tuple(SpeedDecisionClass)


@dataclass(frozen=True)
class CoTAspects:
    light_hazard: bool
    stop_hazard: bool
    collision_hazard: bool
    is_junction: bool
    nav_is_turn: bool
    ahead: AheadObservation
    ahead_decision: AheadDecision
    speed_limit: float  # km/h
    light_id: Optional[str] = None
    stop_id: Optional[str] = None
    colliding_agent: Optional[str] = None
    collision_distance: Optional[float] = None

    @property
    def any_hazard(self) -> bool:
        return self.light_hazard or self.stop_hazard or self.collision_hazard


@dataclass(frozen=True)
class CoTRecord:
    aspects: CoTAspects
    final: SpeedDecisionClass
    target_speed: float  # km/h
    reason: str
    labels: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.final == SpeedDecisionClass.Brake and self.target_speed != 0:
            raise ValueError("Brake must carry a zero target speed")
        if self.final == SpeedDecisionClass.CautiousTurn and self.target_speed > 30:
            raise ValueError("CautiousTurn target speed must not exceed 30 km/h")


_AHEAD_TO_FINAL = {
    AheadDecision.Brake: SpeedDecisionClass.Brake,
    AheadDecision.NearStaticApproach: SpeedDecisionClass.SlowApproach,
    AheadDecision.SlowDown: SpeedDecisionClass.SlowDown,
    AheadDecision.FollowAhead: SpeedDecisionClass.FollowAhead,
}


def aspect_labels(a: CoTAspects) -> dict:
    return {
        "light": "red_light" if a.light_hazard else "none",
        "stop_sign": "stop_sign" if a.stop_hazard else "none",
        "collision": "collision" if a.collision_hazard else "none",
        "junction": "junction" if a.is_junction else "not_junction",
        "ahead": a.ahead_decision.name if a.ahead.exists else "NoAheadVehicle",
    }


def _hazard_reason(a: CoTAspects) -> str:
    if a.light_hazard:
        return "red light hazard"
    if a.stop_hazard:
        return "stop sign hazard"
    return f"collision hazard with {a.colliding_agent or 'agent'}"


def resolve(aspects: CoTAspects, speeds: SpeedTable = SpeedTable()) -> CoTRecord:
    """Final decision, target speed (km/h) and a short reason."""
    a = aspects
    limit = a.speed_limit
    turning = a.is_junction and a.nav_is_turn
    if a.any_hazard:
        final, target, reason = SpeedDecisionClass.Brake, speeds.brake, _hazard_reason(a)
    elif a.ahead_decision in _AHEAD_TO_FINAL:
        final = _AHEAD_TO_FINAL[a.ahead_decision]
        target = decision_target_kmh(a.ahead_decision, a.ahead, limit, speeds)
        reason = f"ahead vehicle: {a.ahead_decision.name}"
        if final == SpeedDecisionClass.Brake:
            target = speeds.brake
        elif turning:
            target = min(target, speeds.cautious_turn)
    elif turning:
        final, target, reason = SpeedDecisionClass.CautiousTurn, min(speeds.cautious_turn, limit), "turning in junction"
    else:
        final, target, reason = SpeedDecisionClass.SpeedLimit, limit, "road clear"
    labels = aspect_labels(a)
    labels["final"] = final.value
    return CoTRecord(a, final, float(target), reason, labels)


# --- text rendering ----------------------------------------------------------

_TEMPLATES = {
    "light": (
        "A red traffic light {light} ahead controls our lane, so the ego vehicle brakes to a stop.",
        "Braking now: the traffic light {light} in front is red for our lane.",
        "The light {light} governing the planned lane shows red; emergency brake to 0.0 km/h.",
    ),
    "stop": (
        "A stop sign {stop} lies within the safety distance; the ego vehicle brakes to a full stop.",
        "Stop sign {stop} ahead has not been served yet, so we brake.",
        "Braking for stop sign {stop} on the planned lane.",
    ),
    "collision": (
        "Potential collision with {agent} {distance:.1f} m away is predicted, so the ego vehicle brakes.",
        "Predicted trajectories overlap with {agent} at {distance:.1f} m; brake to avoid a collision.",
        "Collision risk: {agent} is {distance:.1f} m away and crosses our future path, so we stop.",
    ),
    "ahead_brake": (
        "The vehicle ahead is only {gap:.1f} m away, so the ego vehicle brakes.",
        "Too close to the leading vehicle ({gap:.1f} m); braking.",
        "Brake: the gap to the vehicle in front has shrunk to {gap:.1f} m.",
    ),
    "slow_approach": (
        "The vehicle ahead is nearly stopped {gap:.1f} m away; approach slowly at {target:.1f} km/h.",
        "Creeping toward the near-static vehicle ahead ({gap:.1f} m) at {target:.1f} km/h.",
        "Both ego target and lead speed are very low, so approach at {target:.1f} km/h.",
    ),
    "slow_down": (
        "Closing in on the vehicle ahead at {gap:.1f} m; slow down to {target:.1f} km/h.",
        "The lead vehicle is {gap:.1f} m ahead and slower, so reduce speed to {target:.1f} km/h.",
        "Slow down to {target:.1f} km/h to keep distance from the vehicle {gap:.1f} m ahead.",
    ),
    "follow": (
        "Follow the vehicle ahead ({gap:.1f} m) at its speed of {target:.1f} km/h.",
        "A vehicle drives {gap:.1f} m ahead in our lane; match its {target:.1f} km/h.",
        "Keep following the lead vehicle at {target:.1f} km/h, gap {gap:.1f} m.",
    ),
    "cautious_turn": (
        "Turning inside the junction, so limit speed to {target:.1f} km/h.",
        "Sharp turn ahead within the junction; drive cautiously at {target:.1f} km/h.",
        "Inside a junction with a turn command, target speed capped at {target:.1f} km/h.",
    ),
    "speed_limit": (
        "No hazards and no vehicle ahead; drive at the speed limit of {limit:.1f} km/h.",
        "Road is clear, so aim for the {limit:.1f} km/h speed limit.",
        "Nothing blocks the lane; accelerate toward the speed limit {limit:.1f} km/h.",
    ),
}


def _template_key(record: CoTRecord) -> str:
    a = record.aspects
    if record.final == SpeedDecisionClass.Brake:
        if a.light_hazard:
            return "light"
        if a.stop_hazard:
            return "stop"
        if a.collision_hazard:
            return "collision"
        return "ahead_brake"
    return {
        SpeedDecisionClass.SlowApproach: "slow_approach",
        SpeedDecisionClass.SlowDown: "slow_down",
        SpeedDecisionClass.FollowAhead: "follow",
        SpeedDecisionClass.CautiousTurn: "cautious_turn",
        SpeedDecisionClass.SpeedLimit: "speed_limit",
    }[record.final]


def render_reason(record: CoTRecord, template_seed: int = 0) -> str:
    """Deterministic sentence for ``record``; the seed picks the template."""
    pool = _TEMPLATES[_template_key(record)]
    template = pool[random.Random(template_seed).randrange(len(pool))]
    a = record.aspects
    gap = a.ahead.distance if a.ahead.exists and math.isfinite(a.ahead.distance) else 0.0
    dist = a.collision_distance if a.collision_distance is not None else 0.0
    return template.format(
        light=a.light_id or "", stop=a.stop_id or "", agent=a.colliding_agent or "an agent",
        distance=dist, gap=gap, target=record.target_speed, limit=a.speed_limit,
    ).replace("  ", " ")
