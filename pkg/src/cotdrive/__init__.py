"""Rule-based driving expert that logs its chain-of-thought speed decisions.

The expert checks hazards (red lights, stop signs, predicted collisions),
relates to the lead vehicle, resolves a final speed class and follows a
planned path with PID control inside a deterministic 20 FPS simulator.
"""

from .ahead_relation import AheadDecision, AheadObservation, AheadState, ahead_decision
from .cot_policy import CoTAspects, CoTRecord, SpeedDecisionClass, render_reason, resolve
from .hazards import check_collision_hazard, safety_distance
from .sim import RunResult, run_scenario
from .waypoints import first_waypoint_distance, plan_waypoints
from .world import ScenarioSpec, load_scenario

__version__ = "0.1.0"

__all__ = [
    "AheadDecision",
    "AheadObservation",
    "AheadState",
    "CoTAspects",
    "CoTRecord",
    "RunResult",
    "ScenarioSpec",
    "SpeedDecisionClass",
    "ahead_decision",
    "check_collision_hazard",
    "first_waypoint_distance",
    "load_scenario",
    "plan_waypoints",
    "render_reason",
    "resolve",
    "run_scenario",
    "safety_distance",
]
