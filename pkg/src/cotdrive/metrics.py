"""Open-loop (decision F1, path angle accuracy) and closed-loop (DS/RC/IS) scoring."""

from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Mapping, Optional, Sequence, Union

from .ahead_relation import AheadDecision, AheadObservation
from .config import SpeedTable
from .cot_policy import SPEED_CLASSES, CoTAspects, SpeedDecisionClass, resolve
from .sim import RunResult
from .waypoints import ROUTE_TYPES

ANGLE_TOL_DEG = 2.0

DEFAULT_PENALTIES = {
    "collision_pedestrian": 0.50,
    "collision_vehicle": 0.60,
    "red_light": 0.70,
    "stop_sign": 0.80,
    "route_deviation": 0.70,
}

_TURN_COMMANDS = {"turn_left", "turn_right"}
# stand-in speed limit (km/h) when a prediction carries labels only
_LABEL_ONLY_LIMIT = 50.0


# --- decisions --------------------------------------------------------------


def _flag(cot: Mapping, key: str) -> bool:
    if key not in cot:
        raise ValueError(f"missing aspect {key!r}")
    v = cot[key]
    if not isinstance(v, bool):
        raise ValueError(f"aspect {key!r} must be a boolean, got {v!r}")
    return v


def aspects_from_cot(cot: Mapping, nav_command: Optional[str] = None) -> CoTAspects:
    """Rebuild decision inputs from a logged or predicted ``cot`` block.

    Only the labels matter for the final class, so a missing lead speed or
    speed limit falls back to neutral values.
    """
    if "nav_is_turn" in cot:
        nav_is_turn = _flag(cot, "nav_is_turn")
    elif nav_command is not None:
        nav_is_turn = nav_command in _TURN_COMMANDS
    else:
        raise ValueError("missing aspect 'nav_is_turn' (and no nav_command to derive it)")
    ahead = cot.get("ahead")
    if not isinstance(ahead, Mapping) or "decision" not in ahead:
        raise ValueError("missing aspect 'ahead.decision'")
    try:
        decision = AheadDecision[ahead["decision"]]
    except KeyError:
        raise ValueError(f"unknown ahead decision {ahead['decision']!r}") from None
    exists = ahead.get("exists", decision != AheadDecision.AimSpeedLimit)
    obs = AheadObservation()
    if exists:
        lead = ahead.get("ahead_speed_kmh") or 0.0
        obs = AheadObservation.of(ahead.get("agent_id") or "ahead", ahead.get("distance_m") or 0.0, 0.0, lead / 3.6)
    return CoTAspects(
        light_hazard=_flag(cot, "light_hazard"),
        stop_hazard=_flag(cot, "stop_hazard"),
        collision_hazard=_flag(cot, "collision_hazard"),
        is_junction=_flag(cot, "is_junction"),
        nav_is_turn=nav_is_turn,
        ahead=obs,
        ahead_decision=decision,
        speed_limit=float(cot.get("speed_limit_kmh", _LABEL_ONLY_LIMIT)),
    )


def derive_final_from_aspects(cot: Mapping, nav_command: Optional[str] = None,
                              speeds: SpeedTable = SpeedTable()) -> SpeedDecisionClass:
    """Final speed class implied by per-aspect labels, via the expert's resolver."""
    return resolve(aspects_from_cot(cot, nav_command), speeds).final


_ASPECT_KEYS = ("light_hazard", "stop_hazard", "collision_hazard", "is_junction")


def final_of(record: Mapping) -> SpeedDecisionClass:
    """Aspect-derived class when all aspects are present, else the stated final."""
    cot = record.get("cot")
    if not isinstance(cot, Mapping):
        raise ValueError("record has no 'cot' block")
    if all(k in cot for k in _ASPECT_KEYS) and "ahead" in cot:
        return derive_final_from_aspects(cot, record.get("nav_command"))
    try:
        return SpeedDecisionClass(cot["final_decision"])
    except (KeyError, ValueError):
        raise ValueError("record carries neither full aspects nor a valid final_decision") from None


# --- F1 -----------------------------------------------------------------------


def f1_per_class(gt: Mapping, pred: Mapping) -> dict[str, float]:
    """One-vs-rest F1 per class over aligned label maps.

    Classes with no positives in either map are left out.
    """
    if not gt:
        raise ValueError("no labels to evaluate")
    if set(gt) != set(pred):
        missing, extra = set(gt) - set(pred), set(pred) - set(gt)
        raise ValueError(f"misaligned keys: {len(missing)} missing, {len(extra)} unexpected")
    tp, fp, fn = Counter(), Counter(), Counter()
    for k, g in gt.items():
        p = pred[k]
        if g == p:
            tp[g] += 1
        else:
            fp[p] += 1
            fn[g] += 1
    out = {}
    for c in sorted(set(tp) | set(fp) | set(fn), key=str):
        denom = 2 * tp[c] + fp[c] + fn[c]
        out[c.value if isinstance(c, SpeedDecisionClass) else str(c)] = 2 * tp[c] / denom
    return out


# --- path accuracy ---------------------------------------------------------


def waypoint_angle_deg(wp) -> float:
    x, y = float(wp[0]), float(wp[1])
    if x == 0.0 and y == 0.0:
        raise ValueError("waypoint at the ego origin has no heading")
    return math.degrees(math.atan2(y, x))


def angle_diff_deg(a: float, b: float) -> float:
    """Smallest absolute difference between two angles in degrees."""
    d = math.fmod(abs(a - b), 360.0)
    return 360.0 - d if d > 180.0 else d


def path_accurate(gt_wp, pred_wp, tol_deg: float = ANGLE_TOL_DEG) -> bool:
    return angle_diff_deg(waypoint_angle_deg(gt_wp), waypoint_angle_deg(pred_wp)) <= tol_deg


def path_accuracy(gt_wp: Sequence, pred_wp: Sequence, route_type: Sequence[str],
                  tol_deg: float = ANGLE_TOL_DEG) -> dict[str, float]:
    """Percent of frames whose first waypoints agree in angle, per route type and overall.

    Each element of ``gt_wp`` / ``pred_wp`` is either a single (x, y) point or
    a waypoint list whose first entry is used.
    """
    if not (len(gt_wp) == len(pred_wp) == len(route_type)):
        raise ValueError("gt, pred and route_type must have equal length")
    if not gt_wp:
        raise ValueError("no waypoints to evaluate")
    hits, totals = Counter(), Counter()
    for g, p, rt in zip(gt_wp, pred_wp, route_type):
        if rt not in ROUTE_TYPES:
            raise ValueError(f"unknown route type {rt!r}")
        totals[rt] += 1
        hits[rt] += path_accurate(_first(g), _first(p), tol_deg)
    out = {rt: 100.0 * hits[rt] / totals[rt] for rt in ROUTE_TYPES if totals[rt]}
    out["overall"] = 100.0 * sum(hits.values()) / sum(totals.values())
    return out


def _first(wp):
    if len(wp) and not isinstance(wp[0], (int, float)):
        return wp[0]
    return wp


# --- open loop -----------------------------------------------------------------


def _key(rec: Mapping) -> tuple[str, int]:
    try:
        return (str(rec["scenario_id"]), int(rec["frame"]))
    except KeyError as exc:
        raise ValueError(f"record missing key {exc}") from None


def index_records(records: Iterable[Mapping]) -> dict[tuple[str, int], Mapping]:
    out = {}
    for rec in records:
        k = _key(rec)
        if k in out:
            raise ValueError(f"duplicate record {k}")
        out[k] = rec
    return out


def evaluate_open_loop(gt: Iterable[Mapping], pred: Iterable[Mapping]) -> dict:
    """F1 per speed class and first-waypoint path accuracy of ``pred`` against ``gt``."""
    g, p = index_records(gt), index_records(pred)
    keys = sorted(g)
    f1 = f1_per_class({k: final_of(g[k]) for k in keys}, {k: final_of(p[k]) for k in p})
    acc = path_accuracy(
        [g[k]["waypoints"] for k in keys],
        [p[k]["waypoints"] for k in keys],
        [g[k].get("route_type", "Straight") for k in keys],
    )
    return {"frames": len(keys), "f1": f1, "path_accuracy": acc}


# --- closed loop ---------------------------------------------------------------


@dataclass(frozen=True)
class RouteScore:
    scenario_id: str
    rc: float
    is_: float
    ds: float

    def as_dict(self) -> dict:
        return {"scenario_id": self.scenario_id, "RC": self.rc, "IS": self.is_, "DS": self.ds}


def route_score(result: Union[RunResult, Mapping], penalties: Mapping[str, float] = DEFAULT_PENALTIES) -> RouteScore:
    """RC in percent, multiplicative IS in [0, 1] and DS = RC * IS."""
    summary = result.summary() if isinstance(result, RunResult) else result
    total = float(summary["total_arc"])
    if not total > 0:
        raise ValueError("total_arc must be > 0")
    rc = 100.0 * min(max(float(summary["completed_arc"]) / total, 0.0), 1.0)
    kinds = Counter(e["kind"] for e in summary.get("infractions", []))
    unknown = set(kinds) - set(penalties)
    if unknown:
        raise ValueError(f"no penalty for infraction kinds {sorted(unknown)}")
    is_ = float(math.prod(penalties[k] ** n for k, n in kinds.items()))
    return RouteScore(summary["scenario_id"], rc, is_, rc * is_)


def closed_loop_score(results: Sequence, penalties: Mapping[str, float] = DEFAULT_PENALTIES) -> dict:
    """Per-route and mean DS / RC / IS."""
    if not results:
        raise ValueError("no results to score")
    routes = [route_score(r, penalties) for r in results]
    n = len(routes)
    return {
        "routes": [r.as_dict() for r in sorted(routes, key=lambda r: r.scenario_id)],
        "DS": sum(r.ds for r in routes) / n,
        "RC": sum(r.rc for r in routes) / n,
        "IS": sum(r.is_ for r in routes) / n,
    }


def report_json(report: Mapping) -> str:
    """Stable text form for diffing: sorted keys, fixed float precision."""
    return json.dumps(_round(report), indent=2, sort_keys=True) + "\n"


def _round(x, nd: int = 6):
    if isinstance(x, float):
        return round(x, nd) + 0.0
    if isinstance(x, Mapping):
        return {str(k): _round(v, nd) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_round(v, nd) for v in x]
    return x


def present_classes(labels: Iterable) -> list[str]:
    seen = {SpeedDecisionClass(v).value for v in labels}
    return [c.value for c in SPEED_CLASSES if c.value in seen]
