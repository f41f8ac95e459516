"""Route densification and speed-dependent waypoint planning."""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import kernels
from .world import EgoState, RouteWaypoint

SPACING = 1.0
NUM_WAYPOINTS = 10
PROJECTION_WINDOW = 30


def densify_route(sparse: Sequence[RouteWaypoint]) -> list[RouteWaypoint]:
    """Resample a sparse route at 1 m arc-length steps.

    Each dense point inherits semantic, road and lane from the sparse segment
    it falls on. A trailing remainder shorter than 1 m is dropped.
    """
    if len(sparse) < 2:
        raise ValueError("route needs at least two waypoints")
    pts = np.array([w.position for w in sparse], dtype=float)
    seg_len = np.linalg.norm(np.diff(pts, axis=0), axis=1)
    if np.any(seg_len <= 0):
        raise ValueError("route has a zero-length segment")
    cum = np.concatenate([[0.0], np.cumsum(seg_len)])
    total = cum[-1]
    n = int(math.floor(total / SPACING + 1e-9)) + 1
    out = []
    seg = 0
    for k in range(n):
        s = k * SPACING
        while seg < len(seg_len) - 1 and s >= cum[seg + 1]:
            seg += 1
        t = (s - cum[seg]) / seg_len[seg]
        p = pts[seg] + min(t, 1.0) * (pts[seg + 1] - pts[seg])
        src = sparse[seg]
        out.append(RouteWaypoint((float(p[0]), float(p[1])), src.semantic, src.lane_id, s, src.road_id))
    return out


class DenseRoute:
    """Array view of a densified route; arc length equals the point index."""

    def __init__(self, waypoints: Sequence[RouteWaypoint]):
        if len(waypoints) < 2:
            raise ValueError("dense route needs at least two points")
        self.waypoints = list(waypoints)
        self.xy = np.ascontiguousarray([w.position for w in waypoints], dtype=np.float64)
        self.semantics = [w.semantic for w in waypoints]
        self.lanes = [(w.road_id, w.lane_id) for w in waypoints]

    @classmethod
    def from_sparse(cls, sparse: Sequence[RouteWaypoint]) -> "DenseRoute":
        return cls(densify_route(sparse))

    def __len__(self):
        return len(self.waypoints)

    @property
    def length(self) -> float:
        return float(len(self.waypoints) - 1)

    def index_at(self, s: float) -> int:
        return int(min(max(math.floor(s), 0), len(self) - 1))

    def point_at(self, s: float) -> tuple[float, float]:
        return kernels.point_at_arc(self.xy, float(s))

    def heading_at(self, s: float) -> float:
        i = min(self.index_at(s), len(self) - 2)
        d = self.xy[i + 1] - self.xy[i]
        return math.atan2(d[1], d[0])

    def project(self, x: float, y: float, s_prev: float = 0.0, window: int = PROJECTION_WINDOW) -> float:
        return kernels.project_on_route(self.xy, float(x), float(y), float(s_prev), int(window))

    def lateral_offset(self, x: float, y: float, s: float) -> float:
        """Signed distance (left positive) of (x, y) from the route at arc ``s``."""
        px, py = self.point_at(s)
        h = self.heading_at(s)
        return -math.sin(h) * (x - px) + math.cos(h) * (y - py)

    def lanes_between(self, s0: float, s1: float) -> set:
        i0, i1 = self.index_at(s0), self.index_at(s1)
        return set(self.lanes[i0:i1 + 1])


def first_waypoint_distance(speed_kmh: float) -> float:
    """Look-ahead distance (m) of the first planned waypoint."""
    if speed_kmh < 0:
        raise ValueError("speed must be >= 0")
    if speed_kmh < 20.0:
        return 4.0
    return 0.5 * (speed_kmh / 3.6) + 2.0


def world_to_local(points, x: float, y: float, yaw: float) -> np.ndarray:
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    c, s = math.cos(yaw), math.sin(yaw)
    dx, dy = pts[:, 0] - x, pts[:, 1] - y
    return np.stack([c * dx + s * dy, -s * dx + c * dy], axis=1)


def local_to_world(points, x: float, y: float, yaw: float) -> np.ndarray:
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    c, s = math.cos(yaw), math.sin(yaw)
    return np.stack([x + c * pts[:, 0] - s * pts[:, 1], y + s * pts[:, 0] + c * pts[:, 1]], axis=1)


ROUTE_TYPES = ("Straight", "Turn", "LaneChange")
_SEMANTIC_TO_ROUTE_TYPE = {"turn": "Turn", "lane_change": "LaneChange"}


def route_type_of(semantics: Sequence[str]) -> str:
    counts = Counter(_SEMANTIC_TO_ROUTE_TYPE.get(s, "Straight") for s in semantics)
    # ties resolved toward the harder category
    return max(ROUTE_TYPES[::-1], key=lambda t: counts.get(t, 0))


@dataclass
class PlannedPath:
    waypoints: np.ndarray  # (10, 2) ego-local
    world: np.ndarray  # (10, 2)
    first_point_distance: float
    ego_arc: float
    padded: bool
    semantics: list[str]

    @property
    def first(self) -> tuple[float, float]:
        return float(self.waypoints[0, 0]), float(self.waypoints[0, 1])

    @property
    def route_type(self) -> str:
        return route_type_of(self.semantics)


def plan_waypoints(ego: EgoState, route: DenseRoute, s_prev: float = 0.0,
                   window: int = PROJECTION_WINDOW) -> PlannedPath:
    """Ten route points 1 m apart starting ``first_waypoint_distance`` ahead of the ego."""
    p = ego.pose
    s = route.project(p.x, p.y, s_prev, window)
    d = first_waypoint_distance(ego.speed_kmh)
    arcs = s + d + SPACING * np.arange(NUM_WAYPOINTS)
    world = np.array([route.point_at(a) for a in arcs])
    semantics = [route.semantics[route.index_at(a)] for a in arcs]
    return PlannedPath(
        waypoints=world_to_local(world, p.x, p.y, p.yaw),
        world=world,
        first_point_distance=d,
        ego_arc=s,
        padded=bool(arcs[-1] > route.length),
        semantics=semantics,
    )
