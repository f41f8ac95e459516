import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from cotdrive.waypoints import (
    DenseRoute,
    densify_route,
    first_waypoint_distance,
    local_to_world,
    plan_waypoints,
    route_type_of,
    world_to_local,
)
from cotdrive.world import EgoState, Pose2D, RouteWaypoint, with_arc_lengths

from conftest import arc_points


def sparse(points, semantics=None):
    n = len(points)
    return with_arc_lengths(points, semantics or ["normal"] * n, ["1"] * n, ["1"] * n)


def test_densify_spacing_and_remainder():
    dense = densify_route(sparse([(0.0, 0.0), (10.5, 0.0)]))
    assert len(dense) == 11
    assert [w.position[0] for w in dense] == pytest.approx(list(range(11)))
    assert [w.arc_length for w in dense] == pytest.approx(list(range(11)))


def test_densify_inherits_segment_semantics():
    dense = densify_route(sparse([(0.0, 0.0), (5.0, 0.0), (5.0, 5.0)], ["normal", "turn", "normal"]))
    assert [w.semantic for w in dense] == ["normal"] * 5 + ["turn"] * 6
    # the corner point sits on the second segment
    assert dense[5].position == pytest.approx((5.0, 0.0))


def test_densify_rejects_degenerate():
    with pytest.raises(ValueError):
        densify_route([RouteWaypoint((0.0, 0.0))])
    with pytest.raises(ValueError):
        densify_route([RouteWaypoint((0.0, 0.0)), RouteWaypoint((0.0, 0.0), arc_length=1.0)])


@pytest.mark.parametrize("v,d", [(0, 4.0), (19.99, 4.0), (20, 0.5 * 20 / 3.6 + 2), (36, 7.0), (72, 12.0)])
def test_first_waypoint_distance(v, d):
    assert first_waypoint_distance(v) == pytest.approx(d, abs=1e-12)


def test_first_waypoint_distance_rejects_negative():
    with pytest.raises(ValueError):
        first_waypoint_distance(-0.1)


def test_plan_on_straight_route():
    route = DenseRoute.from_sparse(sparse([(0.0, 0.0), (100.0, 0.0)]))
    ego = EgoState.from_kmh(Pose2D(10.0, 0.3, 0.0), 36.0)
    plan = plan_waypoints(ego, route)
    assert plan.waypoints.shape == (10, 2)
    assert plan.ego_arc == pytest.approx(10.0)
    assert plan.first_point_distance == pytest.approx(7.0)
    assert plan.world[:, 0] == pytest.approx(17.0 + np.arange(10))
    assert plan.waypoints[:, 1] == pytest.approx([-0.3] * 10)
    assert not plan.padded
    assert plan.route_type == "Straight"


def test_plan_on_circle_keeps_unit_chords():
    pts = arc_points(0.0, 20.0, 20.0, -math.pi / 2, math.pi / 2, 200)
    route = DenseRoute.from_sparse(sparse(pts, ["turn"] * len(pts)))
    ego = EgoState.from_kmh(Pose2D(0.0, 0.0, 0.0), 10.0)
    plan = plan_waypoints(ego, route)
    gaps = np.linalg.norm(np.diff(plan.world, axis=0), axis=1)
    assert gaps == pytest.approx(1.0, abs=2e-3)
    # every point sits on the circle up to the polyline sagitta
    radii = np.linalg.norm(plan.world - np.array([0.0, 20.0]), axis=1)
    assert radii == pytest.approx(20.0, abs=1e-2)
    assert math.hypot(*plan.first) == pytest.approx(4.0, abs=1e-2)
    assert plan.route_type == "Turn"


def test_plan_pads_past_route_end():
    route = DenseRoute.from_sparse(sparse([(0.0, 0.0), (10.0, 0.0)]))
    plan = plan_waypoints(EgoState(Pose2D(8.0, 0.0)), route)
    assert plan.padded
    assert plan.world[-1] == pytest.approx((8.0 + 4.0 + 9.0, 0.0))


def test_projection_is_forward_only():
    route = DenseRoute.from_sparse(sparse([(0.0, 0.0), (50.0, 0.0)]))
    assert route.project(5.0, 0.0, 10.0) == pytest.approx(10.0)
    assert route.project(15.5, 2.0, 10.0) == pytest.approx(15.5)


def test_lateral_offset_sign():
    route = DenseRoute.from_sparse(sparse([(0.0, 0.0), (50.0, 0.0)]))
    assert route.lateral_offset(10.0, 2.0, 10.0) == pytest.approx(2.0)
    assert route.lateral_offset(10.0, -1.0, 10.0) == pytest.approx(-1.0)


def test_route_type_ties_prefer_harder():
    assert route_type_of(["normal"] * 5 + ["turn"] * 5) == "Turn"
    assert route_type_of(["lane_change"] * 5 + ["turn"] * 5) == "LaneChange"
    assert route_type_of(["junction"] * 10) == "Straight"


@given(st.floats(-50, 50), st.floats(-50, 50), st.floats(-math.pi, math.pi),
       st.lists(st.tuples(st.floats(-100, 100), st.floats(-100, 100)), min_size=1, max_size=10))
def test_local_world_round_trip(x, y, yaw, pts):
    back = local_to_world(world_to_local(pts, x, y, yaw), x, y, yaw)
    assert np.allclose(back, np.array(pts), atol=1e-9)
