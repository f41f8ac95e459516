"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run alone with ``pytest -m acceptance -s``.
"""

import itertools
import math
import random
import time

import numpy as np
import pytest
import shapely

from cotdrive import kernels
from cotdrive.ahead_relation import AheadDecision, AheadObservation
from cotdrive.config import HazardConfig, VehicleParams
from cotdrive.control import PIDController
from cotdrive.cot_policy import CoTAspects, SpeedDecisionClass, resolve
from cotdrive.dataset import ScenarioInfo, bundled_scenario_paths, make_splits
from cotdrive.hazards import check_collision_hazard, safety_distance
from cotdrive.metrics import evaluate_open_loop, f1_per_class, path_accurate
from cotdrive.sim import run_scenario
from cotdrive.waypoints import DenseRoute, first_waypoint_distance
from cotdrive.world import AgentState, EgoState, Pose2D, load_scenario, scenario_from_dict, with_arc_lengths

from conftest import straight_scenario
from oracles import box_polygons, brute_force_collision, expected_decision, raster_overlap

pytestmark = pytest.mark.acceptance


@pytest.fixture
def verdict(capsys, request):
    """Print one PASS/FAIL line for the criterion and enforce its time budget."""
    start = time.perf_counter()
    state = {}

    def done(ok: bool, detail: str, budget_s: float):
        elapsed = time.perf_counter() - start
        passed = bool(ok) and elapsed < budget_s
        with capsys.disabled():
            print(f"\n[{'PASS' if passed else 'FAIL'}] {request.node.name}: {detail} "
                  f"({elapsed:.2f} s, budget {budget_s:g} s)")
        state["reported"] = True
        assert ok, detail
        assert elapsed < budget_s, f"took {elapsed:.1f} s, budget {budget_s} s"

    yield done
    if not state:
        with capsys.disabled():
            print(f"\n[FAIL] {request.node.name}: assertion failed before verdict")


@pytest.fixture(scope="module")
def bundled_runs():
    """Each bundled scenario run twice with seed 0."""
    out = {}
    for path in bundled_scenario_paths():
        spec = load_scenario(path)
        out[spec.scenario_id] = (spec, run_scenario(spec, 0), run_scenario(spec, 0))
    return out


def test_c01_safety_distance(verdict):
    ok = safety_distance(72.0) == 36.0
    below = all(safety_distance(i / 100) == 3.0 for i in range(3000))
    gap = 3.0 - safety_distance(30.0)
    pinned = gap == pytest.approx(3.0 - (30 / 3.6) ** 2 / 10 + 4.0, abs=1e-12) \
        and gap == pytest.approx(0.0555555555555545, abs=1e-12)
    verdict(ok and below and pinned, f"d(72)={safety_distance(72.0)}, d<30 constant={below}, gap@30={gap:.6f}", 1)


def test_c02_first_waypoint_distance(verdict):
    worst = 0.0
    for i in range(1301):
        v = i / 10
        direct = 4.0 if v < 20.0 else v / 7.2 + 2.0
        worst = max(worst, abs(first_waypoint_distance(v) - direct))
    strict = first_waypoint_distance(19.9999) == 4.0 and first_waypoint_distance(20.0) == pytest.approx(20 / 7.2 + 2)
    verdict(worst < 1e-12 and strict, f"1301 speeds, max |err|={worst:.1e}, branch strict at 20={strict}", 1)


def _aspects(light, stop, coll, ahead, junction, turn, limit, lead_kmh):
    obs = AheadObservation() if ahead == AheadDecision.AimSpeedLimit else \
        AheadObservation.of("lead", 10.0, lead_kmh / 3.6, lead_kmh / 3.6)
    return CoTAspects(light, stop, coll, junction, turn, obs, ahead, limit)


def test_c03_cot_decision_table(verdict):
    table_bad = 0
    combos = list(itertools.product([False, True], [False, True], [False, True], list(AheadDecision),
                                     [False, True], [False, True]))
    for light, stop, coll, ahead, junction, turn in combos:
        rec = resolve(_aspects(light, stop, coll, ahead, junction, turn, 60.0, 32.4))
        want = expected_decision(light, stop, coll, ahead.name, junction, turn, 60.0, 32.4)
        table_bad += rec.final.value != want[0] or abs(rec.target_speed - want[1]) > 1e-9
    rng = random.Random(2024)
    violations = 0
    fuzz = 100_000
    for _ in range(fuzz):
        flags = [rng.random() < 0.5 for _ in range(5)]
        ahead = rng.choice(list(AheadDecision))
        limit, lead = rng.uniform(10, 130), rng.uniform(0, 130)
        rec = resolve(_aspects(*flags[:3], ahead, *flags[3:], limit, lead))
        if any(flags[:3]) and (rec.final != SpeedDecisionClass.Brake or rec.target_speed != 0.0):
            violations += 1
        want = expected_decision(*flags[:3], ahead.name, *flags[3:], limit, lead)
        violations += rec.final.value != want[0] or abs(rec.target_speed - want[1]) > 1e-9
    verdict(len(combos) == 160 and table_bad == 0 and violations == 0,
            f"{len(combos)} combinations, {table_bad} mismatches; {fuzz} fuzz vectors, {violations} violations", 10)


def _collision_scene(rng):
    k = rng.uniform(-0.03, 0.03)
    pts, x, y, h = [], 0.0, 0.0, 0.0
    for _ in range(40):
        pts.append((x, y))
        x, y, h = x + 5 * math.cos(h), y + 5 * math.sin(h), h + 5 * k
    route = DenseRoute.from_sparse(with_arc_lengths(pts, ["normal"] * 40, ["1"] * 40, ["1"] * 40))
    ego = EgoState.from_kmh(Pose2D(rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5), rng.uniform(-0.1, 0.1)),
                            rng.uniform(80, 120))
    agents = []
    for j in range(int(rng.integers(0, 6))):
        kind = "pedestrian" if rng.random() < 0.3 else "vehicle"
        s = rng.uniform(10, 90)
        px, py = route.point_at(s)
        off, hdg = rng.uniform(-8, 8), route.heading_at(s)
        ext = (0.25, 0.25) if kind == "pedestrian" else (rng.uniform(1.8, 2.6), rng.uniform(0.8, 1.1))
        agents.append(AgentState(f"a{j}", kind, Pose2D(px - math.sin(hdg) * off, py + math.cos(hdg) * off,
                                                       rng.uniform(-math.pi, math.pi)),
                                 rng.uniform(0, 15), rng.uniform(-0.3, 0.3), rng.uniform(-3, 2), ext))
    lon, lat = PIDController.longitudinal(), PIDController.lateral()
    for _ in range(int(rng.integers(0, 15))):
        lon.step(rng.uniform(-10, 10))
        lat.step(rng.uniform(-0.3, 0.3))
    prior = {a.id: int(rng.integers(0, 10)) for a in agents if rng.random() < 0.4}
    target = float(rng.choice([0.0, rng.uniform(0, 120)]))
    return ego, agents, route, target, lon, lat, prior


def test_c04_collision_checker_vs_brute_force(verdict):
    rng = np.random.default_rng(7)
    cfg, vehicle = HazardConfig(), VehicleParams()
    mismatches = hazards = 0
    for _ in range(200):
        ego, agents, route, target, lon, lat, prior = _collision_scene(rng)
        rep = check_collision_hazard(ego, agents, route, 0.0, target, lon, lat, prior, cfg, vehicle)
        want = brute_force_collision(ego, agents, route, 0.0, target, lon, lat, prior, cfg, vehicle)
        hazards += want[0]
        got = (rep.collision_hazard, rep.first_collision_frame, rep.colliding_agent, rep.dangerous_agents)
        mismatches += got != want
    verdict(mismatches == 0 and hazards > 0, f"200 scenes ({hazards} with a hazard), {mismatches} mismatches", 60)


RESOLUTION = 1e-4


def _random_row(rng):
    return np.array([rng.uniform(-6, 6), rng.uniform(-6, 6), rng.uniform(-math.pi, math.pi),
                     rng.uniform(0.2, 3.0), rng.uniform(0.2, 1.5)])


def _near_touching(rng, a, b):
    """Slide ``b`` along a random direction to first contact with ``a``, then offset by a tiny signed step."""
    u = rng.normal(size=2)
    u /= np.linalg.norm(u)
    pa = box_polygons(a)[0]

    def at(t):
        bb = b.copy()
        bb[:2] = a[:2] + u * t
        return bb

    lo, hi = 0.0, 20.0
    for _ in range(60):
        mid = (lo + hi) / 2
        if shapely.intersects(pa, box_polygons(at(mid))[0]):
            lo = mid
        else:
            hi = mid
    return at(hi + 10 ** rng.uniform(-6, -2) * rng.choice([-1, 1]))


def _unresolved_pair_ok(a, b, sat: bool) -> bool:
    """An undecided raster pair must touch within one cell diagonal, and SAT must match the exact verdict."""
    pa, pb = box_polygons(a)[0], box_polygons(b)[0]
    cell = math.sqrt(2) * RESOLUTION
    if pa.intersects(pb):
        within = not pa.buffer(-cell).intersects(pb.buffer(-cell))
        exact_known = pa.buffer(-1e-9).intersects(pb.buffer(-1e-9))
        return within and (sat or not exact_known)
    gap = pa.distance(pb)
    return gap <= cell and (not sat or gap <= 1e-9)


def test_c05_obb_overlap_vs_raster(verdict):
    rng = np.random.default_rng(11)
    pairs = []
    for i in range(10_000):
        a, b = _random_row(rng), _random_row(rng)
        pairs.append((a, _near_touching(rng, a, b) if i % 5 < 2 else b))
    got = kernels.overlap_rows(np.array([p[0] for p in pairs]), np.array([p[1] for p in pairs]))
    disagreements = unresolved = 0
    for (a, b), sat in zip(pairs, got):
        ref = raster_overlap(a, b, RESOLUTION)
        if ref is None:
            unresolved += 1
            disagreements += not _unresolved_pair_ok(a, b, bool(sat))
        else:
            disagreements += ref != bool(sat)
    verdict(disagreements == 0, f"10000 pairs (4000 near-touching), {disagreements} disagreements, "
                                f"{unresolved} undecided by the 0.1 mm raster and checked exactly", 60)


def test_c06_pid_fixtures_and_convergence(verdict):
    lon = PIDController.longitudinal().step(10.0)
    lat = PIDController.lateral().step(math.pi / 4)
    fixtures = abs(lon - 3.5) <= 1e-9 and abs(lat - 1.1 * math.pi / 4) <= 1e-9 and abs(lat - 0.8639) < 5e-5
    settle = {}
    for limit in (20.0, 40.0, 60.0, 90.0):
        res = run_scenario(scenario_from_dict(straight_scenario(length=1000.0, limit=limit, cap=20.0)))
        speeds = [(r["sim_time_s"], r["ego"]["speed_kmh"]) for r in res.frames]
        settle[limit] = next(t for t, _ in speeds
                             if all(abs(v - limit) <= 0.05 * limit for tt, v in speeds if tt >= t))
    ok = fixtures and all(t <= 10.0 for t in settle.values())
    verdict(ok, f"lon={lon:.10f} lat={lat:.10f}; settle times {settle}", 30)


def test_c07_determinism(verdict, bundled_runs):
    identical = all(a.to_jsonl() == b.to_jsonl() for _, a, b in bundled_runs.values())
    capped = [a for _, a, _ in bundled_runs.values() if a.terminated_by == "duration_cap"]
    bundled_counts = all(r.sim_frames == 400 and len(r.frames) == 40 for r in capped)
    empty = run_scenario(scenario_from_dict(straight_scenario(cap=20.0)))
    ok = identical and bundled_counts and (empty.sim_frames, len(empty.frames)) == (400, 40)
    verdict(ok, f"{len(bundled_runs)} scenarios byte-identical={identical}; 20 s cap -> "
                f"{empty.sim_frames} frames / {len(empty.frames)} records", 60)


def test_c08_expert_safety(verdict, bundled_runs):
    collisions = sum(a.infractions.collisions for _, a, _ in bundled_runs.values())
    red = next(a for spec, a, _ in bundled_runs.values() if spec.scenario_type == "signal_stop"
               and any(v.kind == "traffic_light" for v in spec.trigger_volumes))
    spec = next(s for s, a, _ in bundled_runs.values() if a is red)
    light_ids = [v.id for v in spec.trigger_volumes if v.kind == "traffic_light"]
    named = [r for r in red.frames if r["cot"]["final_decision"] == "Brake"
             and any(i in r["cot"]["reason"] for i in light_ids)]
    verdict(collisions == 0 and len(named) >= 1,
            f"{collisions} collisions over {len(bundled_runs)} scenarios; {len(named)} Brake frames naming "
            f"{light_ids}", 120)


def test_c09_evaluator_self_consistency(verdict, bundled_runs):
    records = [r for _, a, _ in bundled_runs.values() for r in a.frames]
    rep = evaluate_open_loop(records, records)
    self_ok = set(rep["f1"].values()) == {1.0} and rep["path_accuracy"]["overall"] == 100.0
    B, S = SpeedDecisionClass.Brake, SpeedDecisionClass.SpeedLimit
    half = f1_per_class({1: B, 2: B, 3: S}, {1: B, 2: S, 3: B})["Brake"] == 0.5
    wp = lambda deg: (math.cos(math.radians(deg)), math.sin(math.radians(deg)))
    bounds = path_accurate(wp(10), wp(11.5)) and not path_accurate(wp(10), wp(12.5)) \
        and path_accurate(wp(179.5), wp(-179.5))
    verdict(self_ok and half and bounds, f"{rep['frames']} frames, classes {sorted(rep['f1'])} at F1=1.0, "
                                         f"path acc {rep['path_accuracy']['overall']}%; fixtures ok={half and bounds}",
            10)


def test_c10_splits(verdict):
    types = ("signal_stop", "crossing_pedestrian", "lane_merge_cutin", "ahead_vehicle", "sharp_turn")
    rng = random.Random(3)
    corpus = [ScenarioInfo(f"syn_{i:04d}", rng.choices(types, weights=(5, 4, 3, 2, 1))[0],
                           rng.choice(("Brake", "SpeedLimit", "FollowAhead"))) for i in range(1000)]
    splits = make_splits(corpus, seed=0)
    sizes = {k: sum(v == k for v in splits.values()) for k in ("train", "val", "test")}
    atomic = set(splits) == {s.scenario_id for s in corpus} and len(splits) == 1000
    worst = 0.0
    for name in sizes:
        part = [s for s in corpus if splits[s.scenario_id] == name]
        for t in types:
            share = sum(s.scenario_type == t for s in part) / len(part)
            overall = sum(s.scenario_type == t for s in corpus) / len(corpus)
            worst = max(worst, abs(share - overall) * 100)
    deterministic = make_splits(list(reversed(corpus)), seed=0) == splits
    ok = sizes == {"train": 700, "val": 150, "test": 150} and atomic and worst <= 5.0 and deterministic
    verdict(ok, f"sizes {sizes}, max type-share gap {worst:.2f} points, deterministic={deterministic}", 10)
