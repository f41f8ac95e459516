import json
import random
from collections import Counter

import pytest
from hypothesis import given
from hypothesis import strategies as st

from cotdrive.cot_policy import SPEED_CLASSES
from cotdrive.dataset import (
    ScenarioInfo,
    compute_stats,
    dominant_decision,
    iter_corpus,
    load_manifest,
    load_specs,
    make_splits,
    run_batch,
    speed_bin,
    split_targets,
)
from cotdrive.world import scenario_from_dict

from conftest import straight_scenario

TYPES = ("ahead_vehicle", "crossing_pedestrian", "signal_stop", "sharp_turn", "lane_merge")
CLASSES = [c.value for c in SPEED_CLASSES]


def infos(n, seed=0):
    rng = random.Random(seed)
    return [ScenarioInfo(f"s{i:04d}", rng.choice(TYPES), rng.choice(CLASSES[:3])) for i in range(n)]


def record(sid, frame, final="SpeedLimit", speed=30.0, labels=None):
    return {"scenario_id": sid, "frame": frame, "ego": {"speed_kmh": speed},
            "cot": {"final_decision": final, "labels": labels or {"light": "none"}}}


@pytest.mark.parametrize("n,want", [(20, [14, 3, 3]), (100, [70, 15, 15]), (3, [1, 1, 1]), (7, [5, 1, 1])])
def test_split_targets(n, want):
    assert split_targets(n) == want


@given(st.integers(3, 5000))
def test_split_targets_sum_and_bound(n):
    got = split_targets(n)
    assert sum(got) == n and min(got) >= 1
    assert all(abs(g - n * r) < 2 for g, r in zip(got, (0.7, 0.15, 0.15)))


def test_splits_partition_and_sizes():
    data = infos(20)
    splits = make_splits(data, seed=1)
    assert set(splits) == {s.scenario_id for s in data}
    assert Counter(splits.values()) == {"train": 14, "val": 3, "test": 3}


def test_splits_stratify_types():
    data = infos(1000, seed=5)
    splits = make_splits(data, seed=2)
    assert Counter(splits.values()) == {"train": 700, "val": 150, "test": 150}
    overall = Counter(s.scenario_type for s in data)
    for name in ("train", "val", "test"):
        part = [s for s in data if splits[s.scenario_id] == name]
        share = Counter(s.scenario_type for s in part)
        for t in TYPES:
            assert abs(share[t] / len(part) - overall[t] / len(data)) <= 0.05


def test_splits_deterministic_and_seeded():
    data = infos(200)
    assert make_splits(data, seed=4) == make_splits(list(reversed(data)), seed=4)
    assert make_splits(data, seed=4) != make_splits(data, seed=5)


def test_splits_reject_bad_input():
    with pytest.raises(ValueError):
        make_splits(infos(2))
    with pytest.raises(ValueError):
        make_splits([ScenarioInfo("a", "x"), ScenarioInfo("a", "y"), ScenarioInfo("b", "z")])
    with pytest.raises(ValueError):
        make_splits(infos(10), ratios=(0.5, 0.5, 0.5))


def test_dominant_decision_ties():
    frames = [record("a", 0, "Brake"), record("a", 10, "SpeedLimit")]
    order = {c: i for i, c in enumerate(CLASSES)}
    assert dominant_decision(frames) == min(("Brake", "SpeedLimit"), key=order.get)
    assert dominant_decision([]) == "none"


@pytest.mark.parametrize("v,b", [(0.0, 0), (4.999, 0), (5.0, 1), (60.0, 12), (64.9, 12)])
def test_speed_bin(v, b):
    assert speed_bin(v) == b


def test_speed_bin_rejects_negative():
    with pytest.raises(ValueError):
        speed_bin(-1.0)


def test_stats_single_brake_frame():
    stats = compute_stats([record("a", 0, "Brake", 60.0)])["total"]
    assert stats["frames"] == 1
    assert stats["final_decisions"]["Brake"] == 1
    assert sum(stats["final_decisions"].values()) == 1
    hist = stats["ego_speed_hist"]
    assert hist["counts"][12] == 1 and hist["edges"][12:14] == [60.0, 65.0]


def test_stats_match_recount():
    rng = random.Random(9)
    corpus = [record(f"s{i % 7}", i, rng.choice(CLASSES), rng.uniform(0, 90),
                     {"light": rng.choice(["none", "red_light"])}) for i in range(100)]
    splits = {f"s{i}": ("train", "val", "test")[i % 3] for i in range(6)}
    stats = compute_stats(corpus, splits)
    decisions = Counter(r["cot"]["final_decision"] for r in corpus)
    assert stats["total"]["final_decisions"] == {c: decisions.get(c, 0) for c in CLASSES}
    assert stats["total"]["aspect_labels"] == dict(Counter(f"light={r['cot']['labels']['light']}" for r in corpus))
    assert sum(stats["total"]["ego_speed_hist"]["counts"]) == 100
    assert sum(s["frames"] for s in stats["splits"].values()) == 100
    assert stats["splits"]["unassigned"]["frames"] == sum(r["scenario_id"] == "s6" for r in corpus)
    shuffled = corpus[:]
    rng.shuffle(shuffled)
    assert compute_stats(shuffled, splits) == stats


def test_stats_reject_empty():
    with pytest.raises(ValueError):
        compute_stats([])


def test_run_batch_manifest(tmp_path):
    specs = [scenario_from_dict(straight_scenario(sid=f"road_{i}", cap=3.0)) for i in range(3)]
    manifest = run_batch(specs, tmp_path, seed=7)
    assert manifest == load_manifest(tmp_path)
    assert [e["scenario_id"] for e in manifest["scenarios"]] == ["road_0", "road_1", "road_2"]
    assert sorted(e["split"] for e in manifest["scenarios"]) == ["test", "train", "val"]
    for e in manifest["scenarios"]:
        assert e["records"] == 6 and e["sim_frames"] == 60
        assert (tmp_path / e["log"]).exists()
        assert json.loads((tmp_path / e["result"]).read_text())["scenario_id"] == e["scenario_id"]
    assert len(list(iter_corpus(tmp_path))) == 18


def test_run_batch_workers_match_serial(tmp_path):
    specs = [scenario_from_dict(straight_scenario(sid=f"road_{i}", cap=2.0, speed=10.0 * i)) for i in range(3)]
    a = run_batch(specs, tmp_path / "a", seed=1)
    b = run_batch(specs, tmp_path / "b", seed=1, workers=2)
    assert a == b
    for e in a["scenarios"]:
        assert (tmp_path / "a" / e["log"]).read_bytes() == (tmp_path / "b" / e["log"]).read_bytes()


def test_load_specs_expands_directories():
    from cotdrive.dataset import bundled_scenario_paths
    paths = bundled_scenario_paths()
    specs = load_specs([paths[0].parent])
    assert len(specs) == len(paths) == 6
