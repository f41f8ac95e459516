"""Corpus assembly: batch runs, scenario-atomic splits and distribution stats."""

from __future__ import annotations

import json
import logging
import math
import random
from collections import Counter, defaultdict
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence, Union

from .cot_policy import SPEED_CLASSES
from .sim import RunResult, run_scenario
from .world import ScenarioSpec, load_scenario

log = logging.getLogger(__name__)

SPLITS = ("train", "val", "test")
DEFAULT_RATIOS = (0.70, 0.15, 0.15)
SPEED_BIN_KMH = 5.0
MANIFEST_NAME = "manifest.json"


def bundled_scenario_paths() -> list[Path]:
    """TOML files shipped with the package, sorted by name."""
    root = resources.files("cotdrive") / "scenarios"
    return sorted(Path(str(p)) for p in root.iterdir() if p.name.endswith(".toml"))


def dominant_decision(frames: Sequence[Mapping]) -> str:
    """Most frequent final decision; ties go to the earlier class in SPEED_CLASSES."""
    counts = Counter(f["cot"]["final_decision"] for f in frames)
    if not counts:
        return "none"
    order = {c.value: i for i, c in enumerate(SPEED_CLASSES)}
    return min(counts, key=lambda k: (-counts[k], order.get(k, len(order)), k))


@dataclass(frozen=True)
class ScenarioInfo:
    """Metadata used for stratified splitting."""

    scenario_id: str
    scenario_type: str
    dominant: str = "none"

    @property
    def stratum(self) -> tuple[str, str]:
        return (self.scenario_type, self.dominant)


# --- splits -----------------------------------------------------------------


def split_targets(n: int, ratios: Sequence[float] = DEFAULT_RATIOS) -> list[int]:
    """Largest-remainder rounding of ``n * ratios``; ties go to the earlier split."""
    raw = [n * r for r in ratios]
    counts = [math.floor(x) for x in raw]
    order = sorted(range(len(ratios)), key=lambda i: (-(raw[i] - counts[i]), i))
    for i in order[: n - sum(counts)]:
        counts[i] += 1
    # keep every split with a positive ratio non-empty once n allows it
    for i, r in enumerate(ratios):
        if r > 0 and counts[i] == 0 and n >= sum(1 for x in ratios if x > 0):
            donor = max(range(len(counts)), key=lambda j: (counts[j], -j))
            counts[donor] -= 1
            counts[i] += 1
    return counts


def _check_ratios(ratios: Sequence[float]):
    if len(ratios) != len(SPLITS):
        raise ValueError(f"expected {len(SPLITS)} ratios, got {len(ratios)}")
    if any(r < 0 for r in ratios) or abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError("ratios must be non-negative and sum to 1")


def make_splits(scenarios: Sequence[ScenarioInfo], ratios: Sequence[float] = DEFAULT_RATIOS,
                seed: int = 0) -> dict[str, str]:
    """Assign each scenario id to train/val/test.

    Split sizes hit the largest-remainder targets exactly. Scenarios are
    visited stratum-interleaved (shuffled by ``seed`` within a stratum) and
    each goes to the open split whose share of that stratum lags its ratio most.
    """
    _check_ratios(ratios)
    if len(scenarios) < 3:
        raise ValueError("need at least 3 scenarios to split")
    ids = [s.scenario_id for s in scenarios]
    if len(set(ids)) != len(ids):
        raise ValueError("scenario ids must be unique")

    rng = random.Random(seed)
    strata: dict[tuple, list[ScenarioInfo]] = defaultdict(list)
    for s in sorted(scenarios, key=lambda s: s.scenario_id):
        strata[s.stratum].append(s)
    # interleave: the j-th member of a stratum of size m sits at (j + 0.5) / m
    queue = []
    for key in sorted(strata):
        members = strata[key]
        rng.shuffle(members)
        m = len(members)
        queue.extend(((j + 0.5) / m, key, j, s) for j, s in enumerate(members))
    queue.sort(key=lambda t: t[:3])

    capacity = split_targets(len(scenarios), ratios)
    used = [0] * len(SPLITS)
    per_stratum: dict[tuple, list[int]] = defaultdict(lambda: [0] * len(SPLITS))
    out = {}
    for _, key, _, s in queue:
        seen = per_stratum[key]
        total = sum(seen) + 1
        open_ = [k for k in range(len(SPLITS)) if used[k] < capacity[k]]
        k = max(open_, key=lambda k: (ratios[k] * total - seen[k], capacity[k] - used[k], -k))
        seen[k] += 1
        used[k] += 1
        out[s.scenario_id] = SPLITS[k]
    return dict(sorted(out.items()))


# --- stats ------------------------------------------------------------------


def speed_bin(speed_kmh: float, width: float = SPEED_BIN_KMH) -> int:
    """Index of the half-open bin [i * width, (i + 1) * width) holding ``speed_kmh``."""
    if not math.isfinite(speed_kmh) or speed_kmh < 0:
        raise ValueError(f"speed must be finite and >= 0, got {speed_kmh}")
    return int(math.floor(speed_kmh / width))


def histogram(bins: Counter, width: float = SPEED_BIN_KMH) -> dict:
    """Dense histogram from bin-index counts: ``edges`` has one more entry than ``counts``."""
    n = max(bins) + 1 if bins else 0
    return {"edges": [i * width for i in range(n + 1)], "counts": [bins.get(i, 0) for i in range(n)]}


@dataclass
class _Tally:
    frames: int = 0
    decisions: Counter = field(default_factory=Counter)
    aspects: Counter = field(default_factory=Counter)
    speed_hist: Counter = field(default_factory=Counter)

    def add(self, rec: Mapping):
        cot = rec["cot"]
        self.frames += 1
        self.decisions[cot["final_decision"]] += 1
        for aspect, label in sorted(cot.get("labels", {}).items()):
            if aspect != "final":
                self.aspects[f"{aspect}={label}"] += 1
        self.speed_hist[speed_bin(rec["ego"]["speed_kmh"])] += 1

    def as_dict(self) -> dict:
        decisions = {c.value: self.decisions.get(c.value, 0) for c in SPEED_CLASSES}
        return {
            "frames": self.frames,
            "final_decisions": decisions,
            "aspect_labels": dict(sorted(self.aspects.items())),
            "ego_speed_hist": histogram(self.speed_hist),
        }


def compute_stats(corpus: Iterable[Mapping], splits: Optional[Mapping[str, str]] = None) -> dict:
    """Decision, aspect-label and ego-speed counts for the whole corpus and per split.

    Frames of scenarios absent from ``splits`` are counted under ``unassigned``.
    """
    total = _Tally()
    by_split: dict[str, _Tally] = defaultdict(_Tally)
    for rec in corpus:
        total.add(rec)
        if splits is not None:
            by_split[splits.get(rec["scenario_id"], "unassigned")].add(rec)
    if total.frames == 0:
        raise ValueError("corpus is empty")
    out = {"total": total.as_dict()}
    if splits is not None:
        out["splits"] = {k: by_split[k].as_dict() for k in sorted(by_split)}
    return out


# --- batch ------------------------------------------------------------------


def _run_one(args) -> tuple[ScenarioSpec, RunResult]:
    spec, seed = args
    return spec, run_scenario(spec, seed)


def write_run(result: RunResult, out_dir: Path) -> tuple[Path, Path]:
    out_dir.mkdir(parents=True, exist_ok=True)
    log_path = out_dir / f"{result.scenario_id}.jsonl"
    res_path = out_dir / f"{result.scenario_id}.result.json"
    log_path.write_text(result.to_jsonl())
    res_path.write_text(json.dumps(result.summary(), indent=2, sort_keys=True) + "\n")
    return log_path, res_path


def run_batch(specs: Sequence[ScenarioSpec], out_dir: Union[str, Path], seed: int = 0,
              workers: int = 1, ratios: Sequence[float] = DEFAULT_RATIOS) -> dict:
    """Run every scenario, write logs and results, and return the manifest.

    Each scenario is an independent run, so ``workers > 1`` only changes
    wall time. Splits are attached when there are at least 3 scenarios.
    """
    out_dir = Path(out_dir)
    jobs = [(spec, seed) for spec in specs]
    if len({s.scenario_id for s in specs}) != len(specs):
        raise ValueError("scenario ids must be unique within a batch")
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            done = list(pool.map(_run_one, jobs))
    else:
        done = [_run_one(j) for j in jobs]

    entries, infos = [], []
    for spec, result in done:
        write_run(result, out_dir)
        dom = dominant_decision(result.frames)
        infos.append(ScenarioInfo(spec.scenario_id, spec.scenario_type, dom))
        entries.append({
            "scenario_id": spec.scenario_id,
            "scenario_type": spec.scenario_type,
            "weather": spec.weather,
            "time_of_day": spec.time_of_day,
            "records": len(result.frames),
            "sim_frames": result.sim_frames,
            "dominant_decision": dom,
            "log": f"{spec.scenario_id}.jsonl",
            "result": f"{spec.scenario_id}.result.json",
        })
    splits = make_splits(infos, ratios, seed) if len(infos) >= 3 else {}
    if not splits:
        log.warning("fewer than 3 scenarios; manifest carries no split assignment")
    for e in entries:
        e["split"] = splits.get(e["scenario_id"])
    manifest = {"seed": seed, "ratios": list(ratios), "scenarios": sorted(entries, key=lambda e: e["scenario_id"])}
    (out_dir / MANIFEST_NAME).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest


def load_manifest(corpus_dir: Union[str, Path]) -> dict:
    path = Path(corpus_dir) / MANIFEST_NAME
    try:
        return json.loads(path.read_text())
    except FileNotFoundError:
        raise ValueError(f"no {MANIFEST_NAME} in {corpus_dir}") from None


def iter_jsonl(path: Union[str, Path]):
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                yield json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path}:{lineno}: bad JSON: {exc}") from None


def iter_corpus(corpus_dir: Union[str, Path], manifest: Optional[dict] = None):
    corpus_dir = Path(corpus_dir)
    manifest = manifest or load_manifest(corpus_dir)
    for entry in manifest["scenarios"]:
        yield from iter_jsonl(corpus_dir / entry["log"])


def load_specs(paths: Sequence[Union[str, Path]]) -> list[ScenarioSpec]:
    """Scenario files, expanding directories to their ``*.toml`` members."""
    files: list[Path] = []
    for p in map(Path, paths):
        files.extend(sorted(p.glob("*.toml")) if p.is_dir() else [p])
    return [load_scenario(f) for f in files]
