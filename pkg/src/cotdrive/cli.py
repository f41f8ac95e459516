"""Command line entry points.

    cotdrive run --scenario s.toml --seed 1 --out runs/
    cotdrive batch --out corpus/ --seed 0
    cotdrive emit-splits --corpus corpus/ --seed 0
    cotdrive stats --corpus corpus/
    cotdrive eval-open-loop --gt g.jsonl --pred p.jsonl
    cotdrive eval-closed-loop --results corpus/
    cotdrive replay --log corpus/x.jsonl --scenario s.toml --seed 0

Exit status is 0 on success, 1 when a replay check fails and 2 on bad input.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

from . import _accel
from .config import PolicyConfig
from .dataset import (
    ScenarioInfo,
    bundled_scenario_paths,
    compute_stats,
    iter_corpus,
    iter_jsonl,
    load_manifest,
    load_specs,
    make_splits,
    run_batch,
    write_run,
)
from .metrics import closed_loop_score, evaluate_open_loop, report_json
from .sim import run_scenario
from .world import load_scenario

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

log = logging.getLogger("cotdrive")


class InputError(Exception):
    """Bad user input; reported without a traceback."""


def _emit(text: str, out: Optional[str]):
    if out:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _load_config(path: Optional[str]) -> Optional[PolicyConfig]:
    if path is None:
        return None
    return PolicyConfig.from_mapping(tomllib.loads(Path(path).read_text()))


def cmd_run(args) -> int:
    spec = load_scenario(args.scenario)
    result = run_scenario(spec, args.seed, _load_config(args.config))
    if args.out:
        log_path, res_path = write_run(result, Path(args.out))
        log.info("wrote %s and %s", log_path, res_path)
    else:
        sys.stdout.write(result.to_jsonl())
    return 0


def cmd_batch(args) -> int:
    paths = args.scenarios or bundled_scenario_paths()
    specs = load_specs(paths)
    if not specs:
        raise InputError("no scenario files found")
    manifest = run_batch(specs, args.out, seed=args.seed, workers=args.workers)
    log.info("ran %d scenarios into %s", len(manifest["scenarios"]), args.out)
    return 0


def cmd_emit_splits(args) -> int:
    manifest = load_manifest(args.corpus)
    infos = [ScenarioInfo(e["scenario_id"], e["scenario_type"], e.get("dominant_decision", "none"))
             for e in manifest["scenarios"]]
    splits = make_splits(infos, tuple(args.ratios), args.seed)
    _emit(json.dumps(splits, indent=2, sort_keys=True) + "\n", args.out)
    return 0


def cmd_stats(args) -> int:
    manifest = load_manifest(args.corpus)
    splits = {e["scenario_id"]: e["split"] for e in manifest["scenarios"] if e.get("split")}
    if args.splits:
        splits = json.loads(Path(args.splits).read_text())
    stats = compute_stats(iter_corpus(args.corpus, manifest), splits or None)
    _emit(report_json(stats), args.out)
    return 0


def cmd_eval_open_loop(args) -> int:
    report = evaluate_open_loop(iter_jsonl(args.gt), iter_jsonl(args.pred))
    _emit(report_json(report), args.out)
    return 0


def cmd_eval_closed_loop(args) -> int:
    files: list[Path] = []
    for p in map(Path, args.results):
        files.extend(sorted(p.glob("*.result.json")) if p.is_dir() else [p])
    if not files:
        raise InputError("no *.result.json files found")
    summaries = [json.loads(f.read_text()) for f in files]
    _emit(report_json(closed_loop_score(summaries)), args.out)
    return 0


def cmd_replay(args) -> int:
    recorded = Path(args.log).read_text()
    if args.scenario is None:
        for rec in iter_jsonl(args.log):
            e, cot = rec["ego"], rec["cot"]
            print(f"{rec['scenario_id']} t={rec['sim_time_s']:6.2f} x={e['x']:8.2f} y={e['y']:8.2f} "
                  f"v={e['speed_kmh']:5.1f} {cot['final_decision']:<12} | {cot['reason']}")
        return 0
    result = run_scenario(load_scenario(args.scenario), args.seed, _load_config(args.config))
    fresh = result.to_jsonl()
    if fresh == recorded:
        print(f"replay identical: {len(result.frames)} records")
        return 0
    old, new = recorded.splitlines(), fresh.splitlines()
    first = next((i for i, (a, b) in enumerate(zip(old, new)) if a != b), min(len(old), len(new)))
    print(f"replay differs at record {first} ({len(old)} recorded, {len(new)} replayed)")
    return 1


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="cotdrive", description="Rule-based driving expert with decision logging.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("run", help="simulate one scenario")
    s.add_argument("--scenario", required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--config", help="TOML policy overrides")
    s.add_argument("--out", help="directory for <id>.jsonl and <id>.result.json (default: JSONL to stdout)")
    s.set_defaults(fn=cmd_run)

    s = sub.add_parser("batch", help="simulate many scenarios and write a corpus")
    s.add_argument("--scenarios", nargs="*", help="files or directories (default: bundled corpus)")
    s.add_argument("--out", required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--workers", type=int, default=1)
    s.set_defaults(fn=cmd_batch)

    s = sub.add_parser("emit-splits", help="train/val/test assignment for a corpus")
    s.add_argument("--corpus", required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--ratios", type=float, nargs=3, default=[0.70, 0.15, 0.15])
    s.add_argument("--out")
    s.set_defaults(fn=cmd_emit_splits)

    s = sub.add_parser("stats", help="decision, aspect and speed distributions")
    s.add_argument("--corpus", required=True)
    s.add_argument("--splits", help="JSON from emit-splits (default: manifest splits)")
    s.add_argument("--out")
    s.set_defaults(fn=cmd_stats)

    s = sub.add_parser("eval-open-loop", help="per-class F1 and path accuracy")
    s.add_argument("--gt", required=True)
    s.add_argument("--pred", required=True)
    s.add_argument("--out")
    s.set_defaults(fn=cmd_eval_open_loop)

    s = sub.add_parser("eval-closed-loop", help="DS / RC / IS from run results")
    s.add_argument("--results", nargs="+", required=True)
    s.add_argument("--out")
    s.set_defaults(fn=cmd_eval_closed_loop)

    s = sub.add_parser("replay", help="print a log, or re-run its scenario and compare")
    s.add_argument("--log", required=True)
    s.add_argument("--scenario")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--config")
    s.set_defaults(fn=cmd_replay)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    log.debug("kernel backend: %s", _accel.backend_name())
    try:
        return args.fn(args)
    except (InputError, ValueError, KeyError, OSError, tomllib.TOMLDecodeError) as exc:
        print(f"cotdrive {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
