"""Command-line front end: ``generate``, ``run`` and ``compare``.

Exit codes: 0 ok, 2 usage, 3 generation failure, 4 audit failure,
5 ordering check failed under ``compare --strict``.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, List, Optional, Sequence

from . import des
from .metrics import METRICS, aggregate
from .model import AuditError
from .paths import DisconnectedNetwork
from .scenario import (AppSpec, GenerationFailed, SubstrateSpec, WorkloadSpec, generate_scenario, load_scenario,
                       save_scenario)

log = logging.getLogger("meshvne")

EXIT_OK, EXIT_USAGE, EXIT_GENERATION, EXIT_AUDIT, EXIT_STRICT = 0, 2, 3, 4, 5

# steady-state reference levels the comparison table is checked against
REFERENCE = {
    "acceptance_ratio": {"ilp": 62.0, "nsga2": 58.0, "greedy": 53.0},
    "average_latency": {"nsga2": 1.0, "ilp": 4.0, "greedy": 8.5},
    "bandwidth_utilization": {"greedy": 8.5, "nsga2": 2.5},
    "max_resource_use": {"ilp": 80.0, "nsga2": 73.0, "greedy": 65.0},
}


class UsageError(Exception):
    pass


@dataclass
class RunManifest:
    scenario: str
    allocators: List[str]
    seeds: List[int]
    overrides: Dict[str, object] = field(default_factory=dict)
    out: str = "results"
    scenario_sha256: str = ""

    def to_json(self) -> str:
        return json.dumps(self.__dict__, sort_keys=True, indent=2) + "\n"

    @classmethod
    def from_file(cls, path) -> "RunManifest":
        data = json.loads(Path(path).read_text())
        return cls(**data)


# -- parsing helpers ----------------------------------------------------------


def parse_seeds(text: str) -> List[int]:
    """``"1..5"``, ``"1,3,7"`` or a mix such as ``"1..3,9"``."""
    seeds: List[int] = []
    try:
        for part in text.split(","):
            part = part.strip()
            if ".." in part:
                lo, hi = part.split("..")
                seeds.extend(range(int(lo), int(hi) + 1))
            elif part:
                seeds.append(int(part))
    except ValueError:
        raise UsageError(f"bad seed list {text!r}") from None
    if not seeds:
        raise UsageError("empty seed list")
    return seeds


def parse_allocators(text: str) -> List[str]:
    names = [n.strip() for n in text.split(",") if n.strip()]
    unknown = [n for n in names if n not in des.ALLOCATORS]
    if unknown or not names:
        raise UsageError(f"unknown allocators {unknown}; choose from {','.join(des.ALLOCATORS)}")
    return names


def parse_overrides(items: Sequence[str]) -> Dict[str, str]:
    out = {}
    for item in items or ():
        if "=" not in item:
            raise UsageError(f"override {item!r} is not key=value")
        k, v = item.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def load_config_file(path) -> Dict[str, object]:
    """Flat JSON object whose keys are (optionally dotted) config field names."""
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from None
    if not isinstance(data, dict):
        raise UsageError("config file must hold a flat JSON object")
    return data


def build_config(overrides: Dict[str, object], duration_h: Optional[float] = None) -> des.SimulationConfig:
    base = des.SimulationConfig()
    if duration_h is not None:
        base = replace(base, duration_h=duration_h)
    try:
        return base.with_overrides(overrides)
    except (des.ConfigInvalid, ValueError) as exc:
        raise UsageError(str(exc)) from None


# -- generate -----------------------------------------------------------------


def cmd_generate(args) -> int:
    cfg = build_config(parse_overrides(args.override), args.duration_h)
    try:
        sc = generate_scenario(args.seed, SubstrateSpec(device_count=args.devices), AppSpec(), cfg.workload_spec())
    except (GenerationFailed, DisconnectedNetwork) as exc:
        log.error("generation failed: %s", exc)
        return EXIT_GENERATION
    save_scenario(sc, args.out)
    print(sc.summary())
    return EXIT_OK


# -- run ----------------------------------------------------------------------


def _scenario_for_seed(base, seed: int):
    return base if seed == base.seed else base.with_workload_seed(seed)


def _run_one(job):
    scenario_path, allocator, seed, overrides, duration_h = job
    base = load_scenario(scenario_path)
    cfg = build_config(overrides, duration_h)
    trace = des.run(_scenario_for_seed(base, seed), allocator, cfg, seed=seed)
    return allocator, seed, trace


def execute(manifest: RunManifest, jobs: int = 1) -> int:
    out = Path(manifest.out)
    scenario_path = Path(manifest.scenario)
    if not scenario_path.exists():
        raise UsageError(f"scenario {scenario_path} not found")
    base = load_scenario(scenario_path)
    manifest.scenario_sha256 = hashlib.sha256(scenario_path.read_bytes()).hexdigest()
    duration_h = base.workload_spec.duration_h
    build_config(manifest.overrides, duration_h)  # fail fast on bad overrides

    (out / "traces").mkdir(parents=True, exist_ok=True)
    (out / "metrics").mkdir(parents=True, exist_ok=True)
    (out / "manifest.json").write_text(manifest.to_json())

    work = [(str(scenario_path), a, s, manifest.overrides, duration_h) for a in manifest.allocators for s in manifest.seeds]
    try:
        if jobs > 1 and len(work) > 1:
            with ProcessPoolExecutor(max_workers=jobs) as pool:
                results = list(pool.map(_run_one, work))
        else:
            results = [_run_one(w) for w in work]
    except AuditError as exc:
        log.error("audit failure: %s", exc)
        return EXIT_AUDIT

    traces: Dict[str, list] = {}
    for allocator, seed, trace in results:
        stem = out / "traces" / f"{allocator}_seed{seed}"
        stem.with_suffix(".jsonl").write_text(trace.jsonl())
        stem.with_suffix(".meta.json").write_text(json.dumps(trace.meta(), sort_keys=True) + "\n")
        traces.setdefault(allocator, []).append(trace)
        if trace.wall_times:
            log.info("%s seed %d: %d batches, solver wall %.2fs", allocator, seed, len(trace.batches), sum(trace.wall_times))

    report = aggregate(traces)
    for allocator in sorted(traces):
        for metric in METRICS:
            (out / "metrics" / f"{allocator}_{metric}.csv").write_text(report.csv(allocator, metric))
    (out / "summary.json").write_text(report.summary_json())
    print(f"wrote {len(results)} runs to {out}")
    return EXIT_OK


def default_jobs(n_runs: int) -> int:
    return max(1, min(n_runs, os.cpu_count() or 1))


def cmd_run(args) -> int:
    if args.manifest:
        manifest = RunManifest.from_file(args.manifest)
        if args.out:
            manifest.out = args.out
    else:
        if not args.scenario:
            raise UsageError("--scenario or --manifest is required")
        overrides: Dict[str, object] = {}
        if args.config:
            overrides.update(load_config_file(args.config))
        overrides.update(parse_overrides(args.override))
        manifest = RunManifest(args.scenario, parse_allocators(args.allocators), parse_seeds(args.seeds),
                               overrides, args.out or "results")
    jobs = args.jobs or default_jobs(len(manifest.allocators) * len(manifest.seeds))
    return execute(manifest, jobs)


# -- compare ------------------------------------------------------------------


def merge_summaries(paths: Sequence[str]) -> Dict[str, Dict[str, float]]:
    steady: Dict[str, Dict[str, float]] = {}
    for p in paths:
        try:
            data = json.loads(Path(p).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read summary {p}: {exc}") from None
        for allocator, metrics in data.get("steady_state", {}).items():
            steady.setdefault(allocator, {}).update(metrics)
    return steady


def _ordered(steady, metric, names, gap=0.0):
    vals = [steady[n][metric] for n in names]
    return all(a - b >= gap and a > b for a, b in zip(vals, vals[1:]))


def ordering_checks(steady: Dict[str, Dict[str, float]]) -> List[tuple]:
    """(label, passed) for each ordering/level check whose allocators are present."""
    have = set(steady)
    checks = []

    def within(metric, name, lo, hi):
        v = steady[name][metric]
        return lo <= v <= hi

    if {"ilp", "nsga2", "greedy"} <= have:
        acc = "acceptance_ratio"
        checks.append(("acceptance ilp >= nsga2 >= greedy, gaps >= 2", _ordered(steady, acc, ["ilp", "nsga2", "greedy"], 2.0)))
        checks.append(("acceptance within 10 of 62/58/53",
                       all(abs(steady[n][acc] - REFERENCE[acc][n]) <= 10 for n in ("ilp", "nsga2", "greedy"))))
        lat = "average_latency"
        checks.append(("latency nsga2 < ilp < greedy", _ordered(steady, lat, ["greedy", "ilp", "nsga2"])))
        checks.append(("latency greedy in [6,12], ilp <= 6, nsga2 <= 2.5",
                       within(lat, "greedy", 6, 12) and steady["ilp"][lat] <= 6 and steady["nsga2"][lat] <= 2.5))
        bw = "bandwidth_utilization"
        checks.append(("bandwidth greedy > ilp > nsga2", _ordered(steady, bw, ["greedy", "ilp", "nsga2"])))
        checks.append(("bandwidth greedy in [5,12], nsga2 in [1,4]", within(bw, "greedy", 5, 12) and within(bw, "nsga2", 1, 4)))
        mr = "max_resource_use"
        checks.append(("max resource ilp > nsga2 > greedy", _ordered(steady, mr, ["ilp", "nsga2", "greedy"])))
        checks.append(("max resource within 10 of 80/73/65",
                       all(abs(steady[n][mr] - REFERENCE[mr][n]) <= 10 for n in ("ilp", "nsga2", "greedy"))))
    return checks


def format_table(steady: Dict[str, Dict[str, float]]) -> str:
    names = sorted(steady)
    lines = ["metric".ljust(24) + "".join(n.rjust(12) for n in names)]
    for m in METRICS:
        if any(m in steady[n] for n in names):
            lines.append(m.ljust(24) + "".join(f"{steady[n].get(m, float('nan')):12.2f}" for n in names))
    return "\n".join(lines)


def cmd_compare(args) -> int:
    if len(args.summaries) < 1:
        raise UsageError("compare needs at least one summary file")
    steady = merge_summaries(args.summaries)
    print(format_table(steady))
    failed = 0
    for label, ok in ordering_checks(steady):
        print(f"{'PASS' if ok else 'FAIL'}  {label}")
        failed += not ok
    return EXIT_STRICT if (args.strict and failed) else EXIT_OK


# -- entry point --------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="meshvne", description="Mesh edge VNE simulator")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    g = sub.add_parser("generate", help="write a scenario file")
    g.add_argument("--devices", type=int, default=20)
    g.add_argument("--duration-h", type=float, default=4.0)
    g.add_argument("--seed", type=int, default=1)
    g.add_argument("--out", required=True)
    g.add_argument("--override", action="append", default=[], metavar="KEY=VALUE")
    g.set_defaults(func=cmd_generate)

    r = sub.add_parser("run", help="simulate allocators over seeds")
    r.add_argument("--scenario")
    r.add_argument("--manifest", help="re-run from a manifest.json")
    r.add_argument("--allocators", default=",".join(des.ALLOCATORS))
    r.add_argument("--seeds", default="1")
    r.add_argument("--jobs", type=int, default=None)
    r.add_argument("--out")
    r.add_argument("--config", help="flat JSON of config keys; --override wins")
    r.add_argument("--override", action="append", default=[], metavar="KEY=VALUE")
    r.set_defaults(func=cmd_run)

    c = sub.add_parser("compare", help="tabulate summaries and check orderings")
    c.add_argument("summaries", nargs="+")
    c.add_argument("--strict", action="store_true")
    c.set_defaults(func=cmd_compare)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    logging.basicConfig(level=os.environ.get("MESHVNE_LOG", "WARNING").upper(),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args = build_parser().parse_args(argv)
        if getattr(args, "devices", 1) is not None and getattr(args, "devices", 1) < 1:
            raise UsageError("--devices must be >= 1")
        return args.func(args)
    except UsageError as exc:
        print(f"meshvne: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
