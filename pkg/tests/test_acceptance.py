"""Acceptance suite: one PASS/FAIL line per criterion.

Heavy criteria (3-6) share one set of default-scenario runs: 20 devices,
4 simulated hours, five seeds, all three allocators.
"""
import time

import numpy as np
import pytest

from meshvne.cli import main as cli_main
from meshvne.des import SimulationConfig, compute_reward, default_scenario, run
from meshvne.ilp import PROVEN_OPTIMAL, brute_force_solve, build_model, solve
from meshvne.metrics import aggregate
from meshvne.model import ResidualState
from meshvne.nsga2 import NsgaParams, crowding_distance, evolve, fast_non_dominated_sort
from meshvne.paths import build_catalog
from meshvne.scenario import AppSpec, WorkloadSpec, generate_application, generate_workload, rng_stream

from conftest import CRITERIA
from instances import random_small_batch
from oracles import CROWDING_CASES, audit_trace, brute_force_fronts

SEEDS = (1, 2, 3, 4, 5)
ALLOCATORS = ("greedy", "ilp", "nsga2")
AUDITED = []  # (label, problems) from every simulation in this module


@pytest.fixture(autouse=True)
def _terminal(request):
    global _writer
    _writer = request.config.pluginmanager.get_plugin("terminalreporter")
    yield


_writer = None


def report(n, ok, detail):
    line = f"[criterion {n:2d}] {'PASS' if ok else 'FAIL'}  {detail}"
    CRITERIA.append(line)
    if _writer is not None:
        _writer.write_line("")
        _writer.write_line(line)
    assert ok, line


@pytest.fixture(scope="module")
def default_runs():
    cfg = SimulationConfig(solver_time_limit_s=10.0)
    traces, scenarios, timing = {a: [] for a in ALLOCATORS}, {}, {}
    for seed in SEEDS:
        sc = default_scenario(seed, cfg)
        catalog = build_catalog(sc.substrate, cfg.k_paths)
        scenarios[seed] = sc
        for name in ALLOCATORS:
            t0 = time.perf_counter()
            tr = run(sc, name, cfg, catalog=catalog)
            timing[(name, seed)] = time.perf_counter() - t0
            traces[name].append(tr)
            AUDITED.append((f"{name}/seed{seed}", audit_trace(tr, sc)))
    report_ = aggregate(traces)
    return report_.steady, traces, timing


def test_criterion_01_solver_matches_brute_force():
    t0 = time.perf_counter()
    mismatches, not_proven, accepted = [], 0, 0
    for seed in range(200):
        batch = random_small_batch(seed, max_nodes=4, max_apps=3, max_components=5, k=3)
        bb = solve(build_model(batch))
        bf = brute_force_solve(batch)
        not_proven += bb.status != PROVEN_OPTIMAL
        accepted += sum(a is not None for a in bf.decisions.values())
        if bb.objective != bf.objective:
            mismatches.append(seed)
    elapsed = time.perf_counter() - t0
    ok = not mismatches and not_proven == 0 and elapsed < 60
    report(1, ok, f"200 instances, {len(mismatches)} mismatches, {not_proven} not proven, "
                  f"{accepted} apps accepted by the oracle, {elapsed:.1f}s")


def test_criterion_03_acceptance_ordering(default_runs):
    steady, traces, timing = default_runs
    acc = {a: steady[a]["acceptance_ratio"] for a in ALLOCATORS}
    order_ok = acc["ilp"] - acc["nsga2"] >= 2 and acc["nsga2"] - acc["greedy"] >= 2
    ref = {"ilp": 62, "nsga2": 58, "greedy": 53}
    level_ok = all(abs(acc[a] - ref[a]) <= 10 for a in ALLOCATORS)
    limited = sum(b.get("status") != PROVEN_OPTIMAL for tr in traces["ilp"] for b in tr.batches)
    slowest = max(timing.values())
    # a binding solver limit makes the level check informational
    ok = order_ok and (level_ok or limited > 0) and slowest < 30 * 60
    report(3, ok, f"acceptance ilp={acc['ilp']:.1f} nsga2={acc['nsga2']:.1f} greedy={acc['greedy']:.1f}; "
                  f"ordering {'ok' if order_ok else 'violated'}; levels {'ok' if level_ok else 'off'}"
                  f"{' (informational: ' + str(limited) + ' ILP batches hit the limit)' if limited else ''}; "
                  f"slowest run {slowest:.0f}s")


def test_criterion_04_latency_ordering(default_runs):
    steady = default_runs[0]
    lat = {a: steady[a]["average_latency"] for a in ALLOCATORS}
    ok = (lat["nsga2"] < lat["ilp"] < lat["greedy"] and 6 <= lat["greedy"] <= 12
          and lat["ilp"] <= 6 and lat["nsga2"] <= 2.5)
    report(4, ok, f"latency ms nsga2={lat['nsga2']:.2f} ilp={lat['ilp']:.2f} greedy={lat['greedy']:.2f}")


def test_criterion_05_bandwidth_ordering(default_runs):
    steady = default_runs[0]
    bw = {a: steady[a]["bandwidth_utilization"] for a in ALLOCATORS}
    ok = bw["greedy"] > bw["ilp"] > bw["nsga2"] and 5 <= bw["greedy"] <= 12 and 1 <= bw["nsga2"] <= 4
    report(5, ok, f"bandwidth % greedy={bw['greedy']:.2f} ilp={bw['ilp']:.2f} nsga2={bw['nsga2']:.2f}")


def test_criterion_06_max_resource_ordering(default_runs):
    steady = default_runs[0]
    mr = {a: steady[a]["max_resource_use"] for a in ALLOCATORS}
    ref = {"ilp": 80, "nsga2": 73, "greedy": 65}
    ok = mr["ilp"] > mr["nsga2"] > mr["greedy"] and all(abs(mr[a] - ref[a]) <= 10 for a in ALLOCATORS)
    mean = {a: steady[a]["mean_resource_use"] for a in ALLOCATORS}
    report(6, ok, f"max resource % ilp={mr['ilp']:.1f} nsga2={mr['nsga2']:.1f} greedy={mr['greedy']:.1f} "
                  f"(device-mean: ilp={mean['ilp']:.1f} nsga2={mean['nsga2']:.1f} greedy={mean['greedy']:.1f})")


def test_criterion_07_nsga_internals():
    rng = np.random.default_rng(7)
    sort_bad = 0
    for i in range(100):
        # alternate continuous and tie-heavy populations
        objs = rng.random((50, 2)) if i % 2 else rng.integers(0, 5, size=(50, 2)).astype(float)
        sort_bad += fast_non_dominated_sort(objs) != brute_force_fronts(objs.tolist())
    crowd_bad = sum(not np.allclose(crowding_distance(np.asarray(f, float)), e) for f, e in CROWDING_CASES)

    cfg = SimulationConfig()
    sc = default_scenario(1, cfg)
    catalog = build_catalog(sc.substrate, cfg.k_paths)
    regressions, logged = 0, 0
    for start in (0, 40, 80, 120, 160):
        pending = sc.workload[start:start + 20]
        rewards = [compute_reward(pending[-1].arrival_time, r.arrival_time, 16 * 60_000, 15) for r in pending]
        res = evolve(pending, ResidualState(sc.substrate), catalog, NsgaParams(), rng_stream(start, "allocator"),
                     rewards, keep_history=True)
        best = np.array([h.min(axis=0) for h in res.history])
        logged += len(best)
        regressions += int((np.diff(best, axis=0) > 0).sum())
    ok = sort_bad == 0 and crowd_bad == 0 and regressions == 0
    report(7, ok, f"sort mismatches {sort_bad}/100, crowding mismatches {crowd_bad}/{len(CROWDING_CASES)}, "
                  f"elitism regressions {regressions} over {logged} logged generations")


def test_criterion_08_determinism(tmp_path):
    scen = tmp_path / "s.json"
    assert cli_main(["generate", "--devices", "8", "--duration-h", "1", "--seed", "3", "--out", str(scen)]) == 0
    base = ["run", "--scenario", str(scen), "--allocators", ",".join(ALLOCATORS), "--seeds", "1..2"]
    outs = [tmp_path / n for n in ("a", "b", "c")]
    codes = [cli_main(base + ["--jobs", "1", "--out", str(outs[0])]),
             cli_main(base + ["--jobs", "1", "--out", str(outs[1])]),
             cli_main(base + ["--jobs", "3", "--out", str(outs[2])])]
    files = sorted(p.relative_to(outs[0]) for p in outs[0].rglob("*")
                   if p.is_file() and p.suffix in (".jsonl", ".csv") or p.name == "summary.json")
    differing = [str(f) for f in files for o in outs[1:] if (outs[0] / f).read_bytes() != (o / f).read_bytes()]
    # default-scenario check on one full run per allocator
    cfg = SimulationConfig(solver_time_limit_s=10.0)
    sc = default_scenario(2, cfg)
    full_same = all(run(sc, a, cfg).jsonl() == run(sc, a, cfg).jsonl() for a in ALLOCATORS)
    ok = codes == [0, 0, 0] and not differing and len(files) >= 6 + 18 and full_same
    report(8, ok, f"{len(files)} artifacts compared across 2 invocations and --jobs 1 vs 3, "
                  f"{len(differing)} differ; default-scenario reruns identical: {full_same}")


def test_criterion_09_workload_statistics():
    spec = AppSpec()
    rng = rng_stream(9, "workload")
    apps = [generate_application(spec, rng, i) for i in range(100_000)]
    n_comp = np.array([len(a.components) for a in apps])
    d = np.array([[c.demand.cpu, c.demand.memory, c.demand.storage, c.demand.gpu] for a in apps for c in a.components])
    bw = np.array([l.bandwidth for a in apps for l in a.links])
    bounds = {l.latency_bound for a in apps for l in a.links}
    in_range = (n_comp.min() >= 1 and n_comp.max() <= 5 and d[:, 0].min() >= 0.1 and d[:, 0].max() <= 2.0
                and d[:, 1].min() >= 100 and d[:, 1].max() <= 4096 and d[:, 2].min() >= 1 and d[:, 2].max() <= 250
                and set(np.unique(d[:, 3])) <= {0, 1, 2} and bw.min() >= 5 and bw.max() <= 20
                and bounds == {20.0, 30.0, 50.0})
    gpu = d[:, 3]
    checks = {
        "components": (n_comp.mean(), 3.0),
        "cpu": (d[:, 0].mean(), 1.05),
        "memory": (d[:, 1].mean(), 2098.0),
        "storage": (d[:, 2].mean(), 125.5),
        "link bandwidth": (bw.mean(), 12.5),
        # 0 with probability 1/2, else uniform on {1, 2}
        "gpu": (gpu.mean(), 0.75),
        "gpu | nonzero": (gpu[gpu > 0].mean(), 1.5),
    }
    rel = {k: abs(v - m) / m for k, (v, m) in checks.items()}
    wl = generate_workload(spec, WorkloadSpec(duration_h=100_000 / 120), seed=9)
    gaps = np.diff([0] + [r.arrival_time for r in wl]) / 1000.0
    gap_rel = abs(gaps.mean() - 30.0) / 30.0
    ok = in_range and max(rel.values()) <= 0.02 and gap_rel <= 0.03
    worst = max(rel, key=rel.get)
    report(9, ok, f"ranges {'exact' if in_range else 'VIOLATED'}; worst mean deviation {worst} {100 * rel[worst]:.2f}%; "
                  f"inter-arrival mean {gaps.mean():.2f}s over {len(gaps)} arrivals ({100 * gap_rel:.2f}%)")


def test_criterion_10_reward_function():
    tau = 16 * 60_000
    cap = SimulationConfig().reward_cap
    exps = range(int(cap) + 1)
    exact = all(compute_reward(k * tau, 0, tau, cap) == 2.0**k for k in exps)
    offset = all(compute_reward(1234 + k * tau, 1234, tau, cap) == 2.0**k for k in exps)
    capped = compute_reward(10 * int(cap) * tau, 0, tau, cap) == 2.0**cap
    report(10, exact and offset and capped, f"exponents 0..{int(cap)} exact: {exact and offset}; cap holds: {capped}")


def test_criterion_02_constraint_audit(default_runs):
    # runs last so it sees every simulation above; the engine's own per-batch audit raised on nothing
    extra_cfg = SimulationConfig(duration_h=1.0)
    for seed in (11, 12):
        sc = default_scenario(seed, extra_cfg, devices=6)
        for name in ALLOCATORS:
            AUDITED.append((f"{name}/small{seed}", audit_trace(run(sc, name, extra_cfg), sc)))
    bad = [(label, p[:3]) for label, p in AUDITED if p]
    report(2, not bad, f"{len(AUDITED)} traces re-audited at every event, {len(bad)} with violations"
                       + (f": {bad[:2]}" if bad else ""))
