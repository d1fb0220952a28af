"""Time the NSGA-II kernels with numba on and off.

    python3 benchmarks/bench_kernels.py [--apps 15] [--reps 20]

Each backend runs in its own interpreter (the toggle is read at import time)
and both must produce identical objective arrays.
"""
import argparse
import hashlib
import json
import os
import subprocess
import sys
import time

import numpy as np


def measure(apps: int, reps: int) -> dict:
    from meshvne import kernels
    from meshvne.des import default_scenario
    from meshvne.model import ResidualState
    from meshvne.nsga2 import BatchArrays, NsgaParams, evolve
    from meshvne.paths import build_catalog

    sc = default_scenario(1)
    catalog = build_catalog(sc.substrate, 4)
    pending = sc.workload[:apps]
    residual = ResidualState(sc.substrate)
    arrays = BatchArrays(pending, residual, catalog, [1.0] * len(pending))
    rng = np.random.default_rng(0)
    pop = rng.integers(0, sc.substrate.n_nodes, size=(50, arrays.n_genes))
    objs = rng.random((100, 2))

    # first calls pay any jit compile / cache load cost
    t0 = time.perf_counter()
    arrays.decode(pop)
    kernels.non_dominated_rank(objs)
    kernels.crowding_distance(objs)
    warmup = time.perf_counter() - t0

    timings = {}
    t0 = time.perf_counter()
    for _ in range(reps):
        out, _, _ = arrays.decode(pop)
    timings["decode_population_50"] = (time.perf_counter() - t0) / reps
    t0 = time.perf_counter()
    for _ in range(reps):
        kernels.non_dominated_rank(objs)
    timings["non_dominated_rank_100"] = (time.perf_counter() - t0) / reps
    t0 = time.perf_counter()
    for _ in range(reps):
        kernels.crowding_distance(objs)
    timings["crowding_distance_100"] = (time.perf_counter() - t0) / reps
    t0 = time.perf_counter()
    res = evolve(pending, residual, catalog, NsgaParams(generations=20), np.random.default_rng(1))
    timings["evolve_20_generations"] = time.perf_counter() - t0
    digest = hashlib.sha256(out.tobytes() + res.objectives.tobytes()).hexdigest()[:16]
    return {"numba": kernels.USE_NUMBA, "warmup_s": warmup, "timings": timings, "digest": digest}


def run_backend(disable: bool, apps: int, reps: int) -> dict:
    env = dict(os.environ, MESHVNE_DISABLE_NUMBA="1" if disable else "0")
    cmd = [sys.executable, __file__, "--child", "--apps", str(apps), "--reps", str(reps)]
    out = subprocess.run(cmd, env=env, check=True, capture_output=True, text=True).stdout
    return json.loads(out.strip().splitlines()[-1])


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--apps", type=int, default=15)
    ap.add_argument("--reps", type=int, default=20)
    ap.add_argument("--child", action="store_true", help=argparse.SUPPRESS)
    args = ap.parse_args()
    if args.child:
        print(json.dumps(measure(args.apps, args.reps)))
        return 0

    jit = run_backend(False, args.apps, args.reps)
    ref = run_backend(True, args.apps, args.reps)
    print(f"{'kernel':28s}{'numba ms':>12s}{'numpy ms':>12s}{'speedup':>10s}")
    for name in jit["timings"]:
        a, b = jit["timings"][name] * 1e3, ref["timings"][name] * 1e3
        print(f"{name:28s}{a:12.3f}{b:12.3f}{b / a:10.1f}x")
    print(f"warmup: numba {jit['warmup_s']:.2f}s, numpy {ref['warmup_s']:.2f}s")
    same = jit["digest"] == ref["digest"]
    print("outputs identical" if same else "OUTPUT MISMATCH between backends")
    return 0 if same else 1


if __name__ == "__main__":
    sys.exit(main())
