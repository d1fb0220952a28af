"""Seeded generation of substrate networks and application workloads."""
from __future__ import annotations

import json
import zlib
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .model import (
    ResourceVector,
    SubstrateEdge,
    SubstrateNetwork,
    SubstrateNode,
    VirtualComponent,
    VirtualLink,
    VirtualRequest,
)

SCHEMA_VERSION = 1

TYPE_A = ResourceVector(cpu=16, memory=32768, storage=1000, gpu=0)
TYPE_B = ResourceVector(cpu=8, memory=16384, storage=1000, gpu=8)


class GenerationFailed(RuntimeError):
    pass


def rng_stream(seed: int, label: str) -> np.random.Generator:
    """Independent generator derived from a master seed and a fixed label."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), zlib.crc32(label.encode())]))


@dataclass
class SubstrateSpec:
    device_count: int = 20
    box: Tuple[float, float, float] = (1000.0, 1000.0, 200.0)
    radius_step: float = 10.0
    max_radius: Optional[float] = None  # radio range cap; None = no cap
    link_bandwidth: float = 100.0
    link_latency: float = 10.0
    max_attempts: int = 100


@dataclass
class AppSpec:
    components: Tuple[int, int] = (1, 5)
    cpu: Tuple[float, float] = (0.1, 2.0)
    memory: Tuple[float, float] = (100.0, 4096.0)
    storage: Tuple[float, float] = (1.0, 250.0)
    gpu_zero_prob: float = 0.5
    gpu_units: Tuple[int, int] = (1, 2)
    link_bandwidth: Tuple[float, float] = (5.0, 20.0)
    latency_bounds: Tuple[float, ...] = (20.0, 30.0, 50.0)


@dataclass
class WorkloadSpec:
    arrival_rate: float = 120.0  # apps / hour
    mean_lifetime_s: float = 45 * 60.0
    duration_h: float = 4.0


def _connecting_radius(dist: np.ndarray, step: float) -> float:
    """Smallest radius on the ``step`` grid that connects the point set."""
    n = len(dist)
    # bottleneck edge of a minimum spanning tree (Prim)
    in_tree = np.zeros(n, dtype=bool)
    in_tree[0] = True
    best = dist[0].copy()
    bottleneck = 0.0
    for _ in range(n - 1):
        cand = np.where(in_tree, np.inf, best)
        j = int(np.argmin(cand))
        bottleneck = max(bottleneck, cand[j])
        in_tree[j] = True
        best = np.minimum(best, dist[j])
    return float(np.ceil(bottleneck / step) * step) if n > 1 else step


def generate_substrate(spec: SubstrateSpec, seed: int) -> SubstrateNetwork:
    rng = rng_stream(seed, "substrate")
    box = np.asarray(spec.box, dtype=float)
    for _ in range(spec.max_attempts):
        pos = np.round(rng.uniform(0.0, 1.0, size=(spec.device_count, 3)) * box, 3)
        dist = np.linalg.norm(pos[:, None, :] - pos[None, :, :], axis=-1)
        radius = _connecting_radius(dist, spec.radius_step)
        if spec.max_radius is not None and radius > spec.max_radius:
            continue
        nodes = [
            SubstrateNode(i, tuple(float(x) for x in pos[i]), TYPE_A if i % 2 == 0 else TYPE_B, "A" if i % 2 == 0 else "B")
            for i in range(spec.device_count)
        ]
        edges = [
            SubstrateEdge(i, j, spec.link_bandwidth, spec.link_latency)
            for i in range(spec.device_count)
            for j in range(i + 1, spec.device_count)
            if dist[i, j] <= radius
        ]
        net = SubstrateNetwork(nodes, edges)
        if net.is_connected():
            return net
    raise GenerationFailed(f"no connected substrate after {spec.max_attempts} attempts")


def generate_application(
    spec: AppSpec, rng: np.random.Generator, request_id: int = 0, arrival_time: int = 0, lifetime: int = 0
) -> VirtualRequest:
    n = int(rng.integers(spec.components[0], spec.components[1] + 1))
    comps = []
    for i in range(n):
        cpu = round(float(rng.uniform(*spec.cpu)), 3)
        mem = int(round(rng.uniform(*spec.memory)))
        sto = int(round(rng.uniform(*spec.storage)))
        if rng.random() < spec.gpu_zero_prob:
            gpu = 0
        else:
            gpu = int(rng.integers(spec.gpu_units[0], spec.gpu_units[1] + 1))
        comps.append(VirtualComponent(i, ResourceVector(cpu, mem, sto, gpu)))
    pairs = [(i - 1, i) for i in range(1, n)]
    p_extra = 1.0 / n
    for i in range(n):
        for j in range(i + 2, n):
            if rng.random() < p_extra:
                pairs.append((i, j))
    links = []
    for a, b in pairs:
        bw = round(float(rng.uniform(*spec.link_bandwidth)), 1)
        bound = float(spec.latency_bounds[int(rng.integers(len(spec.latency_bounds)))])
        links.append(VirtualLink(a, b, bw, bound))
    return VirtualRequest(request_id, tuple(comps), tuple(links), arrival_time, lifetime)


def generate_workload(app_spec: AppSpec, wl: WorkloadSpec, seed: int) -> List[VirtualRequest]:
    """Poisson arrivals over the horizon; lifetimes are exponential."""
    if wl.arrival_rate <= 0 or wl.mean_lifetime_s <= 0 or wl.duration_h <= 0:
        raise ValueError("workload rates and duration must be positive")
    rng = rng_stream(seed, "workload")
    horizon_ms = wl.duration_h * 3600_000.0
    mean_gap_ms = 3600_000.0 / wl.arrival_rate
    t = 0.0
    out: List[VirtualRequest] = []
    while True:
        t += rng.exponential(mean_gap_ms)
        if t > horizon_ms:
            break
        lifetime = max(1, int(round(rng.exponential(wl.mean_lifetime_s * 1000.0))))
        out.append(generate_application(app_spec, rng, len(out), int(round(t)), lifetime))
    return out


@dataclass
class Scenario:
    substrate: SubstrateNetwork
    workload: List[VirtualRequest]
    seed: int = 0
    substrate_spec: SubstrateSpec = field(default_factory=SubstrateSpec)
    app_spec: AppSpec = field(default_factory=AppSpec)
    workload_spec: WorkloadSpec = field(default_factory=WorkloadSpec)

    def with_workload_seed(self, seed: int) -> "Scenario":
        """Same substrate, workload redrawn from ``seed``."""
        return Scenario(
            self.substrate,
            generate_workload(self.app_spec, self.workload_spec, seed),
            seed,
            self.substrate_spec,
            self.app_spec,
            self.workload_spec,
        )

    def summary(self) -> str:
        return (
            f"nodes={self.substrate.n_nodes} edges={self.substrate.n_edges} "
            f"apps={len(self.workload)} seed={self.seed}"
        )


def generate_scenario(
    seed: int,
    substrate_spec: Optional[SubstrateSpec] = None,
    app_spec: Optional[AppSpec] = None,
    workload_spec: Optional[WorkloadSpec] = None,
) -> Scenario:
    substrate_spec = substrate_spec or SubstrateSpec()
    app_spec = app_spec or AppSpec()
    workload_spec = workload_spec or WorkloadSpec()
    net = generate_substrate(substrate_spec, seed)
    return Scenario(net, generate_workload(app_spec, workload_spec, seed), seed, substrate_spec, app_spec, workload_spec)


# -- serialization ---------------------------------------------------------


def _rv(v: ResourceVector) -> list:
    return [v.cpu, v.memory, v.storage, v.gpu]


def scenario_to_dict(sc: Scenario) -> dict:
    net = sc.substrate
    return {
        "schema_version": SCHEMA_VERSION,
        "seed": sc.seed,
        "substrate_spec": asdict(sc.substrate_spec),
        "app_spec": asdict(sc.app_spec),
        "workload_spec": asdict(sc.workload_spec),
        "substrate": {
            "nodes": [{"id": n.id, "kind": n.kind, "position": list(n.position), "capacity": _rv(n.capacity)} for n in net.nodes],
            "edges": [{"u": e.u, "v": e.v, "bandwidth": e.bandwidth, "latency": e.latency} for e in net.edges],
        },
        "workload": [
            {
                "id": r.id,
                "arrival_time": r.arrival_time,
                "lifetime": r.lifetime,
                "components": [{"id": c.id, "demand": _rv(c.demand)} for c in r.components],
                "links": [[l.source, l.target, l.bandwidth, l.latency_bound] for l in r.links],
            }
            for r in sc.workload
        ],
    }


def _tuples(d: dict) -> dict:
    return {k: tuple(v) if isinstance(v, list) else v for k, v in d.items()}


def scenario_from_dict(data: dict) -> Scenario:
    version = data.get("schema_version")
    if version != SCHEMA_VERSION:
        raise ValueError(f"unsupported scenario schema version {version!r}")
    sub = data["substrate"]
    nodes = [SubstrateNode(n["id"], tuple(n["position"]), ResourceVector(*n["capacity"]), n.get("kind", "")) for n in sub["nodes"]]
    edges = [SubstrateEdge(e["u"], e["v"], e["bandwidth"], e["latency"]) for e in sub["edges"]]
    workload = [
        VirtualRequest(
            r["id"],
            tuple(VirtualComponent(c["id"], ResourceVector(*c["demand"])) for c in r["components"]),
            tuple(VirtualLink(*l) for l in r["links"]),
            r["arrival_time"],
            r["lifetime"],
        )
        for r in data["workload"]
    ]
    return Scenario(
        SubstrateNetwork(nodes, edges),
        workload,
        data["seed"],
        SubstrateSpec(**_tuples(data["substrate_spec"])),
        AppSpec(**_tuples(data["app_spec"])),
        WorkloadSpec(**data["workload_spec"]),
    )


def save_scenario(sc: Scenario, path) -> None:
    Path(path).write_text(json.dumps(scenario_to_dict(sc), sort_keys=True, separators=(",", ":")) + "\n")


def load_scenario(path) -> Scenario:
    return scenario_from_dict(json.loads(Path(path).read_text()))
