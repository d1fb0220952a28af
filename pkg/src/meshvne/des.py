"""Discrete-event simulation of arrivals, batched allocation, retries and departures."""
from __future__ import annotations

import heapq
import json
import logging
import math
from dataclasses import asdict, dataclass, field, fields, replace
from typing import Dict, List, Optional

from .greedy import GreedyAllocator, arrival_order
from .ilp import IlpAllocator
from .model import AuditError, ResidualState, VirtualRequest, scale_bandwidth, validate_allocations
from .nsga2 import Nsga2Allocator, NsgaParams
from .paths import build_catalog
from .scenario import AppSpec, Scenario, SubstrateSpec, WorkloadSpec, generate_scenario, rng_stream

log = logging.getLogger(__name__)

MS_PER_MIN = 60_000
MS_PER_H = 3_600_000

# same-timestamp ordering: resources freed at t are visible to the batch at t
DEPARTURE, ARRIVAL, RETRY_RELEASE, BATCH_TICK = 0, 1, 2, 3
_KIND_NAMES = {DEPARTURE: "departure", ARRIVAL: "arrival", RETRY_RELEASE: "retry_release", BATCH_TICK: "batch"}

ALLOCATORS = ("greedy", "ilp", "nsga2")


class ConfigInvalid(ValueError):
    pass


@dataclass
class SimulationConfig:
    arrival_rate: float = 120.0  # apps / hour
    departure_rate: float = 45.0  # see lifetime_model
    lifetime_model: str = "mean-minutes"  # "rate": mean 1/mu hours; "mean-minutes": mean mu minutes
    duration_h: float = 4.0
    retry_timeout_min: float = 16.0
    max_retries: int = 15
    batch_interval_min: float = 1.0
    alpha: float = 2.0**10
    reward_tau_min: float = 16.0
    solver_time_limit_s: Optional[float] = 60.0
    solver_node_limit: Optional[int] = 20_000
    k_paths: int = 4
    deploy_delay_ms: int = 0
    population: int = 50
    generations: int = 100
    crossover_rate: float = 0.8
    mutation_rate: float = 0.1
    audit: bool = True

    def validate(self) -> "SimulationConfig":
        positive = ("arrival_rate", "departure_rate", "duration_h", "retry_timeout_min", "batch_interval_min", "reward_tau_min")
        for name in positive:
            if not getattr(self, name) > 0:
                raise ConfigInvalid(f"{name} must be positive")
        if self.max_retries < 0 or self.k_paths < 1 or self.deploy_delay_ms < 0:
            raise ConfigInvalid("max_retries/k_paths/deploy_delay_ms out of range")
        if self.lifetime_model not in ("rate", "mean-minutes"):
            raise ConfigInvalid(f"unknown lifetime_model {self.lifetime_model!r}")
        return self

    @property
    def mean_lifetime_s(self) -> float:
        if self.lifetime_model == "rate":
            return 3600.0 / self.departure_rate
        return 60.0 * self.departure_rate

    @property
    def reward_cap(self) -> float:
        return self.max_retries * (self.retry_timeout_min / self.reward_tau_min)

    def workload_spec(self) -> WorkloadSpec:
        return WorkloadSpec(self.arrival_rate, self.mean_lifetime_s, self.duration_h)

    def with_overrides(self, overrides: Dict[str, object]) -> "SimulationConfig":
        types = {f.name: f.type for f in fields(self)}
        kw = {}
        for key, raw in overrides.items():
            key = key.split(".")[-1]
            if key not in types:
                raise ConfigInvalid(f"unknown config key {key!r}")
            kw[key] = _coerce(getattr(self, key), raw)
        return replace(self, **kw).validate()

    def to_dict(self) -> dict:
        return asdict(self)


def _coerce(current, raw):
    if not isinstance(raw, str):
        return raw
    if raw.lower() in ("none", "null"):
        return None
    if isinstance(current, bool):
        return raw.lower() in ("1", "true", "yes")
    if isinstance(current, int):
        return int(raw)
    if isinstance(current, float) or current is None:
        return float(raw)
    return raw


def compute_reward(now: int, arrival_time: int, reward_tau_ms: float, cap: Optional[float] = None) -> float:
    """2 ** ((now - arrival_time) / tau), exponent capped at ``cap``."""
    if now < arrival_time:
        raise ValueError("reward requested before arrival")
    exponent = (now - arrival_time) / reward_tau_ms
    if cap is not None:
        exponent = min(exponent, cap)
    return 2.0**exponent


@dataclass
class SimulationTrace:
    allocator: str
    seed: int
    horizon_ms: int
    network: object
    config: dict
    events: List[dict] = field(default_factory=list)
    status: Dict[int, str] = field(default_factory=dict)
    batches: List[dict] = field(default_factory=list)
    wall_times: List[float] = field(default_factory=list)

    def jsonl(self) -> str:
        return "".join(json.dumps(e, sort_keys=True, separators=(",", ":")) + "\n" for e in self.events)

    def meta(self) -> dict:
        return {
            "allocator": self.allocator,
            "seed": self.seed,
            "horizon_ms": self.horizon_ms,
            "config": self.config,
            "status": {str(k): v for k, v in sorted(self.status.items())},
            "batches": self.batches,
        }


def make_allocator(name: str, catalog, config: SimulationConfig):
    tau = config.reward_tau_min * MS_PER_MIN
    cap = config.reward_cap

    def reward(now, arrival):
        return compute_reward(now, arrival, tau, cap)

    if name == "greedy":
        return GreedyAllocator(catalog)
    if name == "ilp":
        return IlpAllocator(catalog, config.alpha, reward, config.solver_time_limit_s, config.solver_node_limit)
    if name == "nsga2":
        params = NsgaParams(config.population, config.generations, config.crossover_rate, config.mutation_rate)
        return Nsga2Allocator(catalog, params, reward)
    raise ConfigInvalid(f"unknown allocator {name!r}")


def _deploy_details(request: VirtualRequest, allocation) -> dict:
    return {
        "nodes": [allocation.node_assignment[c.id] for c in request.components],
        "demand": [list(c.demand.scaled()) for c in request.components],
        "links": [list(allocation.path_assignment[li].edges) for li in range(len(request.links))],
        "bandwidth": [scale_bandwidth(l.bandwidth) for l in request.links],
        "latency": [allocation.path_assignment[li].total_latency for li in range(len(request.links))],
        "bound": [l.latency_bound for l in request.links],
        "retries": request.retry_count,
    }


def run(scenario: Scenario, allocator: str, config: Optional[SimulationConfig] = None, seed: Optional[int] = None,
        catalog=None) -> SimulationTrace:
    config = (config or SimulationConfig()).validate()
    seed = scenario.seed if seed is None else seed
    network = scenario.substrate
    catalog = catalog or build_catalog(network, config.k_paths)
    alloc = make_allocator(allocator, catalog, config)
    alloc_rng = rng_stream(seed, "allocator")
    horizon = int(round(config.duration_h * MS_PER_H))
    interval = int(round(config.batch_interval_min * MS_PER_MIN))
    retry_ms = int(round(config.retry_timeout_min * MS_PER_MIN))

    trace = SimulationTrace(allocator, seed, horizon, network, config.to_dict())
    residual = ResidualState(network)
    queue: list = []
    seq = 0

    def push(t, kind, payload=None):
        nonlocal seq
        heapq.heappush(queue, (t, kind, seq, payload))
        seq += 1

    for req in scenario.workload:
        if req.arrival_time <= horizon:
            push(req.arrival_time, ARRIVAL, req)
    for k in range(1, horizon // interval + 1):
        push(k * interval, BATCH_TICK)

    pending: Dict[int, VirtualRequest] = {}
    live: Dict[int, tuple] = {}
    events = trace.events

    while queue:
        t, kind, _, payload = heapq.heappop(queue)
        if kind == ARRIVAL:
            pending[payload.id] = payload
            trace.status[payload.id] = "pending"
            events.append({"t": t, "kind": "arrival", "request_id": payload.id,
                           "details": {"components": len(payload.components), "links": len(payload.links)}})
        elif kind == RETRY_RELEASE:
            pending[payload.id] = payload
            events.append({"t": t, "kind": "retry_release", "request_id": payload.id,
                           "details": {"retries": payload.retry_count}})
        elif kind == DEPARTURE:
            request, _ = live.pop(payload)
            residual.release(payload)
            # a departed app is still counted as deployed
            events.append({"t": t, "kind": "departure", "request_id": payload, "details": {}})
        else:
            batch = arrival_order(pending.values())
            pending.clear()
            if not batch:
                continue
            outcomes, stats = alloc(batch, residual, t, alloc_rng)
            wall = stats.pop("wall_time", None)
            if wall is not None:
                trace.wall_times.append(wall)
            by_id = {o.request_id: o for o in outcomes}
            accepted = 0
            for req in batch:
                out = by_id[req.id]
                if out.accepted:
                    residual.apply(req, out.allocation)
                    live[req.id] = (req, out.allocation)
                    trace.status[req.id] = "deployed"
                    accepted += 1
                    events.append({"t": t, "kind": "deploy", "request_id": req.id,
                                   "details": _deploy_details(req, out.allocation)})
                    end = t + config.deploy_delay_ms + req.lifetime
                    if end <= horizon:
                        push(end, DEPARTURE, req.id)
                elif req.retry_count >= config.max_retries:
                    trace.status[req.id] = "rejected"
                    events.append({"t": t, "kind": "reject", "request_id": req.id, "details": {"retries": req.retry_count}})
                else:
                    retry = replace(req, retry_count=req.retry_count + 1)
                    events.append({"t": t, "kind": "fail", "request_id": req.id, "details": {"retries": req.retry_count}})
                    if t + retry_ms <= horizon:
                        push(t + retry_ms, RETRY_RELEASE, retry)
            trace.batches.append({"t": t, "size": len(batch), "accepted": accepted, **stats})
            if config.audit:
                problems = validate_allocations(network, live.values(), residual)
                if problems:
                    raise AuditError(f"t={t} {allocator}: " + "; ".join(problems[:5]))
    return trace


def default_scenario(seed: int, config: Optional[SimulationConfig] = None, devices: int = 20) -> Scenario:
    config = config or SimulationConfig()
    return generate_scenario(seed, SubstrateSpec(device_count=devices), AppSpec(), config.workload_spec())
