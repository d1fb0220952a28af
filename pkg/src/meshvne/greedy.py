"""Reference allocation: oldest app first, biggest component first, nearest device first."""
from __future__ import annotations

from typing import List, Optional, Sequence

import numpy as np

from .model import Allocation, Outcome, ResidualState, VirtualComponent, VirtualRequest, scale_bandwidth
from .paths import PathCatalog, feasible_paths


def component_demand_rank(component: VirtualComponent, max_capacity: Sequence[float]) -> float:
    """Sum of the demand fields, each normalised by the network maximum."""
    return float(sum(d / m for d, m in zip(component.demand.scaled(), max_capacity)))


def arrival_order(pending: Sequence[VirtualRequest]) -> List[VirtualRequest]:
    return sorted(pending, key=lambda r: (r.arrival_time, r.id))


class _DeviceRanker:
    def __init__(self, residual: ResidualState, hops: np.ndarray):
        self.cap = residual.node_capacity
        self.maxcap = np.maximum(self.cap.max(axis=0), 1).astype(float)
        self.hops = hops
        self.has = self.cap > 0

    def order(self, res: np.ndarray, demand, origin: Optional[int]) -> List[int]:
        feasible = np.flatnonzero((res >= demand).all(axis=1))
        if feasible.size == 0:
            return []
        avail = (res[feasible] / self.maxcap).sum(axis=1)
        used = np.where(self.has[feasible], (self.cap[feasible] - res[feasible]) / np.maximum(self.cap[feasible], 1), 0.0)
        load = used.sum(axis=1) / np.maximum(self.has[feasible].sum(axis=1), 1)
        if origin is None:
            keys = [(-avail[i], load[i], int(n)) for i, n in enumerate(feasible)]
        else:
            keys = [(int(self.hops[origin, n]), -avail[i], load[i], int(n)) for i, n in enumerate(feasible)]
        return [k[-1] for k in sorted(keys)]


def place_request_greedy(
    request: VirtualRequest,
    res: np.ndarray,
    eres: np.ndarray,
    catalog: PathCatalog,
    ranker: _DeviceRanker,
) -> Outcome:
    """Place one app in place on (res, eres); on failure both are left untouched."""
    comps = sorted(
        request.components, key=lambda c: (-component_demand_rank(c, ranker.maxcap), c.id)
    )
    node_res = res.copy()
    edge_res = eres.copy()
    assignment = {}
    origin = None
    for comp in comps:
        demand = np.array(comp.demand.scaled(), dtype=np.int64)
        ranked = ranker.order(node_res, demand, origin)
        if not ranked:
            return Outcome(request.id, None, f"component {comp.id} fits nowhere")
        n = ranked[0]
        node_res[n] -= demand
        assignment[comp.id] = n
        if origin is None:
            origin = n
    paths = {}
    for li, link in enumerate(request.links):
        bw = scale_bandwidth(link.bandwidth)
        pick = None
        for p in feasible_paths(catalog, assignment[link.source], assignment[link.target], link.latency_bound):
            if all(edge_res[e] >= bw for e in p.edges):
                pick = p
                break
        if pick is None:
            return Outcome(request.id, None, f"link {li} has no feasible path")
        for e in pick.edges:
            edge_res[e] -= bw
        paths[li] = pick
    res[:] = node_res
    eres[:] = edge_res
    return Outcome(request.id, Allocation(request.id, assignment, paths))


def allocate_batch_greedy(
    pending: Sequence[VirtualRequest],
    residual: ResidualState,
    catalog: PathCatalog,
    hops: Optional[np.ndarray] = None,
) -> List[Outcome]:
    """Outcomes in arrival order; ``residual`` itself is not modified."""
    if hops is None:
        hops = residual.network.hop_distances()
    ranker = _DeviceRanker(residual, hops)
    res = residual.node_residual.copy()
    eres = residual.edge_residual.copy()
    return [place_request_greedy(r, res, eres, catalog, ranker) for r in arrival_order(pending)]


class GreedyAllocator:
    name = "greedy"

    def __init__(self, catalog: PathCatalog):
        self.catalog = catalog
        self.hops = catalog.network.hop_distances()

    def __call__(self, pending, residual, now, rng=None):
        return allocate_batch_greedy(pending, residual, self.catalog, self.hops), {}
