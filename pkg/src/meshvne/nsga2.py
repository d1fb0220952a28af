"""NSGA-II batch allocator: reward collected vs. normalised link latency.

A chromosome holds one substrate-node index per pending component.  Paths
are not evolved; decoding routes every link on its lowest-latency path with
room, and an app that cannot be fully placed is rejected as a whole.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np

from . import kernels
from .greedy import allocate_batch_greedy, arrival_order
from .model import Allocation, Outcome, ResidualState, VirtualRequest, scale_bandwidth
from .paths import PathCatalog


@dataclass
class NsgaParams:
    population: int = 50
    generations: int = 100
    crossover_rate: float = 0.8
    mutation_rate: float = 0.1
    seed_with_greedy: bool = True


class BatchArrays:
    """Pending requests (oldest first) packed for the decode kernel."""

    def __init__(self, pending: Sequence[VirtualRequest], residual: ResidualState, catalog: PathCatalog, rewards):
        self.requests = list(pending)
        self.catalog = catalog
        self.n_nodes = residual.network.n_nodes
        self.node_res = residual.node_residual.copy()
        self.edge_res = residual.edge_residual.copy()
        dem, cstart, lstart = [], [0], [0]
        src, dst, bw, bound = [], [], [], []
        for r in self.requests:
            base = len(dem)
            index = {c.id: base + j for j, c in enumerate(r.components)}
            dem.extend(c.demand.scaled() for c in r.components)
            for l in r.links:
                src.append(index[l.source])
                dst.append(index[l.target])
                bw.append(scale_bandwidth(l.bandwidth))
                bound.append(l.latency_bound)
            cstart.append(len(dem))
            lstart.append(len(src))
        self.comp_dem = np.array(dem, dtype=np.int64).reshape(-1, 4)
        self.app_cstart = np.array(cstart, dtype=np.int64)
        self.app_lstart = np.array(lstart, dtype=np.int64)
        self.link_src = np.array(src, dtype=np.int64)
        self.link_dst = np.array(dst, dtype=np.int64)
        self.link_bw = np.array(bw, dtype=np.int64)
        self.link_bound = np.array(bound, dtype=np.float64)
        self.app_reward = np.asarray(rewards, dtype=np.float64)
        self.pair_start, self.path_estart, self.path_edges, self.path_lat, _ = catalog.arrays()

    @property
    def n_genes(self) -> int:
        return len(self.comp_dem)

    def decode(self, pop: np.ndarray):
        pop = np.ascontiguousarray(pop, dtype=np.int64).reshape(-1, self.n_genes)
        return kernels.decode_population(
            pop,
            self.node_res,
            self.edge_res,
            self.comp_dem,
            self.app_cstart,
            self.app_lstart,
            self.link_src,
            self.link_dst,
            self.link_bw,
            self.link_bound,
            self.app_reward,
            self.pair_start,
            self.path_estart,
            self.path_edges,
            self.path_lat,
            self.n_nodes,
        )

    def outcomes(self, genome: np.ndarray) -> List[Outcome]:
        _, accepted, chosen = self.decode(genome[None, :])
        out = []
        for a, r in enumerate(self.requests):
            if not accepted[0, a]:
                out.append(Outcome(r.id, None, "rejected by decoded genome"))
                continue
            c0 = self.app_cstart[a]
            l0 = self.app_lstart[a]
            nodes = {c.id: int(genome[c0 + j]) for j, c in enumerate(r.components)}
            paths = {li: self.catalog.path_by_index(int(chosen[0, l0 + li])) for li in range(len(r.links))}
            out.append(Outcome(r.id, Allocation(r.id, nodes, paths)))
        return out


def fast_non_dominated_sort(objs) -> List[List[int]]:
    """Fronts as lists of row indices, best front first."""
    objs = np.asarray(objs, dtype=np.float64)
    if len(objs) == 0:
        return []
    rank = kernels.non_dominated_rank(objs)
    return [list(np.flatnonzero(rank == k)) for k in range(int(rank.max()) + 1)]


def crowding_distance(front_objs) -> np.ndarray:
    return kernels.crowding_distance(np.asarray(front_objs, dtype=np.float64))


def knee_point(objs) -> int:
    """Front member maximising normalised reward gain minus normalised latency cost.

    Ties go to the larger reward, then the lower latency, then the lower index.
    """
    objs = np.asarray(objs, dtype=float)
    f1, f2 = objs[:, 0], objs[:, 1]
    span1 = f1.max() - f1.min()
    span2 = f2.max() - f2.min()
    gain = (f1.max() - f1) / span1 if span1 > 0 else np.zeros(len(objs))
    cost = (f2 - f2.min()) / span2 if span2 > 0 else np.zeros(len(objs))
    score = gain - cost
    order = np.lexsort((np.arange(len(objs)), f2, f1, -np.round(score, 12)))
    return int(order[0])


@dataclass
class NsgaResult:
    population: np.ndarray
    objectives: np.ndarray
    front: List[int]
    selected: int
    outcomes: List[Outcome]
    history: List[np.ndarray] = field(default_factory=list)  # first-front objectives per generation


def _rank_and_crowd(objs):
    rank = kernels.non_dominated_rank(objs)
    crowd = np.zeros(len(objs))
    for k in range(int(rank.max()) + 1):
        idx = np.flatnonzero(rank == k)
        crowd[idx] = kernels.crowding_distance(np.ascontiguousarray(objs[idx]))
    return rank, crowd


def _environmental_selection(objs, size):
    rank, crowd = _rank_and_crowd(objs)
    # stable: rank asc, crowding desc, index asc
    order = np.lexsort((np.arange(len(objs)), -crowd, rank))
    return np.sort(order[:size])


def evolve(
    pending: Sequence[VirtualRequest],
    residual: ResidualState,
    catalog: PathCatalog,
    params: NsgaParams,
    rng: np.random.Generator,
    rewards: Optional[Sequence[float]] = None,
    hops: Optional[np.ndarray] = None,
    keep_history: bool = False,
) -> NsgaResult:
    ordered = arrival_order(pending)
    if rewards is None:
        rewards = [1.0] * len(ordered)
    else:
        by_id = dict(zip((r.id for r in pending), rewards))
        rewards = [by_id[r.id] for r in ordered]
    arrays = BatchArrays(ordered, residual, catalog, rewards)
    n_genes, n_nodes = arrays.n_genes, arrays.n_nodes
    size = params.population

    pop = rng.integers(0, n_nodes, size=(size, n_genes), dtype=np.int64)
    if params.seed_with_greedy and size > 0:
        greedy = allocate_batch_greedy(ordered, residual, catalog, hops)
        for a, (r, out) in enumerate(zip(ordered, greedy)):
            if out.accepted:
                c0 = arrays.app_cstart[a]
                for j, c in enumerate(r.components):
                    pop[0, c0 + j] = out.allocation.node_assignment[c.id]
    objs, _, _ = arrays.decode(pop)
    history = [objs.copy()] if keep_history else []

    for _ in range(params.generations):
        rank, crowd = _rank_and_crowd(objs)
        # binary tournaments: rank first, then crowding, then the first drawn
        cand = rng.integers(0, size, size=(size, 2))
        a, b = cand[:, 0], cand[:, 1]
        a_wins = (rank[a] < rank[b]) | ((rank[a] == rank[b]) & (crowd[a] >= crowd[b]))
        parents = np.where(a_wins, a, b)
        mothers = pop[parents[0::2]]
        fathers = pop[parents[1::2]]
        n_pairs = len(fathers)
        mothers = mothers[:n_pairs]
        do_cross = rng.random(n_pairs) < params.crossover_rate
        mask = (rng.random((n_pairs, n_genes)) < 0.5) & do_cross[:, None]
        child1 = np.where(mask, fathers, mothers)
        child2 = np.where(mask, mothers, fathers)
        children = np.concatenate([child1, child2])[:size]
        if len(children) < size:  # odd population: top up with a copy of the last parent
            children = np.concatenate([children, pop[parents[len(children):]]])
        mutate = rng.random(children.shape) < params.mutation_rate
        fresh = rng.integers(0, n_nodes, size=children.shape, dtype=np.int64)
        children = np.where(mutate, fresh, children)
        child_objs, _, _ = arrays.decode(children)
        merged = np.concatenate([pop, children])
        merged_objs = np.concatenate([objs, child_objs])
        keep = _environmental_selection(merged_objs, size)
        pop, objs = merged[keep], merged_objs[keep]
        if keep_history:
            history.append(objs.copy())

    rank = kernels.non_dominated_rank(objs) if len(objs) else np.zeros(0, dtype=np.int64)
    front = [int(i) for i in np.flatnonzero(rank == 0)]
    chosen = front[knee_point(objs[front])] if front else 0
    outcomes = arrays.outcomes(pop[chosen]) if len(pop) else [Outcome(r.id, None, "empty population") for r in ordered]
    return NsgaResult(pop, objs, front, chosen, outcomes, history)


class Nsga2Allocator:
    name = "nsga2"

    def __init__(self, catalog: PathCatalog, params: Optional[NsgaParams] = None, reward_fn=None):
        self.catalog = catalog
        self.params = params or NsgaParams()
        self.reward_fn = reward_fn
        self.hops = catalog.network.hop_distances()

    def __call__(self, pending, residual, now, rng=None):
        rewards = [self.reward_fn(now, r.arrival_time) for r in pending] if self.reward_fn else None
        result = evolve(pending, residual, self.catalog, self.params, rng, rewards, self.hops)
        sel = result.objectives[result.selected]
        stats = {"f1": float(sel[0]), "f2": float(sel[1]), "front_size": len(result.front)}
        return result.outcomes, stats
