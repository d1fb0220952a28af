"""k-shortest path catalog over the substrate, with per-link latency filtering."""
from __future__ import annotations

from dataclasses import dataclass
from itertools import islice
from typing import Dict, List, Sequence, Tuple

import networkx as nx
import numpy as np

from .model import SubstrateNetwork


class DisconnectedNetwork(ValueError):
    pass


@dataclass(frozen=True)
class SubstratePath:
    origin: int
    destination: int
    nodes: Tuple[int, ...]
    edges: Tuple[int, ...]
    total_latency: float

    @property
    def hop_count(self) -> int:
        return len(self.edges)

    @property
    def is_self(self) -> bool:
        return not self.edges

    def sort_key(self):
        return (self.total_latency, len(self.edges), self.edges)

    @classmethod
    def self_path(cls, node: int) -> "SubstratePath":
        return cls(node, node, (node,), (), 0.0)

    @classmethod
    def from_nodes(cls, network: SubstrateNetwork, nodes: Sequence[int]) -> "SubstratePath":
        edges = tuple(network.edge_between(a, b) for a, b in zip(nodes, nodes[1:]))
        latency = sum(network.edges[e].latency for e in edges)
        return cls(nodes[0], nodes[-1], tuple(nodes), edges, float(latency))


class PathCatalog:
    """Ordered-pair map to at most ``k`` loop-free paths sorted by latency.

    Ties are broken by hop count, then by the edge-id sequence.
    """

    def __init__(self, network: SubstrateNetwork, k: int, paths: Dict[Tuple[int, int], Tuple[SubstratePath, ...]]):
        self.network = network
        self.k = k
        self._paths = paths
        self._arrays = None
        self._feasible_cache: Dict[float, List[SubstratePath]] = {}

    def paths(self, origin: int, destination: int) -> Tuple[SubstratePath, ...]:
        return self._paths[(origin, destination)]

    def __getitem__(self, pair):
        return self._paths[pair]

    def pairs(self):
        return self._paths.keys()

    def feasible_paths(self, origin: int, destination: int, latency_bound: float) -> List[SubstratePath]:
        return feasible_paths(self, origin, destination, latency_bound)

    def all_feasible(self, latency_bound: float) -> List[SubstratePath]:
        """Every catalog path (all pairs) whose latency is within the bound."""
        cached = self._feasible_cache.get(latency_bound)
        if cached is None:
            cached = []
            for pair in sorted(self._paths):
                cached.extend(p for p in self._paths[pair] if p.total_latency <= latency_bound)
            self._feasible_cache[latency_bound] = cached
        return cached

    def arrays(self):
        """Flat arrays for the jitted kernels (cached).

        Returns ``(pair_start, path_edge_start, path_edges, path_latency,
        path_hops)`` where the paths of pair ``(o, d)`` occupy indices
        ``pair_start[o*N+d] : pair_start[o*N+d+1]``.
        """
        if self._arrays is None:
            n = self.network.n_nodes
            pair_start = np.zeros(n * n + 1, dtype=np.int64)
            edge_start = [0]
            edges: List[int] = []
            latency: List[float] = []
            hops: List[int] = []
            flat: List[SubstratePath] = []
            for o in range(n):
                for d in range(n):
                    for p in self._paths[(o, d)]:
                        edges.extend(p.edges)
                        edge_start.append(len(edges))
                        latency.append(p.total_latency)
                        hops.append(p.hop_count)
                        flat.append(p)
                    pair_start[o * n + d + 1] = len(latency)
            self._arrays = (
                pair_start,
                np.array(edge_start, dtype=np.int64),
                np.array(edges, dtype=np.int64),
                np.array(latency, dtype=np.float64),
                np.array(hops, dtype=np.int64),
            )
            self._flat = flat
        return self._arrays

    def path_by_index(self, idx: int) -> SubstratePath:
        self.arrays()
        return self._flat[idx]


def _k_shortest(graph: nx.Graph, network: SubstrateNetwork, o: int, d: int, k: int) -> Tuple[SubstratePath, ...]:
    gen = nx.shortest_simple_paths(graph, o, d, weight="latency")
    found: List[SubstratePath] = []
    try:
        for nodes in islice(gen, k):
            found.append(SubstratePath.from_nodes(network, nodes))
        if len(found) == k:
            # pull the rest of the tie group at the cut so the cut is order-independent
            cutoff = found[-1].total_latency
            for nodes in gen:
                p = SubstratePath.from_nodes(network, nodes)
                if p.total_latency > cutoff:
                    break
                found.append(p)
    except nx.NetworkXNoPath:
        raise DisconnectedNetwork(f"no path between {o} and {d}") from None
    found.sort(key=SubstratePath.sort_key)
    return tuple(found[:k])


def build_catalog(network: SubstrateNetwork, k: int = 4) -> PathCatalog:
    if k < 1:
        raise ValueError("k must be >= 1")
    graph = nx.Graph()
    graph.add_nodes_from(range(network.n_nodes))
    for e in network.edges:
        graph.add_edge(e.u, e.v, latency=e.latency)
    paths: Dict[Tuple[int, int], Tuple[SubstratePath, ...]] = {}
    for o in range(network.n_nodes):
        for d in range(network.n_nodes):
            if o == d:
                paths[(o, d)] = (SubstratePath.self_path(o),)
            else:
                paths[(o, d)] = _k_shortest(graph, network, o, d, k)
    return PathCatalog(network, k, paths)


def feasible_paths(catalog: PathCatalog, origin: int, destination: int, latency_bound: float) -> List[SubstratePath]:
    return [p for p in catalog.paths(origin, destination) if p.total_latency <= latency_bound]
