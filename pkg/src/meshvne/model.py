"""Substrate / request data model, resource arithmetic and allocation bookkeeping.

Resources are tracked internally as integers (milli-cores, MB, GB, GPU units,
tenths of MB/s) so that applying and releasing an allocation are exact
inverses regardless of how often they interleave.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

if TYPE_CHECKING:  # pragma: no cover
    from .paths import SubstratePath

ATTRIBUTES = ("cpu", "memory", "storage", "gpu")
CPU_SCALE = 1000  # milli-cores
BW_SCALE = 10  # tenths of MB/s


class InfeasibleAllocation(ValueError):
    """An allocation would drive some residual below zero."""


class UnknownAllocation(KeyError):
    """Release of an allocation that was never applied."""


class AuditError(AssertionError):
    """The constraint auditor found a violated placement constraint."""


def scale_bandwidth(mbps: float) -> int:
    return int(round(mbps * BW_SCALE))


@dataclass(frozen=True)
class ResourceVector:
    """cpu in cores, memory in MB, storage in GB, gpu in abstract units."""

    cpu: float = 0.0
    memory: float = 0
    storage: float = 0
    gpu: float = 0

    def __post_init__(self):
        for name in ATTRIBUTES:
            if getattr(self, name) < 0:
                raise ValueError(f"negative {name} in {self}")

    def scaled(self) -> Tuple[int, int, int, int]:
        return (
            int(round(self.cpu * CPU_SCALE)),
            int(round(self.memory)),
            int(round(self.storage)),
            int(round(self.gpu)),
        )

    @classmethod
    def from_scaled(cls, values: Sequence[int]) -> "ResourceVector":
        cpu, mem, sto, gpu = (int(v) for v in values)
        return cls(cpu / CPU_SCALE, mem, sto, gpu)

    def fits_in(self, other: "ResourceVector") -> bool:
        return all(a <= b for a, b in zip(self.scaled(), other.scaled()))

    def __add__(self, other: "ResourceVector") -> "ResourceVector":
        return ResourceVector.from_scaled([a + b for a, b in zip(self.scaled(), other.scaled())])

    def __sub__(self, other: "ResourceVector") -> "ResourceVector":
        diff = [a - b for a, b in zip(self.scaled(), other.scaled())]
        if min(diff) < 0:
            raise ValueError(f"{self} - {other} is negative")
        return ResourceVector.from_scaled(diff)


def feasible_on_node(residual: ResourceVector, demand: ResourceVector) -> bool:
    """True iff ``demand`` fits component-wise into ``residual``."""
    return demand.fits_in(residual)


@dataclass(frozen=True)
class SubstrateNode:
    id: int
    position: Tuple[float, float, float]
    capacity: ResourceVector
    kind: str = ""


@dataclass(frozen=True)
class SubstrateEdge:
    u: int
    v: int
    bandwidth: float = 100.0  # MB/s
    latency: float = 10.0  # ms

    def __post_init__(self):
        if self.u == self.v:
            raise ValueError("self-loop edge")
        if self.bandwidth <= 0 or self.latency < 0:
            raise ValueError(f"bad edge attributes {self}")

    @property
    def key(self) -> Tuple[int, int]:
        return (min(self.u, self.v), max(self.u, self.v))


@dataclass
class SubstrateNetwork:
    nodes: List[SubstrateNode]
    edges: List[SubstrateEdge]

    def __post_init__(self):
        for i, node in enumerate(self.nodes):
            if node.id != i:
                raise ValueError("node ids must be 0..N-1 in order")
        self.edge_index: Dict[Tuple[int, int], int] = {}
        n = len(self.nodes)
        for i, e in enumerate(self.edges):
            if not (0 <= e.u < n and 0 <= e.v < n):
                raise ValueError(f"edge {e} references a missing node")
            if e.key in self.edge_index:
                raise ValueError(f"duplicate edge {e.key}")
            self.edge_index[e.key] = i
        self.adjacency: List[List[Tuple[int, int]]] = [[] for _ in range(n)]
        for i, e in enumerate(self.edges):
            self.adjacency[e.u].append((e.v, i))
            self.adjacency[e.v].append((e.u, i))

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    def edge_between(self, a: int, b: int) -> int:
        return self.edge_index[(min(a, b), max(a, b))]

    def capacity_array(self) -> np.ndarray:
        return np.array([n.capacity.scaled() for n in self.nodes], dtype=np.int64).reshape(-1, 4)

    def bandwidth_array(self) -> np.ndarray:
        return np.array([scale_bandwidth(e.bandwidth) for e in self.edges], dtype=np.int64)

    def max_capacity(self) -> np.ndarray:
        """Per-attribute network maximum (scaled units), never zero."""
        cap = self.capacity_array().max(axis=0)
        return np.maximum(cap, 1)

    def hop_distances(self) -> np.ndarray:
        """All-pairs hop counts by BFS; -1 where unreachable."""
        n = self.n_nodes
        dist = np.full((n, n), -1, dtype=np.int64)
        for s in range(n):
            dist[s, s] = 0
            queue = deque([s])
            while queue:
                a = queue.popleft()
                for b, _ in self.adjacency[a]:
                    if dist[s, b] < 0:
                        dist[s, b] = dist[s, a] + 1
                        queue.append(b)
        return dist

    def is_connected(self) -> bool:
        if self.n_nodes == 0:
            return True
        return bool((self.hop_distances()[0] >= 0).all())


@dataclass(frozen=True)
class VirtualComponent:
    id: int
    demand: ResourceVector


@dataclass(frozen=True)
class VirtualLink:
    source: int
    target: int
    bandwidth: float  # MB/s
    latency_bound: float  # ms

    def __post_init__(self):
        if self.source == self.target:
            raise ValueError("virtual link endpoints must differ")
        if self.bandwidth <= 0 or self.latency_bound <= 0:
            raise ValueError(f"bad virtual link {self}")


@dataclass(frozen=True)
class VirtualRequest:
    id: int
    components: Tuple[VirtualComponent, ...]
    links: Tuple[VirtualLink, ...] = ()
    arrival_time: int = 0  # ms
    lifetime: int = 0  # ms
    retry_count: int = 0

    def __post_init__(self):
        object.__setattr__(self, "components", tuple(self.components))
        object.__setattr__(self, "links", tuple(self.links))
        ids = [c.id for c in self.components]
        if len(set(ids)) != len(ids):
            raise ValueError(f"duplicate component ids in request {self.id}")
        known = set(ids)
        for link in self.links:
            if link.source not in known or link.target not in known:
                raise ValueError(f"link {link} references a missing component")
        if self.components and not self._connected():
            raise ValueError(f"component graph of request {self.id} is not connected")

    def _connected(self) -> bool:
        ids = [c.id for c in self.components]
        adj = {i: set() for i in ids}
        for link in self.links:
            adj[link.source].add(link.target)
            adj[link.target].add(link.source)
        seen = {ids[0]}
        stack = [ids[0]]
        while stack:
            for nxt in adj[stack.pop()]:
                if nxt not in seen:
                    seen.add(nxt)
                    stack.append(nxt)
        return len(seen) == len(ids)

    def component(self, cid: int) -> VirtualComponent:
        for c in self.components:
            if c.id == cid:
                return c
        raise KeyError(cid)


@dataclass
class Allocation:
    """Component -> node and link index -> substrate path for one request."""

    request_id: int
    node_assignment: Dict[int, int]
    path_assignment: Dict[int, "SubstratePath"] = field(default_factory=dict)


@dataclass
class Outcome:
    """Per-request decision of an allocator for one batch."""

    request_id: int
    allocation: Optional[Allocation]
    reason: str = ""

    @property
    def accepted(self) -> bool:
        return self.allocation is not None


def allocation_charges(
    network: SubstrateNetwork, request: VirtualRequest, allocation: Allocation
) -> Tuple[np.ndarray, np.ndarray]:
    """Scaled (node, edge) resource amounts consumed by ``allocation``."""
    node = np.zeros((network.n_nodes, 4), dtype=np.int64)
    edge = np.zeros(network.n_edges, dtype=np.int64)
    for comp in request.components:
        node[allocation.node_assignment[comp.id]] += comp.demand.scaled()
    for li, link in enumerate(request.links):
        path = allocation.path_assignment[li]
        bw = scale_bandwidth(link.bandwidth)
        for e in path.edges:
            edge[e] += bw
    return node, edge


class ResidualState:
    """Remaining node and edge capacity plus the ledger of applied allocations."""

    def __init__(self, network: SubstrateNetwork):
        self.network = network
        self.node_capacity = network.capacity_array()
        self.edge_capacity = network.bandwidth_array()
        self.node_residual = self.node_capacity.copy()
        self.edge_residual = self.edge_capacity.copy()
        self.ledger: Dict[int, Tuple[np.ndarray, np.ndarray]] = {}

    def copy(self) -> "ResidualState":
        other = ResidualState.__new__(ResidualState)
        other.network = self.network
        other.node_capacity = self.node_capacity
        other.edge_capacity = self.edge_capacity
        other.node_residual = self.node_residual.copy()
        other.edge_residual = self.edge_residual.copy()
        other.ledger = dict(self.ledger)
        return other

    def node_vector(self, n: int) -> ResourceVector:
        return ResourceVector.from_scaled(self.node_residual[n])

    def apply(self, request: VirtualRequest, allocation: Allocation) -> None:
        if request.id in self.ledger:
            raise ValueError(f"request {request.id} already allocated")
        node, edge = allocation_charges(self.network, request, allocation)
        if (self.node_residual < node).any() or (self.edge_residual < edge).any():
            raise InfeasibleAllocation(f"allocation of request {request.id} exceeds residual capacity")
        self.node_residual -= node
        self.edge_residual -= edge
        self.ledger[request.id] = (node, edge)

    def release(self, request_id: int) -> None:
        try:
            node, edge = self.ledger.pop(request_id)
        except KeyError:
            raise UnknownAllocation(request_id) from None
        self.node_residual += node
        self.edge_residual += edge

    def __eq__(self, other):
        if not isinstance(other, ResidualState):
            return NotImplemented
        return (
            np.array_equal(self.node_residual, other.node_residual)
            and np.array_equal(self.edge_residual, other.edge_residual)
            and self.ledger.keys() == other.ledger.keys()
        )


def apply_allocation(state: ResidualState, request: VirtualRequest, allocation: Allocation) -> ResidualState:
    new = state.copy()
    new.apply(request, allocation)
    return new


def release_allocation(state: ResidualState, request: VirtualRequest, allocation: Allocation) -> ResidualState:
    if allocation.request_id != request.id:
        raise ValueError("allocation does not belong to request")
    new = state.copy()
    new.release(request.id)
    return new


def validate_allocations(
    network: SubstrateNetwork,
    placed: Iterable[Tuple[VirtualRequest, Allocation]],
    residual: Optional[ResidualState] = None,
) -> List[str]:
    """Independently re-check placement constraints; returns violation messages.

    The check rebuilds the binary decision variables from the allocation
    records rather than trusting any allocator-side bookkeeping.
    """
    problems: List[str] = []
    n_nodes = network.n_nodes
    load = np.zeros((n_nodes, 4), dtype=np.int64)
    bw_load = np.zeros(network.n_edges, dtype=np.int64)
    for request, alloc in placed:
        rid = request.id
        x_nv = np.zeros((n_nodes, len(request.components)), dtype=np.int64)
        for j, comp in enumerate(request.components):
            n = alloc.node_assignment.get(comp.id)
            if n is None or not (0 <= n < n_nodes):
                problems.append(f"request {rid}: component {comp.id} not placed on a valid node")
                continue
            x_nv[n, j] = 1
            load[n] += comp.demand.scaled()
        if (x_nv.sum(axis=0) != 1).any():
            problems.append(f"request {rid}: component assignment is not one-to-one")
        if len(alloc.node_assignment) != len(request.components):
            problems.append(f"request {rid}: stray component assignments")
        if set(alloc.path_assignment) != set(range(len(request.links))):
            problems.append(f"request {rid}: links and paths do not correspond one-to-one")
        for li, link in enumerate(request.links):
            path = alloc.path_assignment.get(li)
            if path is None:
                continue
            src = alloc.node_assignment.get(link.source)
            dst = alloc.node_assignment.get(link.target)
            if path.origin != src or path.destination != dst:
                problems.append(f"request {rid}: link {li} path endpoints do not match placed components")
            # walk the path to confirm it is contiguous and simple
            at = path.origin
            seen = {at}
            latency = 0.0
            for e in path.edges:
                if not (0 <= e < network.n_edges):
                    problems.append(f"request {rid}: link {li} uses unknown edge {e}")
                    break
                edge = network.edges[e]
                if at not in (edge.u, edge.v):
                    problems.append(f"request {rid}: link {li} path is not contiguous")
                    break
                at = edge.v if at == edge.u else edge.u
                if at in seen:
                    problems.append(f"request {rid}: link {li} path revisits node {at}")
                    break
                seen.add(at)
                latency += edge.latency
                bw_load[e] += scale_bandwidth(link.bandwidth)
            else:
                if at != path.destination:
                    problems.append(f"request {rid}: link {li} path ends at {at}, not {path.destination}")
                if latency > link.latency_bound + 1e-9:
                    problems.append(f"request {rid}: link {li} latency {latency} exceeds bound {link.latency_bound}")
    cap = network.capacity_array()
    over = np.argwhere(load > cap)
    for n, a in over:
        problems.append(f"node {n}: {ATTRIBUTES[a]} load {load[n, a]} exceeds capacity {cap[n, a]}")
    bw_cap = network.bandwidth_array()
    for e in np.flatnonzero(bw_load > bw_cap):
        problems.append(f"edge {e}: bandwidth load {bw_load[e]} exceeds capacity {bw_cap[e]}")
    if residual is not None:
        if not np.array_equal(residual.node_residual, cap - load):
            problems.append("node residuals disagree with re-derived load")
        if not np.array_equal(residual.edge_residual, bw_cap - bw_load):
            problems.append("edge residuals disagree with re-derived load")
        if (residual.node_residual < 0).any() or (residual.edge_residual < 0).any():
            problems.append("negative residual")
    return problems
