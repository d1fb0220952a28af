"""Exact batch allocation: binary model plus an LP-free branch-and-bound.

Objective per batch (maximised)::

    sum_s  r_s * x_s  -  alpha / |F_s| * sum_f sum_p y_pf * lat(p) / bound_f

All objective coefficients are held as integers scaled by ``SCALE`` so that
the solver and the brute-force oracle agree exactly.
"""
from __future__ import annotations

import itertools
import math
import time
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from .model import Allocation, Outcome, ResidualState, VirtualRequest, scale_bandwidth
from .paths import PathCatalog, SubstratePath

SCALE = 2**20

PROVEN_OPTIMAL = "proven-optimal"
TIME_LIMITED = "time-limited-feasible"


class InstanceTooLarge(ValueError):
    pass


class _Stop(Exception):
    pass


def reward_fixed(reward: float) -> int:
    return int(round(Fraction(reward) * SCALE))


def penalty_fixed(alpha: float, latency: float, bound: float, n_links: int) -> int:
    """Scaled penalty of routing one link of an ``n_links``-link app over ``latency``."""
    if latency == 0 or n_links == 0:
        return 0
    return int(round(Fraction(alpha) * Fraction(latency) * SCALE / (n_links * Fraction(bound))))


@dataclass
class BatchProblem:
    requests: Sequence[VirtualRequest]
    rewards: Sequence[float]
    residual: ResidualState
    catalog: PathCatalog
    alpha: float = 2.0**10

    def __post_init__(self):
        if len(self.rewards) != len(self.requests):
            raise ValueError("one reward per request")
        self.requests = [r for r in self.requests]
        self.reward_int = [reward_fixed(r) for r in self.rewards]
        # requests with nothing to place never enter the model
        self.excluded = {r.id for r in self.requests if not r.components}
        self.path_sets: Dict[Tuple[int, int], List[SubstratePath]] = {}
        for r in self.requests:
            for li, link in enumerate(r.links):
                self.path_sets[(r.id, li)] = self.catalog.all_feasible(link.latency_bound)
        self.structurally_infeasible = {
            r.id for r in self.requests for li in range(len(r.links)) if not self.path_sets[(r.id, li)]
        }

    def penalty(self, request: VirtualRequest, li: int, path: SubstratePath) -> int:
        link = request.links[li]
        return penalty_fixed(self.alpha, path.total_latency, link.latency_bound, len(request.links))


@dataclass
class IlpModel:
    """Binary model over x_s, x_nv and y_pf with integer objective coefficients."""

    batch: BatchProblem
    x_s: Dict[int, str] = field(default_factory=dict)
    x_nv: Dict[Tuple[int, int, int], str] = field(default_factory=dict)
    y_pf: Dict[Tuple[int, int, int], str] = field(default_factory=dict)
    objective: Dict[str, int] = field(default_factory=dict)

    @property
    def n_variables(self) -> int:
        return len(self.x_s) + len(self.x_nv) + len(self.y_pf)

    def constraints(self) -> Iterator[Tuple[str, Dict[str, int], str, int]]:
        """Rows as (name, {var: coef}, sense, rhs); capacities are residuals."""
        b = self.batch
        nodes = range(b.residual.network.n_nodes)
        reqs = [r for r in b.requests if r.id not in b.excluded]
        for r in reqs:
            xs = self.x_s[r.id]
            for c in r.components:
                row = {self.x_nv[(n, r.id, c.id)]: 1 for n in nodes}
                row[xs] = -1
                yield (f"assign_r{r.id}c{c.id}", row, "=", 0)
            for li, link in enumerate(r.links):
                paths = b.path_sets[(r.id, li)]
                row = {self.y_pf[(r.id, li, pi)]: 1 for pi in range(len(paths))}
                row[xs] = -1
                yield (f"route_r{r.id}l{li}", row, "=", 0)
                for n in nodes:
                    out = {self.y_pf[(r.id, li, pi)]: 1 for pi, p in enumerate(paths) if p.origin == n}
                    out[self.x_nv[(n, r.id, link.source)]] = -1
                    yield (f"origin_r{r.id}l{li}n{n}", out, "=", 0)
                    inc = {self.y_pf[(r.id, li, pi)]: 1 for pi, p in enumerate(paths) if p.destination == n}
                    inc[self.x_nv[(n, r.id, link.target)]] = -1
                    yield (f"dest_r{r.id}l{li}n{n}", inc, "=", 0)
        for n in nodes:
            for a in range(4):
                row = {}
                for r in reqs:
                    for c in r.components:
                        d = c.demand.scaled()[a]
                        if d:
                            row[self.x_nv[(n, r.id, c.id)]] = d
                if row:
                    yield (f"cap_n{n}a{a}", row, "<=", int(b.residual.node_residual[n, a]))
        edge_rows: Dict[int, Dict[str, int]] = {}
        for r in reqs:
            for li, link in enumerate(r.links):
                bw = scale_bandwidth(link.bandwidth)
                for pi, p in enumerate(b.path_sets[(r.id, li)]):
                    for e in p.edges:
                        edge_rows.setdefault(e, {})[self.y_pf[(r.id, li, pi)]] = bw
        for e in sorted(edge_rows):
            yield (f"bw_e{e}", edge_rows[e], "<=", int(b.residual.edge_residual[e]))

    def to_lp(self) -> str:
        """Human-readable LP-style dump."""
        lines = ["Maximize", " obj: " + " ".join(f"{c:+d} {v}" for v, c in self.objective.items() if c), "Subject To"]
        for name, row, sense, rhs in self.constraints():
            lines.append(f" {name}: " + " ".join(f"{c:+d} {v}" for v, c in row.items()) + f" {sense} {rhs}")
        lines.append("Binary")
        lines.extend(f" {v}" for v in itertools.chain(self.x_s.values(), self.x_nv.values(), self.y_pf.values()))
        lines.append("End")
        return "\n".join(lines) + "\n"


def build_model(batch: BatchProblem) -> IlpModel:
    model = IlpModel(batch)
    flat_index = {}
    pair_start, *_ = batch.catalog.arrays()
    n = batch.catalog.network.n_nodes
    for o in range(n):
        for d in range(n):
            for j, p in enumerate(batch.catalog.paths(o, d)):
                flat_index[id(p)] = int(pair_start[o * n + d]) + j
    for r, rew in zip(batch.requests, batch.reward_int):
        if r.id in batch.excluded:
            continue
        name = f"x_s_{r.id}"
        model.x_s[r.id] = name
        model.objective[name] = rew
        for node in range(n):
            for c in r.components:
                model.x_nv[(node, r.id, c.id)] = f"x_{node}_r{r.id}c{c.id}"
        for li in range(len(r.links)):
            for pi, p in enumerate(batch.path_sets[(r.id, li)]):
                var = f"y_p{flat_index[id(p)]}_r{r.id}l{li}"
                model.y_pf[(r.id, li, pi)] = var
                model.objective[var] = -batch.penalty(r, li, p)
    return model


@dataclass
class SolveOutcome:
    decisions: Dict[int, Optional[Allocation]]
    objective: int  # scaled by SCALE
    status: str
    wall_time: float = 0.0
    nodes: int = 0

    @property
    def objective_value(self) -> float:
        return self.objective / SCALE

    def outcomes(self, requests: Sequence[VirtualRequest]) -> List[Outcome]:
        return [
            Outcome(r.id, self.decisions.get(r.id), "" if self.decisions.get(r.id) else "not selected")
            for r in requests
        ]


# -- branch and bound ------------------------------------------------------


class _App:
    __slots__ = ("req", "reward", "dem", "total", "links", "order", "pen_cache", "min_cross", "cid_index")

    def __init__(self, batch: BatchProblem, req: VirtualRequest, reward: int):
        self.req = req
        self.reward = reward
        self.cid_index = {c.id: i for i, c in enumerate(req.components)}
        self.dem = [c.demand.scaled() for c in req.components]
        self.total = tuple(sum(d[a] for d in self.dem) for a in range(4))
        self.links = [
            (self.cid_index[l.source], self.cid_index[l.target], scale_bandwidth(l.bandwidth), l.latency_bound)
            for l in req.links
        ]
        # components in BFS order over the link graph so links route early
        adj = {i: [] for i in range(len(self.dem))}
        for s, t, _, _ in self.links:
            adj[s].append(t)
            adj[t].append(s)
        start = max(range(len(self.dem)), key=lambda i: (sum(self.dem[i]), -i))
        order, seen, frontier = [start], {start}, [start]
        while frontier:
            nxt = []
            for i in frontier:
                for j in sorted(adj[i]):
                    if j not in seen:
                        seen.add(j)
                        order.append(j)
                        nxt.append(j)
            frontier = nxt
        self.order = order
        self.pen_cache: Dict[Tuple[int, int, int], List[Tuple[int, SubstratePath]]] = {}
        crosses = []
        for li in range(len(req.links)):
            off_node = [p for p in batch.path_sets[(req.id, li)] if p.edges]
            if off_node:
                crosses.append(batch.penalty(req, li, min(off_node, key=lambda p: p.total_latency)))
        # any non-colocated placement routes at least one link off-node
        self.min_cross = min(crosses) if crosses else None


class BranchAndBound:
    def __init__(self, batch: BatchProblem, time_limit: Optional[float] = None, node_limit: Optional[int] = None):
        self.batch = batch
        self.time_limit = time_limit
        self.node_limit = node_limit
        net = batch.residual.network
        self.n_nodes = net.n_nodes
        self.hops = net.hop_distances()
        cap = np.maximum(batch.residual.node_capacity.max(axis=0), 1)
        self.norm = [float(c) for c in cap]
        self.res = [list(map(int, row)) for row in batch.residual.node_residual]
        self.eres = [int(v) for v in batch.residual.edge_residual]
        apps = [
            _App(batch, r, rew)
            for r, rew in zip(batch.requests, batch.reward_int)
            if r.id not in batch.excluded and r.id not in batch.structurally_infeasible
        ]
        apps.sort(key=lambda a: (-a.reward, a.req.arrival_time, a.req.id))
        self.apps = apps
        self.nodes = 0
        self.best = 0
        self.best_choice: List[Optional[Tuple[List[int], Dict[int, SubstratePath]]]] = [None] * len(apps)
        self.choice: List[Optional[Tuple[List[int], Dict[int, SubstratePath]]]] = [None] * len(apps)

    # bound helpers
    def _optimistic(self, app: _App) -> int:
        res = self.res
        for d in app.dem:
            if not any(r[0] >= d[0] and r[1] >= d[1] and r[2] >= d[2] and r[3] >= d[3] for r in res):
                return 0
        t = app.total
        if any(r[0] >= t[0] and r[1] >= t[1] and r[2] >= t[2] and r[3] >= t[3] for r in res):
            return app.reward
        if app.min_cross is None:
            return 0
        return max(0, app.reward - app.min_cross)

    def _paths(self, app: _App, li: int, o: int, d: int):
        key = (li, o, d)
        cached = app.pen_cache.get(key)
        if cached is None:
            link = app.req.links[li]
            cached = [
                (self.batch.penalty(app.req, li, p), p)
                for p in self.batch.catalog.paths(o, d)
                if p.total_latency <= link.latency_bound
            ]
            cached.sort(key=lambda t: t[0])
            app.pen_cache[key] = cached
        return cached

    def _tick(self):
        self.nodes += 1
        if self.node_limit is not None and self.nodes > self.node_limit:
            raise _Stop
        if self.time_limit is not None and self.nodes % 256 == 0 and time.perf_counter() > self.deadline:
            raise _Stop

    def _placements(self, app: _App, base: int):
        """Yield (penalty, assignment, paths) for placements with penalty < base - incumbent.

        The residual lists are mutated while a placement is yielded and
        restored before the next one is produced.
        """
        n_comp = len(app.dem)
        assign = [-1] * n_comp
        link_paths: Dict[int, SubstratePath] = {}
        res, eres = self.res, self.eres
        links_at: List[List[int]] = [[] for _ in range(n_comp)]
        pos = {c: k for k, c in enumerate(app.order)}
        for li, (s, t, _, _) in enumerate(app.links):
            links_at[max(pos[s], pos[t])].append(li)
        total = app.total
        norm = self.norm
        neigh = [[] for _ in range(n_comp)]
        for s, t, _, _ in app.links:
            neigh[s].append(t)
            neigh[t].append(s)

        def route(k, ls, pen):
            if ls == len(links_at[k]):
                yield from place(k + 1, pen)
                return
            li = links_at[k][ls]
            s, t, bw, _ = app.links[li]
            for p_pen, p in self._paths(app, li, assign[s], assign[t]):
                if pen + p_pen >= base - self.best:
                    break
                if any(eres[e] < bw for e in p.edges):
                    continue
                for e in p.edges:
                    eres[e] -= bw
                link_paths[li] = p
                yield from route(k, ls + 1, pen + p_pen)
                for e in p.edges:
                    eres[e] += bw
            link_paths.pop(li, None)

        def place(k, pen):
            if k == n_comp:
                if pen < base - self.best:
                    yield pen, assign, link_paths
                return
            self._tick()
            c = app.order[k]
            d = app.dem[c]
            placed_neigh = [assign[j] for j in neigh[c] if assign[j] >= 0]
            cands = []
            for n in range(self.n_nodes):
                r = res[n]
                if r[0] < d[0] or r[1] < d[1] or r[2] < d[2] or r[3] < d[3]:
                    continue
                left = sum((r[a] - d[a]) / norm[a] for a in range(4))
                if placed_neigh:
                    dist = min(int(self.hops[m, n]) for m in placed_neigh)
                    cands.append((dist, left, n))
                else:
                    whole = r[0] >= total[0] and r[1] >= total[1] and r[2] >= total[2] and r[3] >= total[3]
                    cands.append((0 if whole else 1, left, n))
            cands.sort()
            for _, _, n in cands:
                r = res[n]
                r[0] -= d[0]
                r[1] -= d[1]
                r[2] -= d[2]
                r[3] -= d[3]
                assign[c] = n
                yield from route(k, 0, pen)
                assign[c] = -1
                r[0] += d[0]
                r[1] += d[1]
                r[2] += d[2]
                r[3] += d[3]

        yield from place(0, 0)

    def _search(self, i: int, value: int):
        self._tick()
        apps = self.apps
        if i == len(apps):
            if value > self.best:
                self.best = value
                self.best_choice = list(self.choice)
            return
        opt = [self._optimistic(a) for a in apps[i:]]
        rest = sum(opt) - opt[0]
        if value + opt[0] + rest <= self.best:
            return
        app = apps[i]
        if opt[0] > 0:
            for pen, assign, paths in self._placements(app, value + app.reward + rest):
                self.choice[i] = (list(assign), dict(paths))
                self._search(i + 1, value + app.reward - pen)
                self.choice[i] = None
        if value + rest > self.best:
            self._search(i + 1, value)

    def run(self) -> SolveOutcome:
        start = time.perf_counter()
        self.deadline = start + (self.time_limit if self.time_limit is not None else math.inf)
        status = PROVEN_OPTIMAL
        try:
            self._search(0, 0)
        except _Stop:
            status = TIME_LIMITED
        decisions: Dict[int, Optional[Allocation]] = {r.id: None for r in self.batch.requests}
        for app, ch in zip(self.apps, self.best_choice):
            if ch is None:
                continue
            assign, paths = ch
            node_assignment = {c.id: assign[j] for j, c in enumerate(app.req.components)}
            decisions[app.req.id] = Allocation(app.req.id, node_assignment, dict(paths))
        return SolveOutcome(decisions, self.best, status, time.perf_counter() - start, self.nodes)


def solve(model: IlpModel, time_limit: Optional[float] = None, node_limit: Optional[int] = None) -> SolveOutcome:
    return BranchAndBound(model.batch, time_limit, node_limit).run()


# -- brute force oracle ----------------------------------------------------

BRUTE_MAX_NODES = 4
BRUTE_MAX_COMPONENTS = 5
BRUTE_MAX_PATH_CHOICES = 12


def brute_force_solve(batch: BatchProblem) -> SolveOutcome:
    """Exhaustive enumeration of accept sets x placements x path choices."""
    start = time.perf_counter()
    net = batch.residual.network
    n_nodes = net.n_nodes
    reqs = [r for r in batch.requests if r.id not in batch.excluded]
    n_comp = sum(len(r.components) for r in reqs)
    # path choices a link can face once its endpoints are fixed
    choices = 0
    for r in reqs:
        for li in range(len(r.links)):
            paths = batch.path_sets[(r.id, li)]
            per_pair: Dict[Tuple[int, int], int] = {}
            for p in paths:
                per_pair[(p.origin, p.destination)] = per_pair.get((p.origin, p.destination), 0) + 1
            choices += max(per_pair.values(), default=0)
    if n_nodes > BRUTE_MAX_NODES or n_comp > BRUTE_MAX_COMPONENTS or choices > BRUTE_MAX_PATH_CHOICES:
        raise InstanceTooLarge(f"nodes={n_nodes} components={n_comp} path choices={choices}")

    rewards = dict(zip((r.id for r in batch.requests), batch.reward_int))
    options = []
    for r in reqs:
        opts = [None]
        for nodes in itertools.product(range(n_nodes), repeat=len(r.components)):
            where = {c.id: n for c, n in zip(r.components, nodes)}
            per_link = []
            for li, link in enumerate(r.links):
                o, d = where[link.source], where[link.target]
                per_link.append([p for p in batch.path_sets[(r.id, li)] if p.origin == o and p.destination == d])
            for combo in itertools.product(*per_link):
                value = rewards[r.id] - sum(batch.penalty(r, li, p) for li, p in enumerate(combo))
                node_use = np.zeros((n_nodes, 4), dtype=np.int64)
                for c in r.components:
                    node_use[where[c.id]] += c.demand.scaled()
                edge_use = np.zeros(net.n_edges, dtype=np.int64)
                for link, p in zip(r.links, combo):
                    for e in p.edges:
                        edge_use[e] += scale_bandwidth(link.bandwidth)
                opts.append((value, node_use, edge_use, Allocation(r.id, dict(where), dict(enumerate(combo)))))
        options.append(opts)

    best = [0, {}]
    node_cap = batch.residual.node_residual
    edge_cap = batch.residual.edge_residual

    def walk(i, value, node_use, edge_use, chosen):
        if i == len(options):
            if value > best[0]:
                best[0] = value
                best[1] = dict(chosen)
            return
        for opt in options[i]:
            if opt is None:
                walk(i + 1, value, node_use, edge_use, chosen)
                continue
            v, nu, eu, alloc = opt
            nu2 = node_use + nu
            eu2 = edge_use + eu
            if (nu2 > node_cap).any() or (eu2 > edge_cap).any():
                continue
            chosen[alloc.request_id] = alloc
            walk(i + 1, value + v, nu2, eu2, chosen)
            del chosen[alloc.request_id]

    walk(0, 0, np.zeros((n_nodes, 4), dtype=np.int64), np.zeros(net.n_edges, dtype=np.int64), {})
    decisions = {r.id: best[1].get(r.id) for r in batch.requests}
    return SolveOutcome(decisions, best[0], PROVEN_OPTIMAL, time.perf_counter() - start, 0)


class IlpAllocator:
    name = "ilp"

    def __init__(self, catalog: PathCatalog, alpha: float = 2.0**10, reward_fn=None,
                 time_limit: Optional[float] = 60.0, node_limit: Optional[int] = 200_000):
        self.catalog = catalog
        self.alpha = alpha
        self.reward_fn = reward_fn
        self.time_limit = time_limit
        self.node_limit = node_limit

    def __call__(self, pending, residual, now, rng=None):
        rewards = [self.reward_fn(now, r.arrival_time) for r in pending]
        batch = BatchProblem(pending, rewards, residual, self.catalog, self.alpha)
        out = BranchAndBound(batch, self.time_limit, self.node_limit).run()
        stats = {"status": out.status, "objective": out.objective, "nodes": out.nodes, "wall_time": out.wall_time}
        return out.outcomes(pending), stats
