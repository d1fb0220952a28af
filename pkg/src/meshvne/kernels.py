"""Hot numeric kernels: chromosome decoding, non-dominated sorting, crowding.

Every kernel has a jitted implementation and a numpy one; ``USE_NUMBA``
(driven by ``MESHVNE_DISABLE_NUMBA``) picks which is exported.
"""
from __future__ import annotations

import numpy as np

from ._accel import HAVE_NUMBA, njit

USE_NUMBA = HAVE_NUMBA


# -- chromosome decoding ---------------------------------------------------


def _decode_one(
    genes,
    node_res,
    edge_res,
    comp_dem,
    app_cstart,
    app_lstart,
    link_src,
    link_dst,
    link_bw,
    link_bound,
    app_reward,
    pair_start,
    path_estart,
    path_edges,
    path_lat,
    n_nodes,
    accepted,
    chosen,
):
    """Decode one genome in place; returns (f1, f2).

    Apps are visited in array order, which callers arrange oldest-first.
    """
    res = node_res.copy()
    eres = edge_res.copy()
    n_apps = app_cstart.shape[0] - 1
    f1 = 0.0
    lat_sum = 0.0
    n_acc = 0
    for a in range(n_apps):
        c0 = app_cstart[a]
        c1 = app_cstart[a + 1]
        ok = True
        placed = c0
        for c in range(c0, c1):
            n = genes[c]
            fits = True
            for k in range(4):
                if res[n, k] < comp_dem[c, k]:
                    fits = False
                    break
            if not fits:
                ok = False
                break
            for k in range(4):
                res[n, k] -= comp_dem[c, k]
            placed = c + 1
        l0 = app_lstart[a]
        l1 = app_lstart[a + 1]
        routed = l0
        app_lat = 0.0
        if ok:
            for li in range(l0, l1):
                o = genes[link_src[li]]
                d = genes[link_dst[li]]
                pair = o * n_nodes + d
                pick = -1
                for p in range(pair_start[pair], pair_start[pair + 1]):
                    if path_lat[p] > link_bound[li]:
                        continue
                    room = True
                    for q in range(path_estart[p], path_estart[p + 1]):
                        if eres[path_edges[q]] < link_bw[li]:
                            room = False
                            break
                    if room:
                        pick = p
                        break
                if pick < 0:
                    ok = False
                    break
                for q in range(path_estart[pick], path_estart[pick + 1]):
                    eres[path_edges[q]] -= link_bw[li]
                chosen[li] = pick
                app_lat += path_lat[pick] / link_bound[li]
                routed = li + 1
        if ok:
            accepted[a] = True
            f1 -= app_reward[a]
            if l1 > l0:
                lat_sum += app_lat / (l1 - l0)
            n_acc += 1
        else:
            accepted[a] = False
            # roll back this app only
            for c in range(c0, placed):
                n = genes[c]
                for k in range(4):
                    res[n, k] += comp_dem[c, k]
            for li in range(l0, routed):
                p = chosen[li]
                for q in range(path_estart[p], path_estart[p + 1]):
                    eres[path_edges[q]] += link_bw[li]
            for li in range(l0, l1):
                chosen[li] = -1
    f2 = lat_sum / n_acc if n_acc > 0 else 0.0
    return f1, f2


def _decode_population(
    pop,
    node_res,
    edge_res,
    comp_dem,
    app_cstart,
    app_lstart,
    link_src,
    link_dst,
    link_bw,
    link_bound,
    app_reward,
    pair_start,
    path_estart,
    path_edges,
    path_lat,
    n_nodes,
):
    n_pop = pop.shape[0]
    n_apps = app_cstart.shape[0] - 1
    n_links = link_src.shape[0]
    objs = np.zeros((n_pop, 2))
    accepted = np.zeros((n_pop, n_apps), dtype=np.bool_)
    chosen = np.full((n_pop, n_links), -1, dtype=np.int64)
    for i in range(n_pop):
        f1, f2 = decode_one(
            pop[i],
            node_res,
            edge_res,
            comp_dem,
            app_cstart,
            app_lstart,
            link_src,
            link_dst,
            link_bw,
            link_bound,
            app_reward,
            pair_start,
            path_estart,
            path_edges,
            path_lat,
            n_nodes,
            accepted[i],
            chosen[i],
        )
        objs[i, 0] = f1
        objs[i, 1] = f2
    return objs, accepted, chosen


# -- non-dominated sorting -------------------------------------------------


def _nds_loops(objs):
    """Fast non-dominated sort; returns 0-based front rank per row."""
    n = objs.shape[0]
    m = objs.shape[1]
    dom_count = np.zeros(n, dtype=np.int64)
    dominated = np.zeros((n, n), dtype=np.bool_)
    for p in range(n):
        for q in range(n):
            if p == q:
                continue
            le = True
            lt = False
            for k in range(m):
                if objs[p, k] > objs[q, k]:
                    le = False
                    break
                if objs[p, k] < objs[q, k]:
                    lt = True
            if le and lt:
                dominated[p, q] = True
                dom_count[q] += 1
    rank = np.full(n, -1, dtype=np.int64)
    current = np.empty(n, dtype=np.int64)
    size = 0
    for p in range(n):
        if dom_count[p] == 0:
            rank[p] = 0
            current[size] = p
            size += 1
    level = 0
    nxt = np.empty(n, dtype=np.int64)
    while size > 0:
        nsize = 0
        for i in range(size):
            p = current[i]
            for q in range(n):
                if dominated[p, q]:
                    dom_count[q] -= 1
                    if dom_count[q] == 0:
                        rank[q] = level + 1
                        nxt[nsize] = q
                        nsize += 1
        level += 1
        current, nxt = nxt, current
        size = nsize
    return rank


def _nds_numpy(objs):
    objs = np.asarray(objs, dtype=float)
    le = (objs[:, None, :] <= objs[None, :, :]).all(axis=2)
    lt = (objs[:, None, :] < objs[None, :, :]).any(axis=2)
    dominates = le & lt  # [p, q]: p dominates q
    rank = np.full(len(objs), -1, dtype=np.int64)
    remaining = np.ones(len(objs), dtype=bool)
    level = 0
    while remaining.any():
        beaten = dominates[remaining][:, remaining].any(axis=0)
        idx = np.flatnonzero(remaining)[~beaten]
        rank[idx] = level
        remaining[idx] = False
        level += 1
    return rank


# -- crowding distance -----------------------------------------------------


def _crowding_loops(objs):
    n = objs.shape[0]
    m = objs.shape[1]
    dist = np.zeros(n)
    if n <= 2:
        dist[:] = np.inf
        return dist
    for k in range(m):
        order = np.argsort(objs[:, k], kind="mergesort")
        lo = objs[order[0], k]
        hi = objs[order[n - 1], k]
        dist[order[0]] = np.inf
        dist[order[n - 1]] = np.inf
        span = hi - lo
        if span <= 0.0:
            continue
        for i in range(1, n - 1):
            dist[order[i]] += (objs[order[i + 1], k] - objs[order[i - 1], k]) / span
    return dist


def _crowding_numpy(objs):
    objs = np.asarray(objs, dtype=float)
    n, m = objs.shape
    dist = np.zeros(n)
    if n <= 2:
        dist[:] = np.inf
        return dist
    for k in range(m):
        order = np.argsort(objs[:, k], kind="mergesort")
        col = objs[order, k]
        dist[order[[0, -1]]] = np.inf
        span = col[-1] - col[0]
        if span > 0:
            dist[order[1:-1]] += (col[2:] - col[:-2]) / span
    return dist


if USE_NUMBA:
    decode_one = njit(_decode_one)
    decode_population = njit(_decode_population)
    non_dominated_rank = njit(_nds_loops)
    crowding_distance = njit(_crowding_loops)
else:
    decode_one = _decode_one
    decode_population = _decode_population
    non_dominated_rank = _nds_numpy
    crowding_distance = _crowding_numpy
