import numpy as np
from hypothesis import given, settings, strategies as st

from meshvne.greedy import (GreedyAllocator, _DeviceRanker, allocate_batch_greedy, arrival_order,
                            component_demand_rank, place_request_greedy)
from meshvne.model import ResidualState, ResourceVector, VirtualComponent, validate_allocations
from meshvne.paths import build_catalog
from meshvne.scenario import generate_scenario

from conftest import make_network, make_request

MAXCAP = [16000, 32768, 1000, 8]


def test_demand_rank_examples():
    zero = VirtualComponent(0, ResourceVector(0, 0, 0, 0))
    big = VirtualComponent(1, ResourceVector(2, 4096, 250, 2))
    small = VirtualComponent(2, ResourceVector(0.1, 100, 1, 0))
    assert component_demand_rank(zero, MAXCAP) == 0
    assert component_demand_rank(big, MAXCAP) > component_demand_rank(small, MAXCAP)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 2000), st.integers(0, 4096), st.integers(0, 250), st.integers(0, 2)),
                min_size=2, max_size=8))
def test_demand_rank_matches_normalised_sum(demands):
    comps = [VirtualComponent(i, ResourceVector(c / 1000, m, s, g)) for i, (c, m, s, g) in enumerate(demands)]
    oracle = [c / 16000 + m / 32768 + s / 1000 + g / 8 for c, m, s, g in demands]
    ranks = [component_demand_rank(c, MAXCAP) for c in comps]
    assert np.allclose(ranks, oracle)
    assert sorted(range(len(comps)), key=lambda i: (-ranks[i], i)) == sorted(range(len(comps)), key=lambda i: (-oracle[i], i))


def test_later_component_goes_nearer_the_origin():
    # 0 - 1 - 2 - 3; node 0 is roomiest so hosts the first component (and is then full), node 3 is roomier than node 1
    caps = [ResourceVector(16, 32768, 1000, 8), ResourceVector(2, 2048, 100, 0),
            ResourceVector(1, 1024, 10, 0), ResourceVector(8, 16384, 1000, 0)]
    net = make_network(4, [(0, 1), (1, 2), (2, 3)], capacity=caps)
    req = make_request(0, [(16, 20000, 900, 8), (1, 100, 1, 0)], [(0, 1, 5.0, 50.0)])
    (out,) = allocate_batch_greedy([req], ResidualState(net), build_catalog(net, 2))
    assert out.allocation.node_assignment == {0: 0, 1: 1}  # hop 1 beats the roomier node at hop 3


def test_first_component_by_availability_then_load():
    caps = [ResourceVector(8, 16384, 1000, 8), ResourceVector(16, 32768, 1000, 0)]
    net = make_network(2, [(0, 1)], capacity=caps)
    (out,) = allocate_batch_greedy([make_request(0, [(1, 100, 1, 0)])], ResidualState(net), build_catalog(net, 2))
    # availability: node 0 = 0.5 + 0.5 + 1 + 1, node 1 = 1 + 1 + 1 + 0
    assert out.allocation.node_assignment == {0: 0}


def test_unroutable_link_rolls_back():
    net = make_network(3, [(0, 1), (1, 2)], capacity=ResourceVector(1, 1024, 10, 0))
    residual = ResidualState(net)
    catalog = build_catalog(net, 2)
    req = make_request(0, [(1, 10, 1, 0), (1, 10, 1, 0)], [(0, 1, 5.0, 5.0)])  # cannot colocate, 10 ms > 5 ms
    res, eres = residual.node_residual.copy(), residual.edge_residual.copy()
    out = place_request_greedy(req, res, eres, catalog, _DeviceRanker(residual, net.hop_distances()))
    assert not out.accepted and "no feasible path" in out.reason
    assert np.array_equal(res, residual.node_residual) and np.array_equal(eres, residual.edge_residual)


def test_oldest_app_takes_the_only_gpus():
    caps = [ResourceVector(8, 16384, 1000, 2), ResourceVector(16, 32768, 1000, 0)]
    net = make_network(2, [(0, 1)], capacity=caps)
    reqs = [make_request(2, [(1, 100, 1, 2)], arrival=300),
            make_request(0, [(1, 100, 1, 2)], arrival=100),
            make_request(1, [(1, 100, 1, 0)], arrival=200)]
    outs = allocate_batch_greedy(reqs, ResidualState(net), build_catalog(net, 2))
    assert [o.request_id for o in outs] == [0, 1, 2]
    assert [o.accepted for o in outs] == [True, True, False]
    assert outs[0].allocation.node_assignment == {0: 0}


def test_arrival_order_ties_by_id():
    reqs = [make_request(5, [(1, 1, 1, 0)], arrival=10), make_request(3, [(1, 1, 1, 0)], arrival=10),
            make_request(9, [(1, 1, 1, 0)], arrival=5)]
    assert [r.id for r in arrival_order(reqs)] == [9, 3, 5]


def test_batch_on_generated_scenario_is_valid_and_deterministic():
    sc = generate_scenario(11)
    catalog = build_catalog(sc.substrate, 4)
    residual = ResidualState(sc.substrate)
    before = residual.copy()
    alloc = GreedyAllocator(catalog)
    outs, _ = alloc(sc.workload[:40], residual, 0)
    again, _ = alloc(sc.workload[:40], residual, 0)
    assert residual == before
    assert [(o.request_id, o.allocation) for o in outs] == [(o.request_id, o.allocation) for o in again]
    placed = [(r, o.allocation) for r, o in zip(arrival_order(sc.workload[:40]), outs) if o.accepted]
    assert placed and validate_allocations(sc.substrate, placed) == []
