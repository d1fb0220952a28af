import pytest

from meshvne.model import (ResourceVector, SubstrateEdge, SubstrateNetwork, SubstrateNode, VirtualComponent,
                           VirtualLink, VirtualRequest)

BIG = ResourceVector(16, 32768, 1000, 8)


def make_network(n, edges, capacity=BIG, latency=10.0, bandwidth=100.0):
    caps = capacity if isinstance(capacity, (list, tuple)) else [capacity] * n
    nodes = [SubstrateNode(i, (float(i), 0.0, 0.0), caps[i]) for i in range(n)]
    return SubstrateNetwork(nodes, [SubstrateEdge(u, v, bandwidth, latency) for u, v in edges])


def make_request(rid, demands, links=(), arrival=0, lifetime=60_000, retries=0):
    comps = tuple(VirtualComponent(i, ResourceVector(*d)) for i, d in enumerate(demands))
    vlinks = tuple(VirtualLink(*l) for l in links)
    return VirtualRequest(rid, comps, vlinks, arrival, lifetime, retries)


@pytest.fixture
def line3():
    return make_network(3, [(0, 1), (1, 2)])


@pytest.fixture
def cycle4():
    return make_network(4, [(0, 1), (1, 2), (2, 3), (3, 0)])


CRITERIA = []  # acceptance lines, echoed again in the terminal summary


def pytest_terminal_summary(terminalreporter):
    if CRITERIA:
        terminalreporter.section("acceptance criteria")
        for line in sorted(CRITERIA):
            terminalreporter.write_line(line)
