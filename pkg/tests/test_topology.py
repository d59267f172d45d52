"""Topology generator and routing tests.

The BFS oracle here is test-local and independent of the library's routing
implementation.
"""

import collections

import pytest
from hypothesis import given, settings, strategies as st

from arsched.topology import (
    Kind,
    TopologyError,
    TopologyGraph,
    build_bcube,
    build_dcell,
    build_jellyfish,
    shortest_route,
)


def bfs_oracle(g, src):
    """Plain BFS distances, written independently of arsched.topology."""
    adj = collections.defaultdict(list)
    for _, a, b in g.links:
        adj[a].append(b)
        adj[b].append(a)
    dist = {src: 0}
    q = collections.deque([src])
    while q:
        u = q.popleft()
        for v in adj[u]:
            if v not in dist:
                dist[v] = dist[u] + 1
                q.append(v)
    return dist


# -- closed forms -------------------------------------------------------------


@pytest.mark.parametrize("n", [2, 3, 4, 5])
@pytest.mark.parametrize("k", [0, 1])
def test_bcube_closed_forms(n, k):
    g = build_bcube(n, k)
    assert g.num_servers == n ** (k + 1)
    assert len(g.switches) == (k + 1) * n ** k
    assert g.num_links == (k + 1) * n ** (k + 1)


@pytest.mark.parametrize("n", [2, 3, 4, 5, 6])
def test_dcell_closed_forms(n):
    g = build_dcell(n, 1)
    assert g.num_servers == n * (n + 1)
    assert len(g.switches) == n + 1
    assert g.num_links == n * (n + 1) + (n + 1) * n // 2


@pytest.mark.parametrize(
    "n,k,nodes,links",
    [(3, 1, 15, 18), (4, 1, 24, 32), (5, 1, 35, 50), (2, 0, 3, 2)],
)
def test_bcube_reference_sizes(n, k, nodes, links):
    g = build_bcube(n, k)
    assert (len(g.nodes), g.num_links) == (nodes, links)


@pytest.mark.parametrize("n,nodes,links", [(4, 25, 30), (5, 36, 45), (6, 49, 63)])
def test_dcell_reference_sizes(n, nodes, links):
    g = build_dcell(n, 1)
    assert (len(g.nodes), g.num_links) == (nodes, links)


# -- family wiring invariants -----------------------------------------------


def kinds_of_link(g, link):
    _, a, b = link
    return {g.kind_of(a), g.kind_of(b)}


def test_bcube_links_always_server_switch():
    g = build_bcube(3, 1)
    for link in g.links:
        assert kinds_of_link(g, link) == {Kind.SERVER, Kind.SWITCH}


def test_dcell_cross_cell_links():
    n = 4
    g = build_dcell(n, 1)
    server_server = [l for l in g.links if kinds_of_link(g, l) == {Kind.SERVER}]
    switch_switch = [l for l in g.links if kinds_of_link(g, l) == {Kind.SWITCH}]
    assert len(server_server) == (n + 1) * n // 2
    assert not switch_switch
    # exactly one link between every pair of cells
    pairs = set()
    for _, a, b in server_server:
        pair = frozenset((a // n, b // n))
        assert pair not in pairs
        pairs.add(pair)
    assert len(pairs) == (n + 1) * n // 2


def test_bcube_server_degree():
    n, k = 4, 1
    g = build_bcube(n, k)
    deg = collections.Counter()
    for _, a, b in g.links:
        deg[a] += 1
        deg[b] += 1
    for s in g.servers:
        assert deg[s.id] == k + 1
    for sw in g.switches:
        assert deg[sw.id] == n


# -- jellyfish ---------------------------------------------------------------


@pytest.mark.parametrize(
    "sw,deg,srv,nodes,links",
    [(10, 4, 10, 20, 30), (15, 4, 15, 30, 45), (19, 4, 21, 40, 59)],
)
def test_jellyfish_preset_sizes(sw, deg, srv, nodes, links):
    g = build_jellyfish(sw, deg, srv, seed=0)
    assert (len(g.nodes), g.num_links) == (nodes, links)


def test_jellyfish_deterministic():
    a = build_jellyfish(10, 4, 10, seed=7)
    b = build_jellyfish(10, 4, 10, seed=7)
    assert a.links == b.links
    c = build_jellyfish(10, 4, 10, seed=8)
    assert c.links != a.links


@given(seed=st.integers(min_value=0, max_value=10_000))
@settings(max_examples=20, deadline=None)
def test_jellyfish_switch_mesh_regular_and_connected(seed):
    g = build_jellyfish(10, 4, 10, seed=seed)
    deg = collections.Counter()
    mesh = collections.defaultdict(list)
    for _, a, b in g.links:
        if g.kind_of(a) is Kind.SWITCH and g.kind_of(b) is Kind.SWITCH:
            deg[a] += 1
            deg[b] += 1
            mesh[a].append(b)
            mesh[b].append(a)
    assert all(deg[sw.id] == 4 for sw in g.switches)
    start = g.switches[0].id
    seen = {start}
    stack = [start]
    while stack:
        u = stack.pop()
        for v in mesh[u]:
            if v not in seen:
                seen.add(v)
                stack.append(v)
    assert len(seen) == len(g.switches)
    # every server hangs off exactly one switch
    for s in g.servers:
        assert sum(1 for _, a, b in g.links if s.id in (a, b)) == 1


def test_jellyfish_unrealizable_degree_rejected():
    with pytest.raises(TopologyError):
        build_jellyfish(5, 5, 5, seed=0)  # degree must be < switches
    with pytest.raises(TopologyError):
        build_jellyfish(5, 3, 5, seed=0)  # odd stub total


# -- parameter validation ------------------------------------------------------


@pytest.mark.parametrize("n,k", [(1, 0), (0, 1), (2, -1)])
def test_bcube_bad_params(n, k):
    with pytest.raises(TopologyError):
        build_bcube(n, k)


def test_dcell_bad_params():
    with pytest.raises(TopologyError):
        build_dcell(1, 1)
    with pytest.raises(TopologyError):
        build_dcell(4, 2)


def test_node_count_guard():
    with pytest.raises(TopologyError):
        build_bcube(8, 3)


# -- routing -------------------------------------------------------------------


def test_route_to_self_is_empty():
    g = build_bcube(3, 1)
    assert len(shortest_route(g, 0, 0)) == 0


def test_bcube20_route():
    g = build_bcube(2, 0)
    route = shortest_route(g, 0, 1)
    assert len(route) == 2
    assert route.nodes == (0, 2, 1)  # through the only switch


def test_bcube31_route_lengths_match_oracle():
    g = build_bcube(3, 1)
    for dst in [s.id for s in g.servers]:
        oracle = bfs_oracle(g, dst)
        for src in [s.id for s in g.servers]:
            route = shortest_route(g, src, dst)
            assert len(route) == oracle[src]
            if src != dst:
                assert len(route) in (2, 4)


def test_route_is_simple_and_consistent():
    g = build_dcell(4, 1)
    route = shortest_route(g, 18, 0)
    nodes = route.nodes
    assert len(set(nodes)) == len(nodes)
    for hop, nxt in zip(route.hops, route.hops[1:]):
        assert hop.head == nxt.tail


@given(st.integers(0, 19), st.integers(0, 19))
@settings(max_examples=40, deadline=None)
def test_route_lengths_symmetric(a, b):
    g = build_dcell(4, 1)
    assert len(shortest_route(g, a, b)) == len(shortest_route(g, b, a))


def test_route_deterministic_tie_break():
    g = build_bcube(3, 1)
    r1 = shortest_route(g, 4, 0)
    r2 = shortest_route(g, 4, 0)
    assert r1 == r2
    # smallest-id next hop: server 4 = (1,1) prefers its level-0 switch (id 10)
    assert r1.hops[0].head == 10


# -- serialization ---------------------------------------------------------------


def test_topology_roundtrip(tmp_path):
    g = build_jellyfish(10, 4, 10, seed=3)
    path = tmp_path / "topo.json"
    g.save(path)
    g2 = TopologyGraph.load(path)
    assert g2.nodes == g.nodes
    assert g2.links == g.links
    assert g2.params == g.params
    assert g2.seed == g.seed


def test_malformed_topology_rejected():
    with pytest.raises(TopologyError):
        TopologyGraph("x", [], [(0, 0, 0)])
    from arsched.topology import NodeRef

    nodes = [NodeRef(0, Kind.SERVER), NodeRef(1, Kind.SERVER)]
    with pytest.raises(TopologyError):
        TopologyGraph("x", nodes, [(0, 0, 1), (1, 0, 1)])  # duplicate link
    with pytest.raises(TopologyError):
        TopologyGraph("x", nodes, [])  # disconnected
