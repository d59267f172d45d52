"""Data-center topology generators and deterministic shortest-path routing.

Three families are supported: BCube(n, k), DCell(n, level 1) and Jellyfish
(random regular switch mesh with one link per server). Node ids are dense,
servers first and switches after, so that observation vectors can index
servers directly. Links are undirected and unit-capacity: one workload per
round per direction (full duplex).
"""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass
from enum import Enum
from itertools import combinations
from pathlib import Path

from .rng import stream

# Guard against runaway generator parameters.
MAX_NODES = 4096

FORMAT_VERSION = 1


class Kind(str, Enum):
    SERVER = "server"
    SWITCH = "switch"


@dataclass(frozen=True)
class NodeRef:
    id: int
    kind: Kind


@dataclass(frozen=True)
class Hop:
    """One directed traversal of a physical link."""

    link_id: int
    tail: int
    head: int


@dataclass(frozen=True)
class Route:
    """Ordered hops from a source node to a destination node (simple path)."""

    hops: tuple

    def __len__(self):
        return len(self.hops)

    @property
    def nodes(self):
        if not self.hops:
            return ()
        return (self.hops[0].tail,) + tuple(h.head for h in self.hops)


class TopologyError(ValueError):
    pass


class TopologyGraph:
    """Immutable undirected graph of typed nodes and unit-capacity links.

    Safe to share read-only across concurrent workers once constructed.
    """

    def __init__(self, name, nodes, links, params=None, seed=None):
        self.name = name
        self.nodes = tuple(nodes)
        self.links = tuple(links)  # (link_id, a, b)
        self.params = dict(params or {})
        self.seed = seed
        self._validate()
        adj = {node.id: [] for node in self.nodes}
        for lid, a, b in self.links:
            adj[a].append((b, lid))
            adj[b].append((a, lid))
        # Sorted adjacency gives deterministic BFS tie-breaking.
        self._adj = {u: tuple(sorted(neigh)) for u, neigh in adj.items()}

    def _validate(self):
        ids = [n.id for n in self.nodes]
        if ids != list(range(len(ids))):
            raise TopologyError("node ids must be dense from 0")
        seen = set()
        for lid, a, b in self.links:
            if a == b:
                raise TopologyError(f"self loop on node {a}")
            key = frozenset((a, b))
            if key in seen:
                raise TopologyError(f"duplicate link {a}-{b}")
            seen.add(key)
        if [l[0] for l in self.links] != list(range(len(self.links))):
            raise TopologyError("link ids must be dense from 0")
        if self.nodes and not self._connected():
            raise TopologyError("graph is not connected")

    def _connected(self):
        adj = {n.id: [] for n in self.nodes}
        for _, a, b in self.links:
            adj[a].append(b)
            adj[b].append(a)
        seen = {0}
        frontier = deque([0])
        while frontier:
            u = frontier.popleft()
            for v in adj[u]:
                if v not in seen:
                    seen.add(v)
                    frontier.append(v)
        return len(seen) == len(self.nodes)

    # -- basic accessors -------------------------------------------------

    @property
    def servers(self):
        return [n for n in self.nodes if n.kind is Kind.SERVER]

    @property
    def switches(self):
        return [n for n in self.nodes if n.kind is Kind.SWITCH]

    @property
    def num_servers(self):
        return sum(1 for n in self.nodes if n.kind is Kind.SERVER)

    @property
    def num_links(self):
        return len(self.links)

    def kind_of(self, node_id) -> Kind:
        return self.nodes[node_id].kind

    def neighbors(self, node_id):
        """Sorted (neighbor, link_id) pairs."""
        return self._adj[node_id]

    def link_direction(self, link_id, tail) -> int:
        """0 when traveling a->b of the stored link, 1 for b->a."""
        _, a, b = self.links[link_id]
        if tail == a:
            return 0
        if tail == b:
            return 1
        raise TopologyError(f"node {tail} is not an endpoint of link {link_id}")

    # -- serialization ---------------------------------------------------

    def to_dict(self):
        return {
            "version": FORMAT_VERSION,
            "name": self.name,
            "params": self.params,
            "seed": self.seed,
            "nodes": [[n.id, n.kind.value] for n in self.nodes],
            "links": [list(l) for l in self.links],
        }

    @classmethod
    def from_dict(cls, data):
        if data.get("version") != FORMAT_VERSION:
            raise TopologyError(f"unsupported topology format: {data.get('version')!r}")
        nodes = [NodeRef(i, Kind(k)) for i, k in data["nodes"]]
        links = [tuple(l) for l in data["links"]]
        return cls(data["name"], nodes, links, data.get("params"), data.get("seed"))

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_dict(), indent=1) + "\n")

    @classmethod
    def load(cls, path):
        return cls.from_dict(json.loads(Path(path).read_text()))


# -- generators ----------------------------------------------------------


def build_bcube(n: int, k: int) -> TopologyGraph:
    """BCube with n-port switches and k+1 levels.

    Servers carry k+1 base-n digits; the level-l switch with index m connects
    the n servers whose addresses agree everywhere except digit l. Counts:
    n^(k+1) servers, (k+1)*n^k switches, (k+1)*n^(k+1) links.
    """
    if n < 2 or k < 0:
        raise TopologyError(f"bcube requires n >= 2 and k >= 0, got n={n} k={k}")
    num_servers = n ** (k + 1)
    per_level = n ** k
    total = num_servers + (k + 1) * per_level
    if total > MAX_NODES:
        raise TopologyError(f"bcube({n},{k}) would have {total} nodes (max {MAX_NODES})")

    nodes = [NodeRef(i, Kind.SERVER) for i in range(num_servers)]
    for sw in range(num_servers, total):
        nodes.append(NodeRef(sw, Kind.SWITCH))

    links = []
    for level in range(k + 1):
        base = num_servers + level * per_level
        for sid in range(num_servers):
            low = sid % (n ** level)
            high = sid // (n ** (level + 1))
            m = high * (n ** level) + low
            links.append((len(links), sid, base + m))
    return TopologyGraph("bcube", nodes, links, params={"n": n, "k": k})


def build_dcell(n: int, level: int = 1) -> TopologyGraph:
    """DCell level 1: n+1 cells of n servers plus one switch each.

    Server [c, j] has id c*n + j. Within a cell every server links to the
    cell switch; cells i < j are joined by the single link ([i, j-1], [j, i]).
    """
    if n < 2:
        raise TopologyError(f"dcell requires n >= 2, got n={n}")
    if level != 1:
        raise TopologyError("only dcell level 1 is supported")
    cells = n + 1
    num_servers = n * cells
    total = num_servers + cells
    if total > MAX_NODES:
        raise TopologyError(f"dcell({n}) would have {total} nodes (max {MAX_NODES})")

    nodes = [NodeRef(i, Kind.SERVER) for i in range(num_servers)]
    nodes.extend(NodeRef(num_servers + c, Kind.SWITCH) for c in range(cells))

    links = []
    for c in range(cells):
        for j in range(n):
            links.append((len(links), c * n + j, num_servers + c))
    for i, j in combinations(range(cells), 2):
        links.append((len(links), i * n + (j - 1), j * n + i))
    return TopologyGraph("dcell", nodes, links, params={"n": n, "level": level})


def _regular_graph_edges(num, degree, rng):
    """One stub-matching attempt at a simple `degree`-regular graph on
    `num` vertices; returns None when the pairing collides."""
    stubs = [v for v in range(num) for _ in range(degree)]
    rng.shuffle(stubs)
    edges = set()
    for i in range(0, len(stubs), 2):
        a, b = stubs[i], stubs[i + 1]
        if a == b:
            return None
        if a > b:
            a, b = b, a
        if (a, b) in edges:
            return None
        edges.add((a, b))
    return edges


def _edges_connected(num, edges):
    adj = {v: [] for v in range(num)}
    for a, b in edges:
        adj[a].append(b)
        adj[b].append(a)
    seen = {0}
    frontier = deque([0])
    while frontier:
        u = frontier.popleft()
        for v in adj[u]:
            if v not in seen:
                seen.add(v)
                frontier.append(v)
    return len(seen) == num


def build_jellyfish(num_switches: int, switch_degree: int, num_servers: int, seed: int) -> TopologyGraph:
    """Random regular switch mesh; each server attaches round-robin to one switch.

    Generation is a pure function of the arguments: attempts draw from
    sub-streams (seed, attempt) until the sampled mesh is simple and
    connected.
    """
    if num_switches * switch_degree % 2 != 0 or not 0 < switch_degree < num_switches:
        raise TopologyError(
            f"no {switch_degree}-regular graph on {num_switches} switches exists"
        )
    total = num_switches + num_servers
    if total > MAX_NODES:
        raise TopologyError(f"jellyfish would have {total} nodes (max {MAX_NODES})")

    edges = None
    for attempt in range(1000):
        rng = stream(seed, "jellyfish", attempt)
        candidate = _regular_graph_edges(num_switches, switch_degree, rng)
        if candidate is not None and _edges_connected(num_switches, candidate):
            edges = candidate
            break
    if edges is None:
        raise TopologyError("failed to sample a connected regular switch mesh")

    nodes = [NodeRef(i, Kind.SERVER) for i in range(num_servers)]
    nodes.extend(NodeRef(num_servers + s, Kind.SWITCH) for s in range(num_switches))
    links = []
    for i in range(num_servers):
        links.append((len(links), i, num_servers + (i % num_switches)))
    for a, b in sorted(edges):
        links.append((len(links), num_servers + a, num_servers + b))
    return TopologyGraph(
        "jellyfish",
        nodes,
        links,
        params={
            "num_switches": num_switches,
            "switch_degree": switch_degree,
            "num_servers": num_servers,
        },
        seed=seed,
    )


# -- routing ---------------------------------------------------------------


def bfs_distances(g: TopologyGraph, target: int) -> dict:
    """Hop distance from every node to `target`."""
    dist = {target: 0}
    frontier = deque([target])
    while frontier:
        u = frontier.popleft()
        for v, _ in g.neighbors(u):
            if v not in dist:
                dist[v] = dist[u] + 1
                frontier.append(v)
    return dist


def route_toward(g: TopologyGraph, dist: dict, src: int) -> Route:
    """Walk from src down a precomputed distance field, smallest node id first."""
    if src not in dist:
        raise TopologyError(f"node {src} cannot reach the routing target")
    hops = []
    cur = src
    while dist[cur] > 0:
        nxt, lid = min(
            (v, l) for v, l in g.neighbors(cur) if dist.get(v, -1) == dist[cur] - 1
        )
        hops.append(Hop(lid, cur, nxt))
        cur = nxt
    return Route(tuple(hops))


def shortest_route(g: TopologyGraph, src, dst) -> Route:
    """Breadth-first shortest path; ties broken by smallest next-hop node id.

    The route from a node to itself is empty.
    """
    src_id = src.id if isinstance(src, NodeRef) else int(src)
    dst_id = dst.id if isinstance(dst, NodeRef) else int(dst)
    for node in (src_id, dst_id):
        if not 0 <= node < len(g.nodes):
            raise TopologyError(f"node {node} does not exist")
    return route_toward(g, bfs_distances(g, dst_id), src_id)
