"""Workload trees: per-root transmission plans derived from routed paths.

For every root server, the routes of all other servers toward it are overlaid
into a node tree (first-writer-wins at join points). Each non-root server's
path then contributes one workload per physical hop, chained by prefix
dependencies, and workloads that share a link, direction and root are merged
when the receiving node is a server. Switches cannot aggregate, so
switch-headed workloads are never merged.

Two totals matter downstream and are both exposed:

* ``num_workloads`` -- schedulable units after merging (one per link occupation);
* ``num_flows``     -- merged server-to-server flows, i.e. one aggregated
  contribution per (root, origin server) pair. This is the convention behind
  the reference workload totals for the DCell presets.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

from .topology import Kind, TopologyGraph, bfs_distances, route_toward

DUMP_VERSION = 1


class WorkloadError(ValueError):
    pass


@dataclass(frozen=True)
class Workload:
    """One directed hop of aggregated gradient data over a single physical link."""

    wid: int
    root: int
    tail: int
    head: int
    link_id: int
    direction: int
    prefixes: frozenset
    merged_from: tuple  # origin server ids whose branches this hop carries

    @property
    def linkdir(self) -> int:
        return 2 * self.link_id + self.direction


@dataclass(frozen=True)
class NodeTree:
    """Per-root overlay of shortest routes; parent pointers aim at the root."""

    root: int
    parent: dict  # node -> (parent node, link_id)

    @property
    def members(self):
        return set(self.parent) | {self.root}

    def path_to_root(self, node):
        hops = []
        cur = node
        while cur != self.root:
            nxt, lid = self.parent[cur]
            hops.append((cur, nxt, lid))
            cur = nxt
        return hops


@dataclass(frozen=True)
class WorkloadTree:
    """All workloads whose data is destined to one root server."""

    root: int
    workloads: tuple

    @property
    def leaf_ids(self):
        return [w.wid for w in self.workloads if not w.prefixes]

    @property
    def num_workloads(self):
        return len(self.workloads)

    @property
    def origins(self):
        out = set()
        for w in self.workloads:
            out.update(w.merged_from)
        return out

    @property
    def num_flows(self):
        """Merged flows: one aggregated contribution per origin server."""
        return len(self.origins)


@dataclass(frozen=True)
class WorkloadForest:
    """One merged tree per root, with globally unique workload ids."""

    topology_name: str
    trees: tuple
    pre_merge_total: int

    @property
    def workloads(self):
        return [w for t in self.trees for w in t.workloads]

    @property
    def num_workloads(self):
        return sum(t.num_workloads for t in self.trees)

    @property
    def num_flows(self):
        return sum(t.num_flows for t in self.trees)

    def tree_index(self):
        """workload id -> position of its tree in root order."""
        out = {}
        for i, t in enumerate(self.trees):
            for w in t.workloads:
                out[w.wid] = i
        return out


def build_node_tree(g: TopologyGraph, root) -> NodeTree:
    """Overlay shortest routes of every other server toward `root`.

    Servers are processed in ascending id; a path is truncated at the first
    node already in the tree, so earlier writers keep their parent assignment
    and the result is a tree.
    """
    root_id = root.id if hasattr(root, "id") else int(root)
    if g.kind_of(root_id) is not Kind.SERVER:
        raise WorkloadError(f"node tree root must be a server, got {root_id}")
    dist = bfs_distances(g, root_id)
    members = {root_id}
    parent = {}
    for s in g.servers:
        if s.id == root_id or s.id in members:
            continue
        for hop in route_toward(g, dist, s.id).hops:
            if hop.tail in members:
                break
            parent[hop.tail] = (hop.head, hop.link_id)
            members.add(hop.tail)
    return NodeTree(root_id, parent)


def build_workload_tree(g: TopologyGraph, tree: NodeTree, id_start: int = 0) -> WorkloadTree:
    """Pre-merge workload tree: one workload per (origin server, tree hop)."""
    workloads = []
    wid = id_start
    for s in g.servers:
        if s.id == tree.root:
            continue
        prev = None
        for tail, head, lid in tree.path_to_root(s.id):
            prefixes = frozenset() if prev is None else frozenset((prev,))
            workloads.append(
                Workload(
                    wid=wid,
                    root=tree.root,
                    tail=tail,
                    head=head,
                    link_id=lid,
                    direction=g.link_direction(lid, tail),
                    prefixes=prefixes,
                    merged_from=(s.id,),
                )
            )
            prev = wid
            wid += 1
    return WorkloadTree(tree.root, tuple(workloads))


def merge_workloads(g: TopologyGraph, wt: WorkloadTree, id_start: int = 0) -> WorkloadTree:
    """Merge workloads sharing (link, direction, root) whose head is a server.

    Prefix sets of merged workloads are united; provenance accumulates in
    ``merged_from``. Switch-headed workloads are left one per branch. The
    result is canonical: groups are re-numbered by their smallest member id,
    so the output does not depend on any merge order.
    """
    groups = {}  # group key -> list of workloads
    for w in wt.workloads:
        if g.kind_of(w.head) is Kind.SERVER:
            key = ("link", w.link_id, w.direction)
        else:
            key = ("wid", w.wid)
        groups.setdefault(key, []).append(w)

    ordered = sorted(groups.values(), key=lambda ws: min(w.wid for w in ws))
    remap = {}
    for new_idx, ws in enumerate(ordered):
        for w in ws:
            remap[w.wid] = id_start + new_idx

    merged = []
    for new_idx, ws in enumerate(ordered):
        prefixes = frozenset(remap[p] for w in ws for p in w.prefixes)
        origins = tuple(sorted(o for w in ws for o in w.merged_from))
        first = ws[0]
        merged.append(
            Workload(
                wid=id_start + new_idx,
                root=first.root,
                tail=first.tail,
                head=first.head,
                link_id=first.link_id,
                direction=first.direction,
                prefixes=prefixes,
                merged_from=origins,
            )
        )
    return WorkloadTree(wt.root, tuple(merged))


def build_all_trees(g: TopologyGraph) -> WorkloadForest:
    """One merged workload tree per server root, with global dense ids."""
    if g.num_servers < 2:
        raise WorkloadError("need at least 2 servers")
    trees = []
    pre_total = 0
    offset = 0
    for root in g.servers:
        node_tree = build_node_tree(g, root.id)
        pre = build_workload_tree(g, node_tree)
        pre_total += pre.num_workloads
        merged = merge_workloads(g, pre, id_start=offset)
        offset += merged.num_workloads
        trees.append(merged)
    return WorkloadForest(g.name, tuple(trees), pre_total)


# -- integrity checks ------------------------------------------------------


def toposort(workloads) -> list:
    """Prefix-respecting order of workload ids; raises on a cycle."""
    by_id = {w.wid: w for w in workloads}
    indeg = {w.wid: len(w.prefixes) for w in workloads}
    dependents = {w.wid: [] for w in workloads}
    for w in workloads:
        for p in w.prefixes:
            if p not in by_id:
                raise WorkloadError(f"workload {w.wid} has unknown prefix {p}")
            dependents[p].append(w.wid)
    order = sorted(wid for wid, d in indeg.items() if d == 0)
    out = []
    i = 0
    frontier = list(order)
    while i < len(frontier):
        wid = frontier[i]
        i += 1
        out.append(wid)
        for d in dependents[wid]:
            indeg[d] -= 1
            if indeg[d] == 0:
                frontier.append(d)
    if len(out) != len(workloads):
        raise WorkloadError("prefix graph contains a cycle")
    return out


def delivered_tokens(tree: WorkloadTree) -> set:
    """Origin servers whose contribution reaches the root, by token propagation.

    Executing the tree in any prefix-respecting order must deliver one
    aggregate carrying every other server's token.
    """
    by_id = {w.wid: w for w in tree.workloads}
    tokens = {}
    for wid in toposort(tree.workloads):
        w = by_id[wid]
        carried = set(o for o in w.merged_from if o == w.tail)
        for p in w.prefixes:
            carried |= tokens[p]
        tokens[wid] = carried
    received = set()
    for w in tree.workloads:
        if w.head == tree.root:
            received |= tokens[w.wid]
    return received


def check_tree(g: TopologyGraph, tree: WorkloadTree, expect_merged=True):
    """Raise WorkloadError when a structural invariant does not hold."""
    seen_server_linkdir = {}
    for w in tree.workloads:
        _, a, b = g.links[w.link_id]
        if {w.tail, w.head} != {a, b}:
            raise WorkloadError(f"workload {w.wid}: endpoints do not match link {w.link_id}")
        if g.link_direction(w.link_id, w.tail) != w.direction:
            raise WorkloadError(f"workload {w.wid}: direction flag inconsistent")
        if g.kind_of(w.head) is Kind.SWITCH and len(w.merged_from) != 1:
            raise WorkloadError(f"workload {w.wid}: switch-headed workloads never merge")
        if expect_merged and g.kind_of(w.head) is Kind.SERVER:
            key = (w.link_id, w.direction)
            if key in seen_server_linkdir:
                raise WorkloadError(
                    f"workloads {seen_server_linkdir[key]} and {w.wid} share a server-headed link"
                )
            seen_server_linkdir[key] = w.wid
    toposort(tree.workloads)
    expected = {s.id for s in g.servers if s.id != tree.root}
    got = delivered_tokens(tree)
    if got != expected:
        raise WorkloadError(
            f"root {tree.root} receives {len(got)} contributions, expected {len(expected)}"
        )


# -- dump format -------------------------------------------------------------


def forest_to_dict(forest: WorkloadForest) -> dict:
    return {
        "version": DUMP_VERSION,
        "topology": forest.topology_name,
        "pre_merge_total": forest.pre_merge_total,
        "num_workloads": forest.num_workloads,
        "num_flows": forest.num_flows,
        "trees": [
            {
                "root": t.root,
                "workloads": [
                    {
                        "id": w.wid,
                        "root": w.root,
                        "tail": w.tail,
                        "head": w.head,
                        "link": w.link_id,
                        "direction": w.direction,
                        "prefixes": sorted(w.prefixes),
                        "merged_from": list(w.merged_from),
                    }
                    for w in t.workloads
                ],
            }
            for t in forest.trees
        ],
    }


def forest_from_dict(data: dict) -> WorkloadForest:
    if data.get("version") != DUMP_VERSION:
        raise WorkloadError(f"unsupported workload dump version {data.get('version')!r}")
    trees = []
    for td in data["trees"]:
        workloads = tuple(
            Workload(
                wid=wd["id"],
                root=wd["root"],
                tail=wd["tail"],
                head=wd["head"],
                link_id=wd["link"],
                direction=wd["direction"],
                prefixes=frozenset(wd["prefixes"]),
                merged_from=tuple(wd["merged_from"]),
            )
            for wd in td["workloads"]
        )
        trees.append(WorkloadTree(td["root"], workloads))
    return WorkloadForest(data.get("topology", "?"), tuple(trees), data.get("pre_merge_total", 0))


def save_forest(forest: WorkloadForest, path):
    Path(path).write_text(json.dumps(forest_to_dict(forest)) + "\n")


def load_forest(path) -> WorkloadForest:
    return forest_from_dict(json.loads(Path(path).read_text()))
