"""Workload tree construction and merge tests.

Expected values marked as derived were computed with the independent oracles
in this file (test-local BFS / brute-force counting over the parent maps).
"""

import collections

import pytest
from hypothesis import given, settings, strategies as st

from arsched.presets import PRESETS
from arsched.topology import Kind, build_bcube, build_dcell, build_jellyfish
from arsched.workload import (
    WorkloadError,
    build_all_trees,
    build_node_tree,
    build_workload_tree,
    check_tree,
    delivered_tokens,
    forest_from_dict,
    forest_to_dict,
    load_forest,
    merge_workloads,
    save_forest,
    toposort,
)


def bfs_oracle(g, src):
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


def tree_depth(tree, node):
    d = 0
    cur = node
    while cur != tree.root:
        cur = tree.parent[cur][0]
        d += 1
    return d


# -- node trees -----------------------------------------------------------------


def test_bcube20_node_tree():
    g = build_bcube(2, 0)
    tree = build_node_tree(g, 0)
    assert tree.parent == {1: (2, 1), 2: (0, 0)}  # server1 -> switch -> server0


def test_node_tree_root_must_be_server():
    g = build_bcube(2, 0)
    with pytest.raises(WorkloadError):
        build_node_tree(g, 2)


def test_bcube31_node_tree_distances_match_bfs():
    g = build_bcube(3, 1)
    tree = build_node_tree(g, 0)
    servers = {s.id for s in g.servers}
    assert servers <= tree.members
    oracle = bfs_oracle(g, 0)
    for s in servers:
        assert tree_depth(tree, s) == oracle[s]


def test_dcell_node_tree_structure():
    n = 4
    g = build_dcell(n, 1)
    root = 0
    tree = build_node_tree(g, root)
    own_switch = g.num_servers + root // n
    assert own_switch in tree.members
    # every leaf-to-root path crosses at least one cell boundary link
    children = collections.defaultdict(list)
    for node, (par, _) in tree.parent.items():
        children[par].append(node)
    leaves = [m for m in tree.members if m != root and not children[m]]
    assert leaves
    for leaf in leaves:
        cells = set()
        cur = leaf
        crossed = False
        while cur != root:
            nxt = tree.parent[cur][0]
            if (
                g.kind_of(cur) is Kind.SERVER
                and g.kind_of(nxt) is Kind.SERVER
            ):
                crossed = True
            cur = nxt
        assert crossed


def test_node_tree_is_tree():
    for label in ["bcube-4-1", "dcell-4-1", "jellyfish-1"]:
        g = PRESETS[label].build()
        tree = build_node_tree(g, 0)
        # single parent per member, acyclic by walking to root
        for node in tree.parent:
            assert tree_depth(tree, node) <= len(g.nodes)


# -- pre-merge workload trees ------------------------------------------------


def test_bcube20_premerge():
    g = build_bcube(2, 0)
    wt = build_workload_tree(g, build_node_tree(g, 0))
    assert wt.num_workloads == 2
    w1, w2 = wt.workloads
    assert (w1.tail, w1.head, w1.prefixes) == (1, 2, frozenset())
    assert (w2.tail, w2.head, w2.prefixes) == (2, 0, frozenset({w1.wid}))


@pytest.mark.parametrize("label", ["bcube-3-1", "dcell-4-1", "jellyfish-1"])
def test_premerge_count_is_total_tree_distance(label):
    g = PRESETS[label].build()
    tree = build_node_tree(g, 0)
    wt = build_workload_tree(g, tree)
    expected = sum(
        tree_depth(tree, s.id) for s in g.servers if s.id != 0
    )
    assert wt.num_workloads == expected


def test_premerge_shares_physical_links():
    # two branches traversing one shared link exist before merging
    g = build_bcube(3, 1)
    wt = build_workload_tree(g, build_node_tree(g, 0))
    usage = collections.Counter((w.link_id, w.direction) for w in wt.workloads)
    assert max(usage.values()) >= 2


# -- merge ---------------------------------------------------------------------


def test_merge_reduces_shared_links():
    g = build_bcube(3, 1)
    pre = build_workload_tree(g, build_node_tree(g, 0))
    post = merge_workloads(g, pre)
    assert post.num_workloads < pre.num_workloads
    check_tree(g, post)


def test_merge_identity_when_nothing_shared():
    g = build_bcube(2, 0)
    pre = build_workload_tree(g, build_node_tree(g, 0))
    post = merge_workloads(g, pre)
    assert post.num_workloads == pre.num_workloads
    assert [w.prefixes for w in post.workloads] == [w.prefixes for w in pre.workloads]


@pytest.mark.parametrize("label", sorted(PRESETS))
def test_merge_idempotent(label):
    g = PRESETS[label].build()
    forest = build_all_trees(g)
    for tree in forest.trees[:3]:
        start = min(w.wid for w in tree.workloads)
        again = merge_workloads(g, tree, id_start=start)
        assert again == tree


@given(seed=st.integers(0, 500))
@settings(max_examples=15, deadline=None)
def test_merge_idempotent_random_jellyfish(seed):
    g = build_jellyfish(8, 4, 8, seed=seed)
    pre = build_workload_tree(g, build_node_tree(g, 0))
    once = merge_workloads(g, pre)
    assert merge_workloads(g, once) == once


def test_merge_monotone_and_strict_on_reference_presets():
    for label in ["bcube-3-1", "bcube-4-1", "bcube-5-1", "dcell-4-1", "dcell-5-1", "dcell-6-1"]:
        g = PRESETS[label].build()
        forest = build_all_trees(g)
        assert forest.num_workloads < forest.pre_merge_total


def test_switch_headed_never_merged():
    g = build_dcell(4, 1)
    forest = build_all_trees(g)
    for tree in forest.trees:
        for w in tree.workloads:
            if g.kind_of(w.head) is Kind.SWITCH:
                assert len(w.merged_from) == 1


# -- totals ---------------------------------------------------------------------


def test_bcube20_forest():
    g = build_bcube(2, 0)
    forest = build_all_trees(g)
    assert len(forest.trees) == 2
    assert forest.num_workloads == 4
    assert forest.num_flows == 2


@pytest.mark.parametrize(
    "label,flows",
    [("dcell-4-1", 380), ("dcell-5-1", 870), ("dcell-6-1", 1722)],
)
def test_dcell_merged_flow_totals(label, flows):
    forest = build_all_trees(PRESETS[label].build())
    assert forest.num_flows == flows


def test_bcube31_schedulable_total():
    # deterministic regression; equals the reference workload total
    forest = build_all_trees(PRESETS["bcube-3-1"].build())
    assert forest.num_workloads == 144
    assert forest.num_flows == 72


def test_flow_totals_are_ordered_pairs():
    for label in ["bcube-4-1", "jellyfish-1"]:
        g = PRESETS[label].build()
        forest = build_all_trees(g)
        n = g.num_servers
        assert forest.num_flows == n * (n - 1)


# -- forest structure ------------------------------------------------------------


def test_global_ids_partition():
    forest = build_all_trees(build_dcell(4, 1))
    ids = [w.wid for t in forest.trees for w in t.workloads]
    assert ids == sorted(ids)
    assert ids == list(range(len(ids)))
    owner = {}
    for t in forest.trees:
        for w in t.workloads:
            assert w.wid not in owner
            owner[w.wid] = t.root
            assert w.root == t.root


def test_prefixes_stay_within_tree():
    forest = build_all_trees(build_dcell(4, 1))
    for t in forest.trees:
        ids = {w.wid for w in t.workloads}
        for w in t.workloads:
            assert w.prefixes <= ids


def test_build_deterministic():
    g = build_jellyfish(10, 4, 10, seed=0)
    a = build_all_trees(g)
    b = build_all_trees(g)
    assert forest_to_dict(a) == forest_to_dict(b)


@pytest.mark.parametrize("label", sorted(PRESETS))
def test_completeness_every_root_aggregates_everyone(label):
    g = PRESETS[label].build()
    forest = build_all_trees(g)
    servers = {s.id for s in g.servers}
    for tree in forest.trees:
        assert delivered_tokens(tree) == servers - {tree.root}


def test_toposort_detects_cycles():
    forest = build_all_trees(build_bcube(2, 0))
    data = forest_to_dict(forest)
    # inject a cycle: make the first workload depend on its dependent
    w0, w1 = data["trees"][0]["workloads"]
    w0["prefixes"] = [w1["id"]]
    broken = forest_from_dict(data)
    with pytest.raises(WorkloadError):
        toposort(broken.trees[0].workloads)


def test_dump_roundtrip(tmp_path):
    forest = build_all_trees(build_bcube(3, 1))
    path = tmp_path / "forest.json"
    save_forest(forest, path)
    loaded = load_forest(path)
    assert forest_to_dict(loaded) == forest_to_dict(forest)
