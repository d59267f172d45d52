"""Simulator semantics: readiness, conflicts, atomic rounds, metrics."""

import itertools

import pytest

from arsched.baselines import GreedyScheduler, run_scheduler
from arsched.presets import PRESETS
from arsched.rng import stream
from arsched.simulator import (
    ConflictError,
    NotReadyError,
    SimConfig,
    Simulation,
    conflicts,
    longest_chain,
    round_lower_bound,
    replay_is_safe,
    read_log,
)
from arsched.topology import build_bcube, build_dcell
from arsched.workload import build_all_trees


def make_sim(label):
    g = PRESETS[label].build()
    forest = build_all_trees(g)
    return Simulation(forest.workloads, SimConfig.from_topology(g)), forest, g


# -- reset -----------------------------------------------------------------------


def test_reset_bcube20():
    sim, forest, _ = make_sim_from(build_bcube(2, 0))
    assert len(sim.ready_ids()) == 2
    assert sim.done_count == 0
    assert not sim.is_done()


def make_sim_from(g):
    forest = build_all_trees(g)
    return Simulation(forest.workloads, SimConfig.from_topology(g)), forest, g


def test_reset_ready_equals_leaf_count_dcell():
    sim, forest, _ = make_sim_from(build_dcell(4, 1))
    leaves = sum(len(t.leaf_ids) for t in forest.trees)
    assert len(sim.ready_ids()) == leaves
    assert leaves == 300  # 15 first hops per tree, 20 trees


def test_zero_workloads_done_at_round_zero():
    sim = Simulation([], SimConfig(num_servers=2, num_links=2))
    assert sim.is_done()
    assert sim.metrics().total_rounds == 0


# -- conflicts --------------------------------------------------------------------


def test_conflict_with_self():
    sim, forest, _ = make_sim_from(build_bcube(2, 0))
    w = forest.workloads[0]
    assert conflicts(w, w)


def test_opposite_directions_do_not_conflict():
    sim, forest, _ = make_sim_from(build_bcube(2, 0))
    by_link = {}
    for w in forest.workloads:
        by_link.setdefault(w.link_id, []).append(w)
    two = next(ws for ws in by_link.values() if len(ws) == 2)
    assert two[0].direction != two[1].direction
    assert not conflicts(two[0], two[1])


def test_ready_conflict_pairs_match_bruteforce():
    sim, forest, _ = make_sim_from(build_bcube(3, 1))
    ready = [sim.by_id[i] for i in sorted(sim.ready_ids())]
    brute = sum(
        1 for a, b in itertools.combinations(ready, 2) if conflicts(a, b)
    )
    grouped = {}
    for w in ready:
        grouped.setdefault((w.link_id, w.direction), []).append(w)
    structural = sum(len(ws) * (len(ws) - 1) // 2 for ws in grouped.values())
    assert brute == structural


# -- send_round --------------------------------------------------------------------


def test_empty_round_advances():
    sim, _, _ = make_sim_from(build_bcube(2, 0))
    sim.send_round([])
    assert sim.round == 1
    assert sim.done_count == 0


def test_bcube20_two_round_completion():
    sim, _, _ = make_sim_from(build_bcube(2, 0))
    sim.send_round(sorted(sim.ready_ids()))
    assert not sim.is_done()
    sim.send_round(sorted(sim.ready_ids()))
    assert sim.is_done()
    assert sim.round == 2


def test_not_ready_rejected_atomically():
    sim, forest, _ = make_sim_from(build_bcube(2, 0))
    blocked = next(w.wid for w in forest.workloads if w.prefixes)
    ready = sorted(sim.ready_ids())
    with pytest.raises(NotReadyError):
        sim.send_round(ready + [blocked])
    # whole round rejected: nothing committed
    assert sim.round == 0
    assert sim.done_count == 0
    assert sim.ready_ids() == set(ready)


def test_conflicting_round_rejected():
    sim, forest, _ = make_sim_from(build_bcube(3, 1))
    grouped = {}
    for wid in sim.ready_ids():
        w = sim.by_id[wid]
        grouped.setdefault((w.link_id, w.direction), []).append(wid)
    clash = next(ws for ws in grouped.values() if len(ws) >= 2)
    with pytest.raises(ConflictError):
        sim.send_round(clash[:2])
    assert sim.round == 0


def test_no_resend():
    sim, _, _ = make_sim_from(build_bcube(2, 0))
    first = sorted(sim.ready_ids())
    sim.send_round(first)
    with pytest.raises(NotReadyError):
        sim.send_round([first[0]])


# -- end-to-end greedy runs ----------------------------------------------------------


@pytest.mark.parametrize("label", ["bcube-3-1", "dcell-4-1", "jellyfish-1"])
def test_greedy_conservation_and_bounds(label):
    sim, forest, g = make_sim(label)
    metrics = run_scheduler(sim, GreedyScheduler(), stream(0, "t"))
    assert metrics.complete
    assert sum(metrics.n_on_series) == forest.num_workloads
    lb = round_lower_bound(
        forest.num_workloads, g.num_links, longest_chain(forest.workloads)
    )
    assert metrics.total_rounds >= lb
    # conservation identity: rounds * mean(n_on) == total workloads
    mean_on = sum(metrics.n_on_series) / metrics.total_rounds
    assert abs(metrics.total_rounds * mean_on - forest.num_workloads) < 1e-9


def test_done_set_monotone():
    sim, _, _ = make_sim_from(build_bcube(3, 1))
    rng = stream(1, "mono")
    sched = GreedyScheduler()
    prev_done = 0
    while not sim.is_done():
        sim.send_round(sched.next_round(sim, rng))
        assert sim.done_count >= prev_done
        prev_done = sim.done_count


def test_metrics_partial_flag():
    sim, _, _ = make_sim_from(build_bcube(2, 0))
    assert not sim.metrics().complete
    sim.send_round(sorted(sim.ready_ids()))
    sim.send_round(sorted(sim.ready_ids()))
    m = sim.metrics()
    assert m.complete
    assert m.wall_clock == m.total_rounds * sim.config.piece_time


def test_utilization_conventions():
    sim, forest, g = make_sim_from(build_bcube(3, 1))
    run_scheduler(sim, GreedyScheduler(), stream(0, "u"))
    m = sim.metrics()
    assert all(0.0 <= u <= 1.0 for u in m.direction_utilization)
    for link_u, dir_u in zip(m.link_utilization, m.direction_utilization):
        assert abs(link_u - 2 * dir_u) < 1e-12


def test_round_log_replay_safety(tmp_path):
    sim, forest, _ = make_sim_from(build_dcell(4, 1))
    run_scheduler(sim, GreedyScheduler(), stream(5, "log"))
    path = tmp_path / "rounds.jsonl"
    sim.write_log(path)
    records = read_log(path)
    assert len(records) == sim.round
    assert replay_is_safe(records, forest.workloads)
    total = sum(r["n_on"] for r in records)
    assert total == forest.num_workloads


def test_config_invariants():
    cfg = SimConfig(num_servers=9, num_links=18)
    assert cfg.num_pieces == 9
    assert abs(cfg.piece_time * cfg.num_pieces - cfg.full_time) < 1e-12


def test_longest_chain_bcube20():
    _, forest, _ = make_sim_from(build_bcube(2, 0))
    assert longest_chain(forest.workloads) == 2
