"""Baseline schedulers: randomized greedy, Parameter Server and Ring AllReduce.

All three drive the simulator through the same per-round interface and are
deterministic for a fixed seed. Decimal round counts in reports come from
averaging over seeds.

* greedy: merged per-root trees; every round sends a seed-shuffled maximal
  conflict-free subset of the ready workloads.
* ps: every server acts as an aggregation endpoint for its own shard; each
  other server's data travels its full routed path as an independent chained
  sequence, with no merging and no intermediate aggregation.
* ring: logical ring over servers (seeded rotation); 2(N-1) logical steps of
  neighbor transfers mapped onto shortest physical routes, each step gated on
  the previous one completing.
"""

from __future__ import annotations

from .rng import stream
from .simulator import SimConfig, Simulation
from .topology import TopologyGraph, bfs_distances, route_toward
from .workload import Workload, build_all_trees


class GreedyScheduler:
    """Seed-shuffled maximal ready set each round."""

    name = "greedy"

    def next_round(self, sim: Simulation, rng):
        ready = sorted(sim.ready_ids())
        rng.shuffle(ready)
        taken = []
        used = set()
        for wid in ready:
            w = sim.by_id[wid]
            key = (w.link_id, w.direction)
            if key not in used:
                used.add(key)
                taken.append(wid)
        return taken


def run_scheduler(sim: Simulation, scheduler, rng, max_rounds=None):
    """Drive `sim` to completion; returns Metrics."""
    cap = max_rounds if max_rounds is not None else 4 * len(sim.workloads) + 16
    while not sim.is_done():
        if sim.round >= cap:
            raise RuntimeError(f"{scheduler.name} exceeded {cap} rounds")
        selected = scheduler.next_round(sim, rng)
        if not selected and sim.ready_ids():
            raise RuntimeError(f"{scheduler.name} stalled with ready workloads")
        sim.send_round(selected)
    return sim.metrics()


# -- greedy ------------------------------------------------------------------


def greedy_schedule(g: TopologyGraph, seed: int, forest=None):
    forest = forest if forest is not None else build_all_trees(g)
    sim = Simulation(forest.workloads, SimConfig.from_topology(g))
    metrics = run_scheduler(sim, GreedyScheduler(), stream(seed, "greedy"))
    return metrics, sim


# -- parameter server ---------------------------------------------------------


def build_ps_workloads(g: TopologyGraph):
    """Un-merged chained hop sequences: one per (origin server, root) pair."""
    workloads = []
    wid = 0
    for root in g.servers:
        dist = bfs_distances(g, root.id)
        for s in g.servers:
            if s.id == root.id:
                continue
            prev = None
            for hop in route_toward(g, dist, s.id).hops:
                workloads.append(
                    Workload(
                        wid=wid,
                        root=root.id,
                        tail=hop.tail,
                        head=hop.head,
                        link_id=hop.link_id,
                        direction=g.link_direction(hop.link_id, hop.tail),
                        prefixes=frozenset() if prev is None else frozenset((prev,)),
                        merged_from=(s.id,),
                    )
                )
                prev = wid
                wid += 1
    return workloads


def ps_schedule(g: TopologyGraph, seed: int):
    sim = Simulation(build_ps_workloads(g), SimConfig.from_topology(g))
    metrics = run_scheduler(sim, GreedyScheduler(), stream(seed, "ps"))
    return metrics, sim


# -- ring allreduce ------------------------------------------------------------


def build_ring_workloads(g: TopologyGraph, order):
    """2(N-1) barriered logical steps; each step every server sends one chunk
    to its ring successor along its shortest physical route.

    The barrier is encoded as prefixes: the first hop of every chain in step
    t+1 depends on all workloads of step t, so any prefix-respecting
    scheduler observes the step ordering.
    """
    n = len(order)
    routes = []
    for i, src in enumerate(order):
        dst = order[(i + 1) % n]
        routes.append(route_toward(g, bfs_distances(g, dst), src))

    workloads = []
    wid = 0
    prev_step = []
    for step in range(2 * (n - 1)):
        barrier = frozenset(prev_step)
        this_step = []
        for i, route in enumerate(routes):
            prev = None
            for hop in route.hops:
                prefixes = barrier if prev is None else frozenset((prev,))
                workloads.append(
                    Workload(
                        wid=wid,
                        root=order[(i + 1) % n],
                        tail=hop.tail,
                        head=hop.head,
                        link_id=hop.link_id,
                        direction=g.link_direction(hop.link_id, hop.tail),
                        prefixes=prefixes,
                        merged_from=(order[i],),
                    )
                )
                this_step.append(wid)
                prev = wid
                wid += 1
        prev_step = this_step
    return workloads


def ring_schedule(g: TopologyGraph, seed: int):
    rng = stream(seed, "ring")
    servers = [s.id for s in g.servers]
    offset = int(rng.integers(len(servers)))
    order = servers[offset:] + servers[:offset]
    sim = Simulation(build_ring_workloads(g, order), SimConfig.from_topology(g))
    metrics = run_scheduler(sim, GreedyScheduler(), rng)
    return metrics, sim


METHODS = {
    "greedy": greedy_schedule,
    "ps": ps_schedule,
    "ring": ring_schedule,
}


def mean_rounds(g: TopologyGraph, method: str, seeds) -> tuple:
    """(mean, per-seed list) of rounds for one of ps/ring/greedy."""
    fn = METHODS[method]
    rounds = [fn(g, s)[0].total_rounds for s in seeds]
    return sum(rounds) / len(rounds), rounds
