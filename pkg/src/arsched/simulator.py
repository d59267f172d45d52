"""Round-based execution of workload sets under link and readiness constraints.

A round is one time quantum of duration T_S. Within a round each link carries
at most one workload per direction (full duplex). A workload is Ready once
all of its prefixes are Done; sending is atomic per round: an invalid
selection (not ready, or two workloads on one link direction) rejects the
whole round, which keeps environment feedback clean.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

BLOCKED, READY, DONE = 0, 1, 2


class SimulationError(RuntimeError):
    pass


class NotReadyError(SimulationError):
    def __init__(self, wid):
        super().__init__(f"workload {wid} is not ready")
        self.wid = wid


class ConflictError(SimulationError):
    def __init__(self, a, b):
        super().__init__(f"workloads {a} and {b} occupy the same link direction")
        self.pair = (a, b)


@dataclass(frozen=True)
class SimConfig:
    """Abstract cost model: P total gradient units split into k pieces.

    T_S = T_F / k is the per-piece (per-round) time; N_phy is the physical
    link count of the topology the workloads were built on.
    """

    num_servers: int          # N
    num_links: int            # N_phy
    num_pieces: int = 0       # k; defaults to N (one piece per root tree)
    full_time: float = 0.0    # T_F; defaults to k * 1.0
    gradient_size: float = 0.0  # P; defaults to N

    def __post_init__(self):
        if self.num_pieces <= 0:
            object.__setattr__(self, "num_pieces", self.num_servers)
        if self.full_time <= 0.0:
            object.__setattr__(self, "full_time", float(self.num_pieces))
        if self.gradient_size <= 0.0:
            object.__setattr__(self, "gradient_size", float(self.num_servers))

    @property
    def piece_time(self) -> float:
        return self.full_time / self.num_pieces

    @classmethod
    def from_topology(cls, g, **kw):
        return cls(num_servers=g.num_servers, num_links=g.num_links, **kw)


@dataclass
class Metrics:
    total_rounds: int
    wall_clock: float
    n_on_series: list
    num_links: int
    total_sent: int
    complete: bool

    @property
    def link_utilization(self):
        return [n / self.num_links for n in self.n_on_series]

    @property
    def direction_utilization(self):
        return [n / (2 * self.num_links) for n in self.n_on_series]

    @property
    def mean_link_utilization(self):
        if not self.n_on_series:
            return 0.0
        return sum(self.link_utilization) / len(self.n_on_series)

    @property
    def mean_direction_utilization(self):
        if not self.n_on_series:
            return 0.0
        return sum(self.direction_utilization) / len(self.n_on_series)


def conflicts(a, b) -> bool:
    """True when two workloads claim the same physical link direction."""
    return a.link_id == b.link_id and a.direction == b.direction


def longest_chain(workloads) -> int:
    """Length of the longest prefix chain; a lower bound on total rounds."""
    depth = {}
    by_id = {w.wid: w for w in workloads}

    def visit(wid):
        if wid in depth:
            return depth[wid]
        stack = [(wid, iter(by_id[wid].prefixes))]
        while stack:
            cur, it = stack[-1]
            advanced = False
            for p in it:
                if p not in depth:
                    stack.append((p, iter(by_id[p].prefixes)))
                    advanced = True
                    break
            if not advanced:
                ws = by_id[cur]
                depth[cur] = 1 + max((depth[p] for p in ws.prefixes), default=0)
                stack.pop()
        return depth[wid]

    return max((visit(w.wid) for w in workloads), default=0)


def round_lower_bound(num_workloads, num_links, chain=0) -> int:
    return max(math.ceil(num_workloads / (2 * num_links)), chain)


class Simulation:
    """Single-owner mutable state; independent instances are fully parallel."""

    def __init__(self, workloads, config: SimConfig):
        self.workloads = list(workloads)
        self.config = config
        ids = sorted(w.wid for w in self.workloads)
        if ids != list(range(len(ids))):
            raise SimulationError("workload ids must be dense from 0")
        self.by_id = {w.wid: w for w in self.workloads}
        self.dependents = {w.wid: [] for w in self.workloads}
        for w in self.workloads:
            for p in w.prefixes:
                self.dependents[p].append(w.wid)
        self.reset()

    def reset(self):
        self.round = 0
        self.remaining_prefixes = {w.wid: len(w.prefixes) for w in self.workloads}
        self.status = {}
        self._ready = set()
        for w in self.workloads:
            if w.prefixes:
                self.status[w.wid] = BLOCKED
            else:
                self.status[w.wid] = READY
                self._ready.add(w.wid)
        self.done_count = 0
        self.history = []  # (sorted tuple of sent ids, n_on)
        return self

    # -- queries ----------------------------------------------------------

    def ready_ids(self):
        return set(self._ready)

    def is_done(self) -> bool:
        return self.done_count == len(self.workloads)

    @property
    def total_sent(self):
        return self.done_count

    def occupancy_of_round(self, r):
        """(link_id, direction) -> workload id map replayed from the log."""
        out = {}
        for wid in self.history[r][0]:
            w = self.by_id[wid]
            out[(w.link_id, w.direction)] = wid
        return out

    # -- transitions --------------------------------------------------------

    def send_round(self, selected):
        """Mark `selected` Done and advance one round; empty rounds are legal.

        Validation happens before any mutation so a rejected round leaves the
        state untouched.
        """
        chosen = list(selected)
        occupancy = {}
        for wid in chosen:
            if self.status.get(wid) != READY:
                raise NotReadyError(wid)
            w = self.by_id[wid]
            key = (w.link_id, w.direction)
            if key in occupancy:
                raise ConflictError(occupancy[key], wid)
            occupancy[key] = wid

        for wid in chosen:
            self.status[wid] = DONE
            self._ready.discard(wid)
        self.done_count += len(chosen)
        for wid in chosen:
            for d in self.dependents[wid]:
                self.remaining_prefixes[d] -= 1
                if self.remaining_prefixes[d] == 0 and self.status[d] == BLOCKED:
                    self.status[d] = READY
                    self._ready.add(d)
        self.round += 1
        self.history.append((tuple(sorted(chosen)), len(chosen)))

    # -- metrics -----------------------------------------------------------

    def metrics(self) -> Metrics:
        series = [n for _, n in self.history]
        return Metrics(
            total_rounds=self.round,
            wall_clock=self.round * self.config.piece_time,
            n_on_series=series,
            num_links=self.config.num_links,
            total_sent=self.done_count,
            complete=self.is_done(),
        )

    def lower_bound(self) -> int:
        return round_lower_bound(
            len(self.workloads), self.config.num_links, longest_chain(self.workloads)
        )

    # -- round log -----------------------------------------------------------

    def write_log(self, path):
        with open(path, "w") as fh:
            for r, (sent, n_on) in enumerate(self.history):
                fh.write(json.dumps({"round": r, "selected": list(sent), "n_on": n_on}) + "\n")


def read_log(path):
    records = []
    for line in Path(path).read_text().splitlines():
        if line.strip():
            records.append(json.loads(line))
    return records


def replay_is_safe(records, workloads) -> bool:
    """Re-check the occupancy log: one workload per (link, direction) per round."""
    by_id = {w.wid: w for w in workloads}
    for rec in records:
        used = set()
        for wid in rec["selected"]:
            w = by_id[wid]
            key = (w.link_id, w.direction)
            if key in used:
                return False
            used.add(key)
    return True
