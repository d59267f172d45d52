"""The two hierarchical scheduling environments wrapped around the simulator.

The upper environment (TreeSelectEnv) acts once per round: its multi-hot
action picks a set of workload trees, which defines the pool of candidate
workloads for the round. The lower decision process (PickRound) then selects
individual non-conflicting workloads from that pool, one per step, until it
terminates; the combined picks are committed as the round.

Reward structure, with W the schedulable workload total and F the merged-flow
total of the forest:

* per-round dense reward  = sent/W + select_bonus * (trees selected / trees)
* per-round stage reward  = +done_bonus on completion, else -(trees)/W
* per-pick reward         = 1/F, constant; terminating yields 0.

Both totals are exposed on the environment; see README for why the per-pick
denominator uses flows.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .simulator import SimConfig, Simulation
from .workload import WorkloadForest


class IllegalAction(RuntimeError):
    pass


TERMINATE = -1


def round_reward(sent, total, trees_selected, total_trees, done,
                 select_bonus=0.1, done_bonus=10.0):
    """Dense-plus-stage reward for one tree-selection step."""
    if total <= 0 or total_trees <= 0:
        raise ValueError("totals must be positive")
    dense = sent / total + select_bonus * (trees_selected / total_trees)
    stage = done_bonus if done else -(total_trees / total)
    return dense + stage


def dependents_of(workloads) -> dict:
    out = {w.wid: [] for w in workloads}
    for w in workloads:
        for p in w.prefixes:
            out[p].append(w.wid)
    return out


def chain_ahead(workloads) -> dict:
    """Longest dependent-chain length below each workload (0 at tree heads)."""
    dependents = dependents_of(workloads)
    # Process in reverse topological order (heads first).
    order = []
    out_deg = {wid: len(d) for wid, d in dependents.items()}
    frontier = [wid for wid, d in out_deg.items() if d == 0]
    seen = set(frontier)
    prefixes = {w.wid: list(w.prefixes) for w in workloads}
    ahead = {}
    while frontier:
        nxt = []
        for wid in frontier:
            ahead[wid] = 1 + max((ahead[d] for d in dependents[wid]), default=-1)
            for p in prefixes[wid]:
                out_deg[p] -= 1
                if out_deg[p] == 0 and p not in seen:
                    seen.add(p)
                    nxt.append(p)
        frontier = nxt
    return ahead


@dataclass
class PickObs:
    """Candidate table plus the current-round occupancy mask.

    rows[i] = (tree index, link index, direction, unblock count, chain depth),
    each scaled to [0, 1]. mask[i] is False once candidate i conflicts with a
    workload already picked this round.
    """

    rows: np.ndarray
    mask: np.ndarray
    occupied: np.ndarray  # per (link, direction) flag
    picks_so_far: int
    total_workloads: int

    def pooled(self) -> np.ndarray:
        """Fixed-size summary used by the value baseline."""
        active = self.rows[self.mask] if self.mask.any() else np.zeros((0, self.rows.shape[1]))
        mean = active.mean(axis=0) if len(active) else np.zeros(self.rows.shape[1])
        return np.concatenate([
            mean,
            [
                self.mask.sum() / max(1, self.total_workloads),
                self.picks_so_far / max(1, self.total_workloads),
                self.occupied.mean() if len(self.occupied) else 0.0,
            ],
        ]).astype(np.float64)


POOLED_DIM = 8  # 5 feature means + 3 summary scalars


class PickRound:
    """Sequential selection of a conflict-free workload set within one round."""

    def __init__(self, env, pool_ids):
        self.env = env
        sim = env.sim
        self.candidates = sorted(w for w in pool_ids if w in sim.ready_ids())
        self.mask = np.ones(len(self.candidates), dtype=bool)
        self.occupied = np.zeros(2 * env.config.num_links, dtype=np.float64)
        self.chosen = []
        self.closed = not self.candidates
        n = len(self.candidates)
        self.rows = np.zeros((n, 5), dtype=np.float64)
        for i, wid in enumerate(self.candidates):
            w = sim.by_id[wid]
            unblocks = sum(
                1 for d in sim.dependents[wid] if sim.remaining_prefixes[d] == 1
            )
            self.rows[i] = (
                env.tree_of[wid] / max(1, env.num_trees),
                w.link_id / max(1, env.config.num_links),
                float(w.direction),
                unblocks / env.unblock_scale,
                env.ahead[wid] / env.chain_scale,
            )

    def observation(self) -> PickObs:
        return PickObs(
            rows=self.rows.copy(),
            mask=self.mask.copy(),
            occupied=self.occupied.copy(),
            picks_so_far=len(self.chosen),
            total_workloads=len(self.env.sim.workloads),
        )

    @property
    def done(self):
        return self.closed

    def step(self, action):
        """Pick candidate `action`, or TERMINATE to close the round."""
        if self.closed:
            raise IllegalAction("round already closed")
        if action == TERMINATE:
            self.closed = True
            return self.observation(), 0.0, True, {"picked": None}
        idx = int(action)
        if not 0 <= idx < len(self.candidates) or not self.mask[idx]:
            raise IllegalAction(f"candidate index {action} is masked or out of range")
        wid = self.candidates[idx]
        w = self.env.sim.by_id[wid]
        self.chosen.append(wid)
        self.occupied[w.linkdir] = 1.0
        for j, other in enumerate(self.candidates):
            if self.mask[j]:
                o = self.env.sim.by_id[other]
                if o.link_id == w.link_id and o.direction == w.direction:
                    self.mask[j] = False
        if not self.mask.any():
            self.closed = True
        reward = 1.0 / self.env.total_flows
        return self.observation(), reward, self.closed, {"picked": wid}


class GreedyPick:
    """Fallback picking policy: takes candidates until none remain.

    With an rng it shuffles the visit order, otherwise it picks the lowest
    unmasked index. Never terminates early, so the committed set is maximal
    within the pool.
    """

    def __init__(self, rng=None):
        self.rng = rng

    def act(self, obs: PickObs, rng=None, sample=True):
        open_idx = np.flatnonzero(obs.mask)
        if len(open_idx) == 0:
            return TERMINATE, 0.0
        r = rng if rng is not None else self.rng
        if r is not None and sample:
            return int(r.choice(open_idx)), 0.0
        return int(open_idx[0]), 0.0


class TreeSelectEnv:
    """Per-round tree-selection environment over a merged workload forest.

    reset() -> observation; step(action, ...) -> (observation, reward, done,
    info). info carries the round index, the number of workloads sent, the
    committed ids and the reward components; with record_picks=True it also
    carries the within-round pick trajectory for training the lower policy.
    """

    def __init__(self, g, forest: WorkloadForest, episode_cap=None,
                 select_bonus=0.1, done_bonus=10.0):
        self.forest = forest
        self.config = SimConfig.from_topology(g)
        self.num_trees = len(forest.trees)
        self.total_workloads = forest.num_workloads
        self.total_flows = forest.num_flows
        self.tree_of = forest.tree_index()
        self.tree_sizes = np.array([t.num_workloads for t in forest.trees], dtype=np.float64)
        self.select_bonus = select_bonus
        self.done_bonus = done_bonus
        self.ahead = chain_ahead(forest.workloads)
        self.chain_scale = float(max(1, max(self.ahead.values(), default=0)))
        fan_out = dependents_of(forest.workloads)
        self.unblock_scale = float(max(1, max((len(d) for d in fan_out.values()), default=0)))
        if episode_cap is None:
            # Guard against non-terminating policies early in training.
            from .baselines import greedy_schedule

            episode_cap = 4 * greedy_schedule(g, seed=0, forest=forest)[0].total_rounds
        self.episode_cap = episode_cap
        self.sim = Simulation(forest.workloads, self.config)
        self.last_action = np.zeros(self.num_trees, dtype=np.float64)

    @property
    def obs_dim(self):
        return 3 * self.num_trees + self.config.num_links + 1

    def reset(self):
        self.sim.reset()
        self.last_action = np.zeros(self.num_trees, dtype=np.float64)
        return self.observation()

    def observation(self) -> np.ndarray:
        sim = self.sim
        remaining = self.tree_sizes.copy()
        for wid, st in sim.status.items():
            if st == 2:  # done
                remaining[self.tree_of[wid]] -= 1
        frac = remaining / self.tree_sizes
        done_flags = (remaining == 0).astype(np.float64)
        pressure = np.zeros(self.config.num_links, dtype=np.float64)
        for wid in sim.ready_ids():
            pressure[sim.by_id[wid].link_id] += 1
        peak = pressure.max()
        if peak > 0:
            pressure /= peak
        progress = sim.total_sent / max(1, self.total_workloads)
        return np.concatenate([frac, done_flags, pressure, self.last_action, [progress]])

    def pool_for(self, action) -> list:
        sel = np.asarray(action, dtype=np.float64) > 0.5
        if sel.shape != (self.num_trees,):
            raise IllegalAction(f"action must have length {self.num_trees}")
        return [wid for wid in self.sim.ready_ids() if sel[self.tree_of[wid]]]

    def step(self, action, pick_policy=None, rng=None, sample=True, record_picks=False):
        """Run one full round: pick rollout over the selected pool, commit, score."""
        if self.sim.is_done():
            raise IllegalAction("episode is over")
        policy = pick_policy if pick_policy is not None else GreedyPick()
        pool = self.pool_for(action)
        rnd = PickRound(self, pool)
        picks = []
        while not rnd.done:
            obs = rnd.observation()
            a, logp = policy.act(obs, rng, sample)
            nxt, reward, _, inf = rnd.step(a)
            if record_picks:
                picks.append({
                    "obs": obs,
                    "action": a,
                    "logp": logp,
                    "reward": reward,
                    "picked": inf["picked"],
                })
        self.sim.send_round(rnd.chosen)

        sent = len(rnd.chosen)
        selected_trees = int((np.asarray(action, dtype=np.float64) > 0.5).sum())
        finished = self.sim.is_done()
        truncated = not finished and self.sim.round >= self.episode_cap
        dense = sent / self.total_workloads + self.select_bonus * (
            selected_trees / self.num_trees
        )
        stage = self.done_bonus if finished else -(self.num_trees / self.total_workloads)
        reward = dense + stage
        self.last_action = (np.asarray(action, dtype=np.float64) > 0.5).astype(np.float64)
        info = {
            "round": self.sim.round,
            "n_on": sent,
            "committed": tuple(rnd.chosen),
            "r_dense": dense,
            "r_stage": stage,
            "truncated": truncated,
            "picks": picks,
        }
        return self.observation(), reward, finished or truncated, info
