"""Alternating training of the two scheduling policies.

Each outer iteration first trains the tree-selection policy for J phases with
the picking policy frozen, then trains the picking policy for K phases with
the tree policy frozen. A phase collects a batch of full episodes with both
policies sampling, keeps only the transitions of the learner's own decision
process (round-level and step-level records are never mixed), and applies one
clipped policy-gradient update with a learned value baseline.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, asdict
from pathlib import Path

import numpy as np

from ..envs import TERMINATE, TreeSelectEnv
from ..rng import stream
from .nets import Adam, add_grads, mlp_backward, zeros_like_params
from .policies import PickPolicy, TreePolicy, sigmoid, save_checkpoint


@dataclass
class TrainConfig:
    outer_iters: int = 10          # I
    tree_phases: int = 5           # J
    pick_phases: int = 5           # K
    episodes_per_phase: int = 16
    gamma: float = 0.99
    lr: float = 3e-4
    value_lr: float = 1e-3
    clip_ratio: float = 0.2
    entropy_coef: float = 0.01
    select_bonus: float = 0.1
    done_bonus: float = 10.0
    episode_cap_factor: int = 4
    hidden: tuple = (128, 128)
    seed: int = 0

    def __post_init__(self):
        if min(self.outer_iters, self.tree_phases, self.pick_phases) < 1:
            raise ValueError("iteration counts must be >= 1")
        if not 0.0 < self.gamma <= 1.0:
            raise ValueError("gamma must be in (0, 1]")
        if not 0.0 < self.clip_ratio < 1.0:
            raise ValueError("clip ratio must be in (0, 1)")


def discounted_returns(rewards, gamma):
    out = np.zeros(len(rewards))
    acc = 0.0
    for i in range(len(rewards) - 1, -1, -1):
        acc = rewards[i] + gamma * acc
        out[i] = acc
    return out


def rollout_episode(env: TreeSelectEnv, tree_policy, pick_policy, rng, sample=True):
    """One full episode; returns round-level and step-level records."""
    obs = env.reset()
    rounds = []
    pick_trajs = []
    done = False
    while not done:
        action, logp = tree_policy.act(obs, rng, sample=sample)
        nxt, reward, done, info = env.step(
            action, pick_policy=pick_policy, rng=rng, sample=sample, record_picks=True
        )
        rounds.append({"obs": obs, "action": action, "logp": logp, "reward": reward})
        if info["picks"]:
            pick_trajs.append(info["picks"])
        obs = nxt
    return rounds, pick_trajs, env.sim.round, env.sim.is_done()


def _normalized(adv):
    if len(adv) > 1 and adv.std() > 1e-8:
        return (adv - adv.mean()) / adv.std()
    return adv - adv.mean()


def _clip_factor(ratio, adv, clip):
    """Per-sample policy-gradient coefficient for the clipped objective."""
    active = np.where(
        adv >= 0, ratio <= 1.0 + clip, ratio >= 1.0 - clip
    )
    return np.where(active, ratio * adv, 0.0)


def update_tree_policy(policy: TreePolicy, batch, cfg: TrainConfig, opt, value_opt):
    """One clipped update on round-level transitions."""
    obs = np.stack([b["obs"] for b in batch])
    actions = np.stack([b["action"] for b in batch]).astype(np.float64)
    old_logp = np.array([b["logp"] for b in batch])
    returns = np.array([b["return"] for b in batch])

    values, vcaches = policy.values(obs)
    adv = _normalized(returns - values)

    logits, caches = policy.logits(obs)
    probs = sigmoid(logits)
    logp_new = np.where(
        actions > 0, -np.logaddexp(0, -logits), -np.logaddexp(0, logits)
    ).sum(axis=1)
    ratio = np.exp(logp_new - old_logp)
    coef = _clip_factor(ratio, adv, cfg.clip_ratio)

    n = len(batch)
    # d(-objective)/dlogits: policy-gradient term plus entropy bonus.
    # For Bernoulli heads dH/dz = -z * p * (1 - p), and the bonus enters the
    # loss as -entropy_coef * H.
    dlogits = -(coef[:, None] * (actions - probs)) / n
    dlogits += cfg.entropy_coef * (logits * probs * (1.0 - probs)) / n
    grads, _ = mlp_backward(policy.actor, caches, dlogits)
    opt.step(grads)

    verr = values - returns
    vgrads, _ = mlp_backward(policy.critic, vcaches, (verr / n)[:, None])
    value_opt.step(vgrads)

    pg_loss = -float(np.minimum(ratio * adv, np.clip(ratio, 1 - cfg.clip_ratio, 1 + cfg.clip_ratio) * adv).mean())
    return {"loss": pg_loss, "value_err": float(np.abs(verr).mean())}


def update_pick_policy(policy: PickPolicy, steps, cfg: TrainConfig, opt, stop_opt_state, value_opt):
    """One clipped update on step-level (within-round) transitions."""
    pooled = np.stack([s["obs"].pooled() for s in steps])
    returns = np.array([s["return"] for s in steps])
    old_logp = np.array([s["logp"] for s in steps])

    values, vcaches = policy.values(pooled)
    adv = _normalized(returns - values)

    n = len(steps)
    scorer_grads = zeros_like_params(policy.scorer)
    stop_grad = np.zeros(1)
    losses = []
    for i, s in enumerate(steps):
        obs = s["obs"]
        probs, caches = policy._dist(obs)
        ncand = len(obs.rows)
        idx = ncand if s["action"] == TERMINATE else int(s["action"])
        logp_new = np.log(probs[idx])
        ratio = float(np.exp(logp_new - old_logp[i]))
        coef = float(_clip_factor(np.array([ratio]), np.array([adv[i]]), cfg.clip_ratio)[0])

        dlogit = -probs.copy()
        dlogit[idx] += 1.0
        dfull = -coef * dlogit
        # entropy bonus: dH/dz_j = -p_j (log p_j + H)
        with np.errstate(divide="ignore", invalid="ignore"):
            plogp = np.where(probs > 0, probs * np.log(probs), 0.0)
        ent = -plogp.sum()
        dent = np.where(probs > 0, -probs * (np.log(np.maximum(probs, 1e-300)) + ent), 0.0)
        dfull += -cfg.entropy_coef * dent
        if ncand:
            dscores = np.where(obs.mask, dfull[:ncand], 0.0)[:, None]
            g, _ = mlp_backward(policy.scorer, caches, dscores)
            add_grads(scorer_grads, g, scale=1.0 / n)
        stop_grad += dfull[ncand] / n
        losses.append(-min(ratio * adv[i], float(np.clip(ratio, 1 - cfg.clip_ratio, 1 + cfg.clip_ratio)) * adv[i]))

    opt.step(scorer_grads)
    _adam_scalar_step(stop_opt_state, policy.stop, stop_grad, cfg.lr)

    verr = values - returns
    vgrads, _ = mlp_backward(policy.critic, vcaches, (verr / n)[:, None])
    value_opt.step(vgrads)
    return {"loss": float(np.mean(losses)), "value_err": float(np.abs(verr).mean())}


def _adam_scalar_step(state, param, grad, lr, beta1=0.9, beta2=0.999, eps=1e-8):
    state["t"] += 1
    state["m"] = beta1 * state["m"] + (1 - beta1) * grad
    state["v"] = beta2 * state["v"] + (1 - beta2) * grad * grad
    mhat = state["m"] / (1 - beta1 ** state["t"])
    vhat = state["v"] / (1 - beta2 ** state["t"])
    param -= lr * mhat / (np.sqrt(vhat) + eps)


class Trainer:
    """Owns the optimizers and the alternating schedule."""

    def __init__(self, g, forest, cfg: TrainConfig):
        from ..baselines import greedy_schedule

        self.cfg = cfg
        greedy_rounds = greedy_schedule(g, seed=0, forest=forest)[0].total_rounds
        self.env = TreeSelectEnv(
            g,
            forest,
            episode_cap=cfg.episode_cap_factor * greedy_rounds,
            select_bonus=cfg.select_bonus,
            done_bonus=cfg.done_bonus,
        )
        self.greedy_rounds = greedy_rounds
        self.tree_policy = TreePolicy(
            self.env.obs_dim, self.env.num_trees, hidden=cfg.hidden, seed=cfg.seed
        )
        self.pick_policy = PickPolicy(hidden=cfg.hidden, seed=cfg.seed + 1)
        self.tree_opt = Adam(self.tree_policy.actor, lr=cfg.lr)
        self.tree_value_opt = Adam(self.tree_policy.critic, lr=cfg.value_lr)
        self.pick_opt = Adam(self.pick_policy.scorer, lr=cfg.lr)
        self.pick_value_opt = Adam(self.pick_policy.critic, lr=cfg.value_lr)
        self.stop_opt_state = {"t": 0, "m": np.zeros(1), "v": np.zeros(1)}
        self.curves = []

    def collect(self, rng):
        fts, pick_trajs, lengths, returns = [], [], [], []
        for _ in range(self.cfg.episodes_per_phase):
            rounds, picks, total_rounds, _ = rollout_episode(
                self.env, self.tree_policy, self.pick_policy, rng
            )
            rets = discounted_returns([r["reward"] for r in rounds], self.cfg.gamma)
            for r, ret in zip(rounds, rets):
                r["return"] = ret
            fts.extend(rounds)
            for traj in picks:
                step_rets = discounted_returns([s["reward"] for s in traj], self.cfg.gamma)
                for s, ret in zip(traj, step_rets):
                    s["return"] = ret
                pick_trajs.append(traj)
            lengths.append(total_rounds)
            returns.append(sum(r["reward"] for r in rounds))
        return fts, pick_trajs, lengths, returns

    def train_phase(self, flavor, rng):
        """Collect one batch and update the learner; the other policy is frozen."""
        if flavor not in ("tree", "pick"):
            raise ValueError(f"unknown phase flavor {flavor!r}")
        fts, pick_trajs, lengths, returns = self.collect(rng)
        if flavor == "tree":
            stats = update_tree_policy(
                self.tree_policy, fts, self.cfg, self.tree_opt, self.tree_value_opt
            )
        else:
            steps = [s for traj in pick_trajs for s in traj]
            if steps:
                stats = update_pick_policy(
                    self.pick_policy, steps, self.cfg,
                    self.pick_opt, self.stop_opt_state, self.pick_value_opt,
                )
            else:
                stats = {"loss": 0.0, "value_err": 0.0}
        stats.update(
            flavor=flavor,
            mean_rounds=float(np.mean(lengths)),
            mean_return=float(np.mean(returns)),
        )
        return stats

    def run(self, out_dir=None, quiet=True):
        """The full alternating schedule; returns both policies and the curves."""
        cfg = self.cfg
        phase_idx = 0
        for i in range(cfg.outer_iters):
            for j in range(cfg.tree_phases):
                rng = stream(cfg.seed, "rollout", phase_idx)
                stats = self.train_phase("tree", rng)
                self._record(i, stats, quiet)
                phase_idx += 1
            for k in range(cfg.pick_phases):
                rng = stream(cfg.seed, "rollout", phase_idx)
                stats = self.train_phase("pick", rng)
                self._record(i, stats, quiet)
                phase_idx += 1
            if out_dir is not None:
                save_checkpoint(
                    Path(out_dir) / f"checkpoint_{i:03d}.npz",
                    self.tree_policy,
                    self.pick_policy,
                    config=asdict(self.cfg) | {"hidden": list(self.cfg.hidden)},
                    # all randomness is derived from (root seed, phase index)
                    rng_state={"root_seed": self.cfg.seed, "next_phase": phase_idx},
                    extra={"outer_iter": i},
                )
        return self.tree_policy, self.pick_policy, self.curves

    def _record(self, outer, stats, quiet):
        row = {"iteration": outer, **stats}
        self.curves.append(row)
        if not quiet:
            print(
                f"[{stats['flavor']}] iter {outer} rounds {stats['mean_rounds']:.2f} "
                f"return {stats['mean_return']:.3f} loss {stats['loss']:.5f}"
            )


def iterative_train(g, cfg: TrainConfig, forest=None, out_dir=None, quiet=True):
    """Convenience wrapper: build everything, run the schedule."""
    from ..workload import build_all_trees

    forest = forest if forest is not None else build_all_trees(g)
    trainer = Trainer(g, forest, cfg)
    tree_policy, pick_policy, curves = trainer.run(out_dir=out_dir, quiet=quiet)
    return tree_policy, pick_policy, curves, trainer


def evaluate(tree_policy, pick_policy, env: TreeSelectEnv, episodes=1, seeds=(0,)):
    """Mode-action evaluation (no sampling); returns per-run rounds and stats."""
    rounds = []
    completed = []
    for seed in seeds:
        rng = stream(seed, "eval")
        for _ in range(episodes):
            obs = env.reset()
            done = False
            while not done:
                action = tree_policy.mode(obs)
                obs, _, done, info = env.step(
                    action, pick_policy=pick_policy, rng=rng, sample=False
                )
            rounds.append(env.sim.round)
            completed.append(env.sim.is_done())
    arr = np.array(rounds, dtype=np.float64)
    return {
        "mean_rounds": float(arr.mean()),
        "std_rounds": float(arr.std()),
        "rounds": rounds,
        "all_completed": all(completed),
    }


def write_curves(path, curves):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["phase", "iteration", "mean_rounds", "mean_return", "loss"])
        for row in curves:
            writer.writerow([
                row["flavor"],
                row["iteration"],
                f"{row['mean_rounds']:.4f}",
                f"{row['mean_return']:.6f}",
                f"{row['loss']:.6f}",
            ])
