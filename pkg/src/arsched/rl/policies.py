"""Policy networks for the two scheduling agents.

TreePolicy emits one Bernoulli per workload tree from sigmoid logits (the
multi-hot round action). PickPolicy scores each candidate row with a shared MLP
plus a learned stop logit and samples from the masked softmax, so one network
handles any candidate count and is equivariant to row order. Each policy
carries its own value head used as the baseline during training.
"""

from __future__ import annotations

import json

import numpy as np

from ..envs import TERMINATE, POOLED_DIM, PickObs
from .nets import (
    flatten_params,
    init_mlp,
    mlp_backward,
    mlp_forward,
    set_flat_params,
    zeros_like_params,
)

CHECKPOINT_VERSION = 1


def sigmoid(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _logsigmoid(x):
    return -np.logaddexp(0.0, -x)


class TreePolicy:
    """Multi-hot tree selection: independent Bernoulli per tree."""

    kind = "tree"

    def __init__(self, obs_dim, num_trees, hidden=(128, 128), seed=0):
        rng = np.random.default_rng(seed)
        self.obs_dim = obs_dim
        self.num_trees = num_trees
        self.hidden = tuple(hidden)
        self.actor = init_mlp([obs_dim, *hidden, num_trees], rng)
        self.critic = init_mlp([obs_dim, *hidden, 1], rng)

    # -- acting ------------------------------------------------------------

    def logits(self, obs_batch):
        return mlp_forward(self.actor, obs_batch)

    def act(self, obs, rng, sample=True):
        logits, _ = self.logits(obs)
        logits = logits[0]
        if sample:
            bits = (rng.random(self.num_trees) < sigmoid(logits)).astype(np.int8)
        else:
            bits = (logits > 0).astype(np.int8)
        return bits, float(self._logp_from_logits(logits, bits))

    def mode(self, obs):
        logits, _ = self.logits(obs)
        return (logits[0] > 0).astype(np.int8)

    @staticmethod
    def _logp_from_logits(logits, action):
        # log p(a) = sum_i a*log(sig) + (1-a)*log(1-sig); log(1-sig(x)) = logsig(-x)
        return np.where(action > 0, _logsigmoid(logits), _logsigmoid(-logits)).sum()

    def logp(self, obs, action):
        logits, _ = self.logits(obs)
        return float(self._logp_from_logits(logits[0], np.asarray(action)))

    def logp_grads(self, obs, action):
        """Analytic gradient of log-likelihood wrt actor parameters."""
        logits, caches = self.logits(obs)
        action = np.asarray(action, dtype=np.float64)
        logp = self._logp_from_logits(logits[0], action)
        dlogits = (action - sigmoid(logits[0]))[None, :]
        grads, _ = mlp_backward(self.actor, caches, dlogits)
        return float(logp), grads

    # -- value baseline -------------------------------------------------------

    def values(self, obs_batch):
        v, caches = mlp_forward(self.critic, obs_batch)
        return v[:, 0], caches

    # -- bookkeeping ---------------------------------------------------------

    def actor_flat(self):
        return flatten_params(self.actor)

    def set_actor_flat(self, flat):
        set_flat_params(self.actor, flat)

    def param_bytes(self) -> bytes:
        return flatten_params(self.actor).tobytes() + flatten_params(self.critic).tobytes()

    def meta(self):
        return {
            "kind": self.kind,
            "obs_dim": self.obs_dim,
            "num_trees": self.num_trees,
            "hidden": list(self.hidden),
        }


class PickPolicy:
    """Masked categorical over candidate rows plus a learned stop logit."""

    kind = "pick"
    FEAT_DIM = 5

    def __init__(self, hidden=(128, 128), seed=0):
        rng = np.random.default_rng(seed)
        self.hidden = tuple(hidden)
        self.scorer = init_mlp([self.FEAT_DIM, *hidden, 1], rng)
        self.stop = np.zeros(1)
        self.critic = init_mlp([POOLED_DIM, *hidden, 1], rng)

    def _dist(self, obs: PickObs):
        """(probs over candidates+stop, scorer caches). Masked entries get 0."""
        n = len(obs.rows)
        logits = np.full(n + 1, -np.inf)
        caches = None
        if n:
            scores, caches = mlp_forward(self.scorer, obs.rows)
            logits[:n] = np.where(obs.mask, scores[:, 0], -np.inf)
        logits[n] = self.stop[0]
        peak = logits.max()
        ex = np.exp(logits - peak)
        return ex / ex.sum(), caches

    def act(self, obs: PickObs, rng, sample=True):
        probs, _ = self._dist(obs)
        n = len(obs.rows)
        if sample:
            choice = int(rng.choice(n + 1, p=probs))
        else:
            choice = int(np.argmax(probs))
        logp = float(np.log(probs[choice]))
        return (TERMINATE if choice == n else choice), logp

    def logp(self, obs: PickObs, action):
        probs, _ = self._dist(obs)
        idx = len(obs.rows) if action == TERMINATE else int(action)
        return float(np.log(probs[idx]))

    def logp_grads(self, obs: PickObs, action):
        """Analytic gradient of log p(action) wrt scorer params and stop logit."""
        probs, caches = self._dist(obs)
        n = len(obs.rows)
        idx = n if action == TERMINATE else int(action)
        logp = float(np.log(probs[idx]))
        dlogit = -probs.copy()
        dlogit[idx] += 1.0
        # Masked candidates hold probability 0, so their rows get zero gradient.
        if n:
            dscores = np.where(obs.mask, dlogit[:n], 0.0)[:, None]
            grads, _ = mlp_backward(self.scorer, caches, dscores)
        else:
            grads = zeros_like_params(self.scorer)
        dstop = np.array([dlogit[n]])
        return logp, grads, dstop

    def values(self, pooled_batch):
        v, caches = mlp_forward(self.critic, pooled_batch)
        return v[:, 0], caches

    def param_bytes(self) -> bytes:
        return (
            flatten_params(self.scorer).tobytes()
            + self.stop.tobytes()
            + flatten_params(self.critic).tobytes()
        )

    def meta(self):
        return {"kind": self.kind, "hidden": list(self.hidden)}


# -- checkpointing -------------------------------------------------------------


def _pack(prefix, params, store):
    for i, (W, b) in enumerate(params):
        store[f"{prefix}/{i}/W"] = W
        store[f"{prefix}/{i}/b"] = b


def _unpack(prefix, params, data):
    for i in range(len(params)):
        params[i][0][...] = data[f"{prefix}/{i}/W"]
        params[i][1][...] = data[f"{prefix}/{i}/b"]


def save_checkpoint(path, tree_policy: TreePolicy, pick_policy: PickPolicy,
                    config=None, rng_state=None, extra=None):
    """Self-describing checkpoint: weights + config + RNG state."""
    meta = {
        "version": CHECKPOINT_VERSION,
        "tree": tree_policy.meta(),
        "pick": pick_policy.meta(),
        "config": config or {},
        "rng_state": rng_state,
        "extra": extra or {},
    }
    store = {"meta": np.frombuffer(json.dumps(meta).encode(), dtype=np.uint8)}
    _pack("tree/actor", tree_policy.actor, store)
    _pack("tree/critic", tree_policy.critic, store)
    _pack("pick/scorer", pick_policy.scorer, store)
    _pack("pick/critic", pick_policy.critic, store)
    store["pick/stop"] = pick_policy.stop
    np.savez(path, **store)


def load_checkpoint(path):
    data = np.load(path)
    meta = json.loads(bytes(data["meta"]).decode())
    if meta.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {meta.get('version')!r}")
    t = meta["tree"]
    tree_policy = TreePolicy(t["obs_dim"], t["num_trees"], hidden=tuple(t["hidden"]))
    _unpack("tree/actor", tree_policy.actor, data)
    _unpack("tree/critic", tree_policy.critic, data)
    pick_policy = PickPolicy(hidden=tuple(meta["pick"]["hidden"]))
    _unpack("pick/scorer", pick_policy.scorer, data)
    _unpack("pick/critic", pick_policy.critic, data)
    pick_policy.stop[...] = data["pick/stop"]
    return tree_policy, pick_policy, meta
