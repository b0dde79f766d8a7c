"""Twin-critic deterministic policy-gradient agent.

Core mechanics: two critics trained against the clipped double-Q target
(minimum of the target critics, with clipped Gaussian smoothing noise on
the target action), a deterministic actor updated at a lower cadence on
the first critic's value, and Polyak-averaged target networks that only
move during actor updates.  Experience lives in a bounded FIFO replay
buffer sampled uniformly.
"""

import dataclasses
import json
from dataclasses import dataclass

import numpy as np

from .config import TD3Hyper
from .nn import Adam, Mlp, polyak_update

CHECKPOINT_VERSION = 1


class TrainingDiverged(RuntimeError):
    """A loss or parameter went non-finite during training."""


class CheckpointError(ValueError):
    """Checkpoint file unusable or incompatible with the architecture."""


@dataclass(frozen=True)
class Transition:
    """One (s, a, r, s', done) experience; a is the raw action vector."""

    s: np.ndarray
    a: np.ndarray
    r: float
    s2: np.ndarray
    done: bool


class ReplayBuffer:
    """Bounded FIFO of transitions with uniform sampling."""

    def __init__(self, capacity, obs_dim, act_dim, seed=None):
        self.capacity = capacity
        self.s = np.zeros((capacity, obs_dim))
        self.a = np.zeros((capacity, act_dim))
        self.r = np.zeros((capacity, 1))
        self.s2 = np.zeros((capacity, obs_dim))
        self.done = np.zeros((capacity, 1))
        self.size = 0
        self.pos = 0
        self.rng = np.random.default_rng(seed)

    def __len__(self):
        return self.size

    def push(self, transition):
        i = self.pos
        self.s[i] = transition.s
        self.a[i] = transition.a
        self.r[i] = transition.r
        self.s2[i] = transition.s2
        self.done[i] = 1.0 if transition.done else 0.0
        self.pos = (self.pos + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def sample(self, batch_size):
        if self.size == 0:
            raise ValueError("cannot sample from an empty buffer")
        idx = self.rng.integers(0, self.size, size=batch_size)
        return {"s": self.s[idx], "a": self.a[idx], "r": self.r[idx],
                "s2": self.s2[idx], "done": self.done[idx]}

    def state_dict(self):
        return {"s": self.s[:self.size].copy(),
                "a": self.a[:self.size].copy(),
                "r": self.r[:self.size].copy(),
                "s2": self.s2[:self.size].copy(),
                "done": self.done[:self.size].copy(),
                "pos": self.pos, "size": self.size,
                "rng": self.rng.bit_generator.state}

    def load_state_dict(self, state):
        n = int(state["size"])
        if n > self.capacity:
            raise CheckpointError("buffer snapshot exceeds capacity")
        self.s[:n] = state["s"]
        self.a[:n] = state["a"]
        self.r[:n] = state["r"]
        self.s2[:n] = state["s2"]
        self.done[:n] = state["done"]
        self.size = n
        self.pos = int(state["pos"])
        self.rng.bit_generator.state = state["rng"]


class TD3Agent:
    """Actor, twin critics and their targets, plus the training cadence.

    The agent owns two rng streams: one for exploration/target noise and
    one inside the replay buffer for sampling, so that a (env seed,
    agent seed) pair pins an entire training run.
    """

    def __init__(self, obs_dim, act_dim, hyper=None, seed=None):
        self.hyper = hyper if hyper is not None else TD3Hyper()
        self.obs_dim = obs_dim
        self.act_dim = act_dim
        self.rng = np.random.default_rng(seed)
        h = self.hyper
        sizes_actor = (obs_dim,) + tuple(h.hidden) + (act_dim,)
        sizes_critic = (obs_dim + act_dim,) + tuple(h.hidden) + (1,)
        self.actor = Mlp(sizes_actor, "tanh", self.rng)
        self.critic1 = Mlp(sizes_critic, "identity", self.rng)
        self.critic2 = Mlp(sizes_critic, "identity", self.rng)
        self.target_actor = Mlp(sizes_actor, "tanh", self.rng)
        self.target_critic1 = Mlp(sizes_critic, "identity", self.rng)
        self.target_critic2 = Mlp(sizes_critic, "identity", self.rng)
        self.target_actor.copy_from(self.actor)
        self.target_critic1.copy_from(self.critic1)
        self.target_critic2.copy_from(self.critic2)
        self.opt_actor = Adam(self.actor.params(), h.lr_actor)
        self.opt_critic1 = Adam(self.critic1.params(), h.lr_critic)
        self.opt_critic2 = Adam(self.critic2.params(), h.lr_critic)
        self.buffer = ReplayBuffer(h.buffer_capacity, obs_dim, act_dim,
                                   seed=self.rng.integers(2 ** 63))
        self.updates_done = 0
        self.episodes_done = 0

    # ------------------------------------------------------------------
    # acting

    def select_action(self, obs, mode="explore"):
        """Raw action in [-1, 1]^D.

        greedy: the deterministic policy output.  explore: policy output
        plus clipped Gaussian noise, or a uniform draw while the agent
        is still inside its warmup episode budget.
        """
        if mode not in ("explore", "greedy"):
            raise ValueError(f"unknown mode {mode!r}")
        if mode == "explore" and self.episodes_done < self.hyper.warmup_episodes:
            return self.rng.uniform(-1.0, 1.0, size=self.act_dim)
        a = self.actor.forward(np.asarray(obs))
        if mode == "explore" and self.hyper.sigma_explore > 0:
            a = a + self.rng.normal(0.0, self.hyper.sigma_explore,
                                    size=self.act_dim)
            a = np.clip(a, -1.0, 1.0)
        return a

    # ------------------------------------------------------------------
    # learning

    def compute_target(self, batch, return_details=False):
        """Clipped double-Q targets for a batch.

        y = r + gamma * (1 - done) * min(Q1', Q2')(s', a~) where a~ is
        the target policy's action plus clipped smoothing noise.
        """
        h = self.hyper
        s2 = batch["s2"]
        a2 = self.target_actor.forward(s2)
        noise = np.clip(self.rng.normal(0.0, h.sigma_target, size=a2.shape),
                        -h.noise_clip, h.noise_clip)
        a_smooth = np.clip(a2 + noise, -1.0, 1.0)
        x2 = np.concatenate([s2, a_smooth], axis=1)
        q1 = self.target_critic1.forward(x2)
        q2 = self.target_critic2.forward(x2)
        y = batch["r"] + h.gamma * (1.0 - batch["done"]) * np.minimum(q1, q2)
        if return_details:
            return y, {"a_target": a2, "a_smooth": a_smooth,
                       "q1": q1, "q2": q2}
        return y

    def critic_update(self, batch, y):
        """One Adam step per critic on the squared Bellman error.

        Returns the two pre-update losses.
        """
        x = np.concatenate([batch["s"], batch["a"]], axis=1)
        n = x.shape[0]
        losses = []
        for critic, opt in ((self.critic1, self.opt_critic1),
                            (self.critic2, self.opt_critic2)):
            q, cache = critic.forward_cached(x)
            err = q - y
            loss = float(np.mean(err ** 2))
            if not np.isfinite(loss):
                raise TrainingDiverged(
                    f"critic loss became {loss} at update {self.updates_done}")
            grads, _ = critic.backward(cache, 2.0 * err / n)
            opt.step(grads)
            losses.append(loss)
        return losses[0], losses[1]

    def actor_update(self, batch):
        """Ascent step on E[Q1(s, pi(s))], then Polyak-track all targets.

        Only called every policy_delay critic updates; this is the one
        place where target networks move.
        """
        s = batch["s"]
        n = s.shape[0]
        a, a_cache = self.actor.forward_cached(s)
        x = np.concatenate([s, a], axis=1)
        q, c_cache = self.critic1.forward_cached(x)
        loss = float(-np.mean(q))
        if not np.isfinite(loss):
            raise TrainingDiverged(
                f"actor loss became {loss} at update {self.updates_done}")
        upstream = np.full_like(q, -1.0 / n)
        _, dx = self.critic1.backward(c_cache, upstream,
                                      need_param_grads=False)
        grads, _ = self.actor.backward(a_cache, dx[:, self.obs_dim:])
        self.opt_actor.step(grads)
        tau = self.hyper.tau
        polyak_update(self.target_actor.params(), self.actor.params(), tau)
        polyak_update(self.target_critic1.params(), self.critic1.params(), tau)
        polyak_update(self.target_critic2.params(), self.critic2.params(), tau)
        return loss

    def update(self):
        """One training step: sample, critic step, delayed actor step.

        Returns a loss dict, or None when the buffer is still smaller
        than a batch.
        """
        h = self.hyper
        if len(self.buffer) < h.batch_size:
            return None
        batch = self.buffer.sample(h.batch_size)
        y = self.compute_target(batch)
        l1, l2 = self.critic_update(batch, y)
        self.updates_done += 1
        diag = {"critic1_loss": l1, "critic2_loss": l2, "actor_loss": None}
        if self.updates_done % h.policy_delay == 0:
            diag["actor_loss"] = self.actor_update(batch)
        return diag

    def train_episode(self, env, seed=None):
        """Roll one episode, storing transitions and updating once per
        environment step after the warmup phase.

        Returns (undiscounted return, list of per-update loss dicts).
        """
        warmup = self.episodes_done < self.hyper.warmup_episodes
        obs = env.reset(seed)
        ep_return = 0.0
        diags = []
        done = False
        while not done:
            raw = self.select_action(obs, "explore")
            action = env.decode_action(raw)
            obs2, r, done, _ = env.step(action)
            self.buffer.push(Transition(obs, raw, r, obs2, done))
            if not warmup:
                diag = self.update()
                if diag is not None:
                    diags.append(diag)
            obs = obs2
            ep_return += r
        self.episodes_done += 1
        return ep_return, diags

    # ------------------------------------------------------------------
    # persistence

    def _networks(self):
        return {"actor": self.actor, "critic1": self.critic1,
                "critic2": self.critic2, "target_actor": self.target_actor,
                "target_critic1": self.target_critic1,
                "target_critic2": self.target_critic2}

    def _optimizers(self):
        return {"actor": self.opt_actor, "critic1": self.opt_critic1,
                "critic2": self.opt_critic2}

    def save_checkpoint(self, path, include_buffer=False, extra_meta=None):
        """Write a versioned .npz checkpoint.

        Policy checkpoints carry networks, optimizers and rng states;
        training checkpoints (include_buffer=True) add the replay buffer
        so an interrupted run resumes bit-identically.
        """
        meta = {
            "version": CHECKPOINT_VERSION,
            "obs_dim": self.obs_dim,
            "act_dim": self.act_dim,
            "hyper": dataclasses.asdict(self.hyper),
            "updates_done": self.updates_done,
            "episodes_done": self.episodes_done,
            "rng": self.rng.bit_generator.state,
            "has_buffer": bool(include_buffer),
        }
        if extra_meta:
            meta.update(extra_meta)
        arrays = {}
        for name, net in self._networks().items():
            for i, p in enumerate(net.params()):
                arrays[f"net_{name}_{i}"] = p
        for name, opt in self._optimizers().items():
            meta[f"opt_{name}_t"] = opt.t
            for i, a in enumerate(opt.m):
                arrays[f"opt_{name}_m_{i}"] = a
            for i, a in enumerate(opt.v):
                arrays[f"opt_{name}_v_{i}"] = a
        if include_buffer:
            buf = self.buffer.state_dict()
            meta["buffer_pos"] = buf["pos"]
            meta["buffer_size"] = buf["size"]
            meta["buffer_rng"] = buf["rng"]
            for key in ("s", "a", "r", "s2", "done"):
                arrays[f"buffer_{key}"] = buf[key]
        arrays["meta"] = np.frombuffer(
            json.dumps(meta, default=int).encode(), dtype=np.uint8)
        np.savez_compressed(path, **arrays)

    @classmethod
    def load_checkpoint(cls, path):
        """Rebuild an agent from a checkpoint; rejects wrong versions."""
        try:
            data = np.load(path, allow_pickle=False)
        except OSError as exc:
            raise CheckpointError(f"cannot read checkpoint: {exc}") from None
        if "meta" not in data:
            raise CheckpointError("not an agent checkpoint (missing meta)")
        meta = json.loads(bytes(data["meta"]).decode())
        if meta.get("version") != CHECKPOINT_VERSION:
            raise CheckpointError(
                f"unsupported checkpoint version {meta.get('version')}")
        hyper_kwargs = dict(meta["hyper"])
        hyper_kwargs["hidden"] = tuple(hyper_kwargs["hidden"])
        hyper = TD3Hyper(**hyper_kwargs)
        agent = cls(meta["obs_dim"], meta["act_dim"], hyper)
        for name, net in agent._networks().items():
            for i, p in enumerate(net.params()):
                key = f"net_{name}_{i}"
                if key not in data or data[key].shape != p.shape:
                    raise CheckpointError(
                        f"architecture mismatch on {key}")
                p[...] = data[key]
        for name, opt in agent._optimizers().items():
            opt.t = int(meta[f"opt_{name}_t"])
            for i in range(len(opt.m)):
                opt.m[i][...] = data[f"opt_{name}_m_{i}"]
                opt.v[i][...] = data[f"opt_{name}_v_{i}"]
        agent.updates_done = int(meta["updates_done"])
        agent.episodes_done = int(meta["episodes_done"])
        agent.rng.bit_generator.state = _rng_state_from_meta(meta["rng"])
        if meta.get("has_buffer"):
            agent.buffer.load_state_dict({
                "s": data["buffer_s"], "a": data["buffer_a"],
                "r": data["buffer_r"], "s2": data["buffer_s2"],
                "done": data["buffer_done"],
                "pos": meta["buffer_pos"], "size": meta["buffer_size"],
                "rng": _rng_state_from_meta(meta["buffer_rng"]),
            })
        return agent


def _rng_state_from_meta(state):
    # json round-trips the PCG64 state dict faithfully (Python ints are
    # arbitrary precision), only the nesting needs to stay intact
    return {"bit_generator": state["bit_generator"],
            "state": {k: int(v) for k, v in state["state"].items()},
            "has_uint32": int(state["has_uint32"]),
            "uinteger": int(state["uinteger"])}
