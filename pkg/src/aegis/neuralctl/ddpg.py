"""Deterministic actor-critic trainer with replay buffer and target networks.

The trainer is intentionally minimal: one actor, one critic, soft target
updates, Gaussian exploration noise, and a divergence guard.  Episodes come
from an :class:`EpisodicEnv`, a thin adapter that any plant plus reward and
termination rule can satisfy.  Evaluation-time policies are deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .nets import Adam, DenseNet, backward, forward, init_dense, soft_update
from .policy import NeuralPolicy


class TrainingDivergedError(RuntimeError):
    def __init__(self, step: int, loss: float):
        super().__init__(f"critic loss became non-finite at step {step} "
                         f"(loss={loss})")
        self.step = step
        self.loss = loss


@dataclass
class TrainerConfig:
    gamma: float = 0.99
    tau: float = 1e-3
    actor_lr: float = 1e-3
    critic_lr: float = 1e-3
    replay_capacity: int = 100_000
    batch_size: int = 64
    total_steps: int = 30_000
    exploration_noise_std: float = 0.1  # fraction of the actuator range
    warmup_steps: int = 1_000
    hidden: tuple = (64, 64)

    def __post_init__(self):
        if not 0.0 < self.gamma < 1.0:
            raise ValueError(f"gamma must lie in (0, 1), got {self.gamma}")
        for attr in ("tau", "actor_lr", "critic_lr", "exploration_noise_std"):
            if getattr(self, attr) < 0 or (attr != "exploration_noise_std"
                                           and getattr(self, attr) == 0):
                raise ValueError(f"{attr} must be positive")
        if min(self.replay_capacity, self.batch_size, self.total_steps) < 1:
            raise ValueError("replay_capacity, batch_size, total_steps >= 1")


class EpisodicEnv:
    """Adapter between a plant model and the trainer.

    ``reward_fn(s, u, s_next)`` shapes learning; ``done_fn(s_next)`` marks
    true terminal states (bootstrap is cut there, not at the step limit).
    ``start_sampler(rng)`` draws episode starts.
    """

    def __init__(self, env_model, reward_fn, start_sampler=None,
                 done_fn=None, episode_limit=None):
        self.model = env_model
        self.state_dim = env_model.state_dim
        self.action_dim = env_model.action_dim
        self.action_limit = env_model.action_limit
        self.reward_fn = reward_fn
        self.done_fn = done_fn or (lambda s: False)
        self.episode_limit = episode_limit or env_model.horizon
        self._start = start_sampler or (
            lambda rng: rng.uniform(env_model.init_box[:, 0],
                                    env_model.init_box[:, 1]))

    def reset(self, rng) -> np.ndarray:
        return self._start(rng)

    def step(self, s, u):
        s_next = self.model.step_fn(s, self.model.clip_action(u))
        return s_next, float(self.reward_fn(s, u, s_next)), self.done_fn(s_next)


class _Replay:
    def __init__(self, capacity, state_dim, action_dim):
        self.capacity = capacity
        self.s = np.zeros((capacity, state_dim))
        self.a = np.zeros((capacity, action_dim))
        self.r = np.zeros(capacity)
        self.s2 = np.zeros((capacity, state_dim))
        self.done = np.zeros(capacity)
        self.size = 0
        self.idx = 0

    def add(self, s, a, r, s2, done):
        i = self.idx
        self.s[i] = s
        self.a[i] = a
        self.r[i] = r
        self.s2[i] = s2
        self.done[i] = float(done)
        self.idx = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def sample(self, rng, n):
        ix = rng.integers(0, self.size, size=n)
        return self.s[ix], self.a[ix], self.r[ix], self.s2[ix], self.done[ix]


def train_ddpg(env: EpisodicEnv, cfg: TrainerConfig, seed,
               name: str = "ddpg", eval_every: int = None, eval_fn=None,
               stop_at_score: float = None) -> NeuralPolicy:
    """Train an actor on the episodic env; returns a deterministic policy.

    With ``eval_every`` and ``eval_fn`` set, the actor is scored periodically
    and the best-scoring snapshot is returned instead of the final one (DDPG
    actors drift late in training).  ``stop_at_score`` ends training early
    once a snapshot reaches that score; ``eval_fn`` must be deterministic or
    reproducibility is lost.
    """
    rng = np.random.default_rng(seed)
    limit = env.action_limit
    actor = init_dense([env.state_dim, *cfg.hidden, env.action_dim],
                       ["relu"] * len(cfg.hidden) + ["tanh"], rng)
    critic = init_dense([env.state_dim + env.action_dim, *cfg.hidden, 1],
                        ["relu"] * len(cfg.hidden) + ["linear"], rng)
    actor_t = actor.copy()
    critic_t = critic.copy()
    opt_actor = Adam(actor, cfg.actor_lr)
    opt_critic = Adam(critic, cfg.critic_lr)
    replay = _Replay(cfg.replay_capacity, env.state_dim, env.action_dim)

    s = env.reset(rng)
    ep_len = 0
    noise_std = cfg.exploration_noise_std * limit
    best_score = -np.inf
    best_actor = None
    for step in range(cfg.total_steps):
        if (eval_every is not None and eval_fn is not None and step > 0
                and step % eval_every == 0):
            score = eval_fn(NeuralPolicy(actor, limit, name=name))
            if score > best_score:
                best_score = score
                best_actor = actor.copy()
            if stop_at_score is not None and best_score >= stop_at_score:
                break
        if step < cfg.warmup_steps:
            a = rng.uniform(-limit, limit, size=env.action_dim)
        else:
            a = limit * forward(actor, s)
            a = np.clip(a + rng.normal(0.0, noise_std, size=env.action_dim),
                        -limit, limit)
        s2, r, done = env.step(s, a)
        replay.add(s, a, r, s2, done)
        ep_len += 1
        if done or ep_len >= env.episode_limit or not np.all(np.isfinite(s2)):
            s = env.reset(rng)
            ep_len = 0
        else:
            s = s2

        if replay.size < max(cfg.batch_size, cfg.warmup_steps):
            continue

        bs, ba, br, bs2, bdone = replay.sample(rng, cfg.batch_size)

        # critic regression toward the bootstrapped target
        a2 = limit * forward(actor_t, bs2)
        q2 = forward(critic_t, np.hstack([bs2, a2]))[:, 0]
        y = br + cfg.gamma * (1.0 - bdone) * q2
        q = forward(critic, np.hstack([bs, ba]), keep_cache=True)[:, 0]
        td = q - y
        loss = float(np.mean(td * td))
        if not np.isfinite(loss):
            raise TrainingDivergedError(step, loss)
        gW, gb, _ = backward(critic, (2.0 / cfg.batch_size) * td[:, None])
        opt_critic.step(gW, gb)

        # actor ascent on Q(s, actor(s))
        out = forward(actor, bs, keep_cache=True)
        qa = forward(critic, np.hstack([bs, limit * out]), keep_cache=True)
        _, _, dinp = backward(critic, np.ones_like(qa) / cfg.batch_size)
        dq_da = dinp[:, env.state_dim:]
        gW, gb, _ = backward(actor, -limit * dq_da)
        opt_actor.step(gW, gb)

        soft_update(actor_t, actor, cfg.tau)
        soft_update(critic_t, critic, cfg.tau)

    if eval_every is not None and eval_fn is not None:
        score = eval_fn(NeuralPolicy(actor, limit, name=name))
        if score > best_score:
            best_actor = actor
        if best_actor is not None:
            return NeuralPolicy(best_actor, limit, name=name)
    return NeuralPolicy(actor, limit, name=name)
