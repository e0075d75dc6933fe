"""Discrete-time plant models, initial-state sampling, and rollout execution.

States are plain 1-D float64 numpy arrays.  An :class:`EnvModel` bundles a
deterministic transition function with dimensions, horizon, performance
reward, and the initial-state box.  The four bundled benchmarks (pendulum and
three linear systems) load from JSON files shipped under
``aegis/benchmarks/``; pass ``benchmarks_dir`` to load user-edited copies.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

BENCHMARK_NAMES = ("pendulum", "carplatoon4", "carplatoon8", "helicopter")


class EnvError(ValueError):
    pass


class NumericOverflowError(RuntimeError):
    """A rollout produced a non-finite state."""

    def __init__(self, step: int):
        super().__init__(f"non-finite state produced at step {step}")
        self.step = step


@dataclass
class Trajectory:
    """A finite rollout: states (T+1, d), actions (T, k), undiscounted return."""

    states: np.ndarray
    actions: np.ndarray
    perf_return: float

    def __post_init__(self):
        self.states = np.asarray(self.states, dtype=float)
        self.actions = np.asarray(self.actions, dtype=float)
        if self.states.ndim != 2:
            raise EnvError(f"states must be 2-D, got shape {self.states.shape}")
        if len(self.states) != len(self.actions) + 1:
            raise EnvError(
                f"|states| = {len(self.states)} must equal |actions| + 1 "
                f"= {len(self.actions) + 1}"
            )

    def __len__(self) -> int:
        return len(self.states)


@dataclass
class EnvModel:
    """Deterministic discrete-time plant with an initial-state box."""

    name: str
    state_dim: int
    action_dim: int
    horizon: int
    step_fn: Callable[[np.ndarray, np.ndarray], np.ndarray]
    perf_reward_fn: Callable[[np.ndarray, np.ndarray], float]
    init_box: np.ndarray  # (d, 2) rows of [low, high]
    action_limit: float = np.inf
    safety_spec_text: str = ""
    # benchmarks with published state bounds skip the epsilon search and use
    # the init-box half-widths as per-dimension perturbation radii
    has_published_bounds: bool = False
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.state_dim < 1 or self.action_dim < 1:
            raise EnvError("state_dim and action_dim must be positive")
        if self.horizon < 1:
            raise EnvError(f"horizon must be >= 1, got {self.horizon}")
        self.init_box = np.asarray(self.init_box, dtype=float)
        if self.init_box.shape != (self.state_dim, 2):
            raise EnvError(
                f"init_box must have shape ({self.state_dim}, 2), "
                f"got {self.init_box.shape}"
            )
        if np.any(self.init_box[:, 0] > self.init_box[:, 1]):
            raise EnvError("init_box lower bounds must not exceed uppers")

    def clip_action(self, u: np.ndarray) -> np.ndarray:
        return np.clip(u, -self.action_limit, self.action_limit)

    def init_halfwidths(self) -> np.ndarray:
        """Per-dimension half-widths of the init box (the published epsilons)."""
        return (self.init_box[:, 1] - self.init_box[:, 0]) / 2.0


def sample_initial(env: EnvModel, rng_seed) -> np.ndarray:
    """Uniform sample from the init box; reproducible from the seed."""
    rng = rng_seed if isinstance(rng_seed, np.random.Generator) \
        else np.random.default_rng(rng_seed)
    return rng.uniform(env.init_box[:, 0], env.init_box[:, 1])


def rollout(env: EnvModel, policy, start,
            early_stop: Optional[Callable[[np.ndarray], bool]] = None
            ) -> Trajectory:
    """Run the policy from ``start`` for up to ``horizon`` steps.

    The optional ``early_stop`` predicate is evaluated on every state
    (including the start); when it fires the trajectory ends at that state.
    Raises :class:`NumericOverflowError` if a state goes non-finite.
    """
    s = np.asarray(start, dtype=float)
    if s.shape != (env.state_dim,):
        raise EnvError(
            f"start must have shape ({env.state_dim},), got {s.shape}")
    if not np.all(np.isfinite(s)):
        raise NumericOverflowError(0)

    states = [s]
    actions = []
    perf = 0.0
    for t in range(env.horizon):
        if early_stop is not None and early_stop(s):
            break
        u = env.clip_action(np.atleast_1d(np.asarray(policy.act(s), dtype=float)))
        s_next = np.asarray(env.step_fn(s, u), dtype=float)
        if not np.all(np.isfinite(s_next)):
            raise NumericOverflowError(t + 1)
        perf += float(env.perf_reward_fn(s, u))
        states.append(s_next)
        actions.append(u)
        s = s_next
    return Trajectory(np.stack(states), np.array(actions).reshape(len(actions), -1)
                      if actions else np.zeros((0, env.action_dim)),
                      perf)


# ---------------------------------------------------------------------------
# Benchmark construction
# ---------------------------------------------------------------------------

def _quadratic_cost(action_weight: float = 0.01):
    def reward(s, u):
        return -float(s @ s) - action_weight * float(u @ u)
    return reward


def _pendulum_step(gravity: float, mass: float, length: float, dt: float):
    """Frictionless pendulum about the upright equilibrium, RK4 with held torque.

    State is (angle from vertical, angular velocity); positive angle falls
    further under gravity, so the upright origin is an unstable fixed point.
    """
    ml2 = mass * length * length
    g_over_l = gravity / length

    def deriv(s, u):
        return np.array([s[1], g_over_l * np.sin(s[0]) + u[0] / ml2])

    def step(s, u):
        k1 = deriv(s, u)
        k2 = deriv(s + 0.5 * dt * k1, u)
        k3 = deriv(s + 0.5 * dt * k2, u)
        k4 = deriv(s + dt * k3, u)
        return s + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)

    return step


def _linear_step(A: np.ndarray, B: np.ndarray):
    def step(s, u):
        return A @ s + B @ u
    return step


def load_benchmark_file(path) -> EnvModel:
    """Build an EnvModel from a benchmark JSON file."""
    with open(path) as fh:
        cfg = json.load(fh)
    return _env_from_config(cfg)


def _env_from_config(cfg: dict) -> EnvModel:
    kind = cfg["kind"]
    if kind == "pendulum":
        step = _pendulum_step(cfg["gravity"], cfg["mass"], cfg["length"],
                              cfg["dt"])
    elif kind == "linear":
        A = np.asarray(cfg["A"], dtype=float)
        B = np.asarray(cfg["B"], dtype=float)
        if A.shape != (cfg["state_dim"], cfg["state_dim"]):
            raise EnvError(f"A has shape {A.shape}, expected square of "
                           f"dimension {cfg['state_dim']}")
        if B.shape != (cfg["state_dim"], cfg["action_dim"]):
            raise EnvError(f"B has shape {B.shape}")
        step = _linear_step(A, B)
    else:
        raise EnvError(f"unknown dynamics kind {kind!r}")

    metadata = dict(cfg.get("metadata", {}))
    metadata["return_convention"] = "undiscounted"
    if kind == "linear":
        metadata["A"] = cfg["A"]
        metadata["B"] = cfg["B"]
    env = EnvModel(
        name=cfg["name"],
        state_dim=cfg["state_dim"],
        action_dim=cfg["action_dim"],
        horizon=cfg["horizon"],
        step_fn=step,
        perf_reward_fn=_quadratic_cost(cfg.get("action_cost_weight", 0.01)),
        init_box=np.asarray(cfg["init_box"], dtype=float),
        action_limit=cfg.get("action_limit", np.inf),
        safety_spec_text=cfg.get("safety_spec", ""),
        has_published_bounds=cfg.get("has_published_bounds", False),
        metadata=metadata,
    )
    return env


def make_benchmark(name: str, benchmarks_dir=None) -> EnvModel:
    """Load one of the bundled benchmarks by name.

    ``benchmarks_dir`` overrides the packaged data files with a directory of
    user-edited JSON copies.
    """
    if name not in BENCHMARK_NAMES:
        raise EnvError(
            f"unknown benchmark {name!r}; expected one of {BENCHMARK_NAMES}")
    if benchmarks_dir is not None:
        return load_benchmark_file(Path(benchmarks_dir) / f"{name}.json")
    ref = resources.files("aegis.benchmarks").joinpath(f"{name}.json")
    with resources.as_file(ref) as path:
        return load_benchmark_file(path)


# ---------------------------------------------------------------------------
# Trajectory persistence (JSON lines, one state/action pair per line)
# ---------------------------------------------------------------------------

def save_trajectory_jsonl(traj: Trajectory, path) -> None:
    with open(path, "w") as fh:
        for t in range(len(traj.actions)):
            fh.write(json.dumps({"t": t, "state": traj.states[t].tolist(),
                                 "action": traj.actions[t].tolist()}) + "\n")
        fh.write(json.dumps({"t": len(traj.actions),
                             "state": traj.states[-1].tolist(),
                             "action": None,
                             "perf_return": traj.perf_return}) + "\n")


def load_trajectory_jsonl(path) -> Trajectory:
    states, actions, perf = [], [], 0.0
    with open(path) as fh:
        for line in fh:
            rec = json.loads(line)
            states.append(rec["state"])
            if rec["action"] is not None:
                actions.append(rec["action"])
            else:
                perf = rec.get("perf_return", 0.0)
    return Trajectory(np.asarray(states), np.asarray(actions).reshape(len(actions), -1)
                      if actions else np.zeros((0, 0)), perf)
