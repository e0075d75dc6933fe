"""State-perturbation attacks: epsilon selection, random baseline, BO attack.

An attack perturbs one state of a nominally safe trajectory inside an
L-infinity box restricted to a filtered subset of dimensions, then replays
the victim policy from the perturbed state.  A perturbation whose replay
drives the trajectory reward non-positive is adversarial.  The BO attack
treats the trajectory reward as a black-box function of the offsets and
minimizes it with the surrogate from :mod:`aegis.gpopt`, one independent
optimizer per attacked state.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .envsim import EnvModel, NumericOverflowError, Trajectory, rollout, sample_initial
from .gpopt import AcquisitionConfig, bo_minimize
from .specdsl import SafetySpec, safety_reward_state, safety_reward_traj

CLIP_MARGIN_FRACTION = 1e-9


class AttackError(ValueError):
    pass


class EpsilonNotFoundError(RuntimeError):
    pass


@dataclass
class PerturbationBox:
    """Per-dimension offset radii over a filtered set of state dimensions.

    ``clip_bounds`` (full-state (d, 2) array) optionally clamps perturbed
    values of the filtered dimensions strictly inside a safety box, so a
    perturbation never starts out already violating.
    """

    radii: np.ndarray
    filter: tuple
    clip_bounds: Optional[np.ndarray] = None

    def __post_init__(self):
        self.radii = np.atleast_1d(np.asarray(self.radii, dtype=float))
        self.filter = tuple(int(i) for i in self.filter)
        if len(set(self.filter)) != len(self.filter):
            raise AttackError("filter indices must be unique")
        if any(i < 0 for i in self.filter):
            raise AttackError("filter indices must be non-negative")
        if self.radii.shape == (1,) and len(self.filter) > 1:
            self.radii = np.full(len(self.filter), self.radii[0])
        if self.radii.shape != (len(self.filter),):
            raise AttackError(
                f"radii shape {self.radii.shape} does not match filter size "
                f"{len(self.filter)}")
        if np.any(self.radii <= 0.0):
            raise AttackError("all radii must be positive")
        if self.clip_bounds is not None:
            self.clip_bounds = np.asarray(self.clip_bounds, dtype=float)

    @property
    def epsilon(self) -> float:
        return float(np.max(self.radii))

    def offset_bounds(self) -> np.ndarray:
        """(k, 2) array of [-r_i, +r_i] offset ranges for the optimizer."""
        return np.column_stack([-self.radii, self.radii])

    @staticmethod
    def uniform(epsilon: float, filter: Sequence[int],
                clip_bounds=None) -> "PerturbationBox":
        return PerturbationBox(np.full(len(tuple(filter)), float(epsilon)),
                               tuple(filter), clip_bounds)

    @staticmethod
    def from_init_box(env: EnvModel, filter: Optional[Sequence[int]] = None,
                      clip_to_safety: bool = True) -> "PerturbationBox":
        """Radii from the published init-box half-widths of the env."""
        filt = tuple(range(env.state_dim)) if filter is None else tuple(filter)
        radii = env.init_halfwidths()[list(filt)]
        clip = None
        if clip_to_safety and "safety_box" in env.metadata:
            clip = np.asarray(env.metadata["safety_box"], dtype=float)
        return PerturbationBox(radii, filt, clip)

    def restrict(self, filter: Sequence[int]) -> "PerturbationBox":
        """New box over a subset of this box's filtered dimensions."""
        filt = tuple(int(i) for i in filter)
        pos = {f: i for i, f in enumerate(self.filter)}
        missing = [f for f in filt if f not in pos]
        if missing:
            raise AttackError(f"dimensions {missing} are not in this box's filter")
        return PerturbationBox(self.radii[[pos[f] for f in filt]], filt,
                               self.clip_bounds)


def perturb(s: np.ndarray, box: PerturbationBox, offsets) -> np.ndarray:
    """Shift the filtered dimensions of ``s`` by ``offsets``."""
    offsets = np.atleast_1d(np.asarray(offsets, dtype=float))
    if offsets.shape != (len(box.filter),):
        raise AttackError(f"offsets shape {offsets.shape} does not match "
                          f"filter size {len(box.filter)}")
    if np.any(np.abs(offsets) > box.radii * (1.0 + 1e-12)):
        raise AttackError("offsets exceed the perturbation radii")
    out = np.array(s, dtype=float, copy=True)
    idx = list(box.filter)
    out[idx] = out[idx] + offsets
    if box.clip_bounds is not None:
        lo = box.clip_bounds[idx, 0]
        hi = box.clip_bounds[idx, 1]
        margin = CLIP_MARGIN_FRACTION * (hi - lo)
        out[idx] = np.clip(out[idx], lo + margin, hi - margin)
    return out


@dataclass
class AttackRecord:
    """One perturbed replay: where it started, what happened."""

    source_traj_id: int
    step_index: int
    ordinal: int
    perturbed_state: np.ndarray
    states: Optional[np.ndarray]  # full rollout states (possibly thinned)
    reward: float
    unsafe: bool
    error: Optional[str] = None

    def to_json(self) -> str:
        return json.dumps({
            "source_traj_id": self.source_traj_id,
            "step_index": self.step_index,
            "ordinal": self.ordinal,
            "perturbed_state": np.asarray(self.perturbed_state).tolist(),
            "states": None if self.states is None
                      else np.asarray(self.states).tolist(),
            "reward": None if not np.isfinite(self.reward) else self.reward,
            "unsafe": self.unsafe,
            "error": self.error,
        })

    @staticmethod
    def from_json(line: str) -> "AttackRecord":
        d = json.loads(line)
        return AttackRecord(
            source_traj_id=d["source_traj_id"],
            step_index=d["step_index"],
            ordinal=d["ordinal"],
            perturbed_state=np.asarray(d["perturbed_state"], dtype=float),
            states=None if d["states"] is None
                   else np.asarray(d["states"], dtype=float),
            reward=np.inf if d["reward"] is None else d["reward"],
            unsafe=d["unsafe"],
            error=d.get("error"),
        )


def save_records_jsonl(records, path) -> None:
    with open(path, "w") as fh:
        for rec in records:
            fh.write(rec.to_json() + "\n")


def load_records_jsonl(path) -> list:
    with open(path) as fh:
        return [AttackRecord.from_json(line) for line in fh if line.strip()]


def _violation_predicate(spec: SafetySpec):
    return lambda s: safety_reward_state(spec, s) <= 0.0


def _attack_rollout(env, policy, spec, start, thin: int = 1):
    """Replay from a perturbed start; returns (states, reward, error)."""
    try:
        traj = rollout(env, policy, start,
                       early_stop=_violation_predicate(spec))
    except NumericOverflowError as exc:
        return None, np.inf, str(exc)
    reward = safety_reward_traj(spec, traj)
    states = traj.states
    if thin > 1 and reward > 0.0:
        states = states[::thin]
    return states, reward, None


def select_epsilon(env: EnvModel, policies, spec: SafetySpec,
                   start_eps: float = 0.001, step: float = 0.0005,
                   n_sims: int = 1000, eps_max: float = 1.0,
                   seed=0) -> float:
    """Smallest epsilon in the arithmetic ladder that breaks every policy.

    Perturbs sampled initial states uniformly within the candidate box and
    counts violating replays.  Environments that publish their own state
    bounds skip the ladder and report the init-box half-width directly.
    """
    if len(policies) == 0:
        raise AttackError("need at least one policy")
    if env.has_published_bounds:
        return float(np.max(env.init_halfwidths()))
    rng = np.random.default_rng(seed)
    dims = env.state_dim
    eps = start_eps
    while eps <= eps_max + 1e-15:
        all_broken = True
        for policy in policies:
            broken = False
            for _ in range(n_sims):
                s0 = sample_initial(env, rng)
                s0 = s0 + rng.uniform(-eps, eps, size=dims)
                _, reward, err = _attack_rollout(env, policy, spec, s0)
                if err is None and reward <= 0.0:
                    broken = True
                    break
            if not broken:
                all_broken = False
                break
        if all_broken:
            return eps
        eps += step
    raise EpsilonNotFoundError(
        f"no epsilon <= {eps_max} breaks all policies")


def random_attack(env: EnvModel, policy, spec: SafetySpec,
                  box: PerturbationBox, base_traj: Trajectory,
                  n_samples: int, seed=0, source_traj_id: int = 0,
                  safe_state_thin: int = 1):
    """Uniform baseline over the union of per-state perturbation boxes."""
    if n_samples < 1:
        raise AttackError("n_samples must be >= 1")
    if safety_reward_traj(spec, base_traj) <= 0.0:
        raise AttackError("base trajectory must be safe")
    rng = np.random.default_rng(seed)
    n_states = len(base_traj.states)
    records = []
    unsafe_count = 0
    for ordinal in range(n_samples):
        k = int(rng.integers(0, n_states))
        offsets = rng.uniform(-box.radii, box.radii)
        s_pert = perturb(base_traj.states[k], box, offsets)
        states, reward, err = _attack_rollout(env, policy, spec, s_pert,
                                              thin=safe_state_thin)
        unsafe = err is None and reward <= 0.0
        unsafe_count += int(unsafe)
        records.append(AttackRecord(source_traj_id, k, ordinal, s_pert,
                                    states, reward, unsafe, err))
    return unsafe_count / n_samples, records


def bo_attack(env: EnvModel, policy, spec: SafetySpec, box: PerturbationBox,
              base_traj: Trajectory, acq_cfg: AcquisitionConfig, seed=0,
              stride: int = 1, source_traj_id: int = 0,
              safe_state_thin: int = 1):
    """Per-state Bayesian-optimization attack along a safe base trajectory.

    Every attacked state gets its own surrogate and exactly
    ``n_init + n_iter`` replays; every replay becomes an
    :class:`AttackRecord`.  Returns ``(success_rate, adversarial_set,
    records)`` where the adversarial set holds every perturbed state whose
    replay went unsafe.
    """
    if stride < 1:
        raise AttackError("stride must be >= 1")
    if safety_reward_traj(spec, base_traj) <= 0.0:
        raise AttackError("base trajectory must be safe")
    bounds = box.offset_bounds()
    root = np.random.SeedSequence(seed)
    records = []
    adversarial = []
    for k in range(0, len(base_traj.states), stride):
        s_k = base_traj.states[k]
        k_records = []

        def objective(offsets):
            s_pert = perturb(s_k, box, offsets)
            states, reward, err = _attack_rollout(env, policy, spec, s_pert,
                                                  thin=safe_state_thin)
            unsafe = err is None and reward <= 0.0
            rec = AttackRecord(source_traj_id, k, len(k_records), s_pert,
                               states, reward, unsafe, err)
            k_records.append(rec)
            if unsafe:
                adversarial.append(s_pert)
            return reward

        bo_minimize(objective, bounds, acq_cfg,
                    np.random.SeedSequence(entropy=root.entropy,
                                           spawn_key=(k,)))
        records.extend(k_records)
    unsafe_total = sum(r.unsafe for r in records)
    rate = unsafe_total / len(records) if records else 0.0
    adv = np.array(adversarial) if adversarial else np.zeros((0, env.state_dim))
    return rate, adv, records
