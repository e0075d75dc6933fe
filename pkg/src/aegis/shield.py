"""Auxiliary recovery policy training and the composed shielded policy.

The shielded policy is a per-step dispatch: if the detector marks the current
state unsafe the auxiliary policy acts, otherwise the original policy does.
The auxiliary policy trains on a modified copy of the plant whose reward is
``detector_reward + lam * state_safety_reward`` and whose episodes start from
previously discovered adversarial states, truncated at a short recovery
horizon.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .attack import PerturbationBox, perturb
from .detector import Detector, classify, classify_batch, CRange, with_constant
from .envsim import EnvModel, Trajectory, rollout, sample_initial
from .gpopt import AcquisitionConfig
from .neuralctl.ddpg import EpisodicEnv, TrainerConfig, train_ddpg
from .neuralctl.policy import BlackBoxPolicy
from .specdsl import SafetySpec, safety_reward_state, safety_reward_traj


class ShieldError(ValueError):
    pass


def detector_reward(det: Detector, s) -> int:
    """1 when the detector marks the state safe, else 0."""
    return 0 if classify(det, s) else 1


class ShieldTrainEnv(EpisodicEnv):
    """Recovery-task wrapper: adversarial starts, detector-shaped reward.

    Episode starts draw from the adversarial set with probability ``p_adv``
    (falling back to nominal inits otherwise); with an empty adversarial set
    every start is an epsilon-perturbed nominal init instead, with a warning.
    Episodes terminate on safety violation and truncate at
    ``recovery_horizon`` steps.
    """

    def __init__(self, env_model: EnvModel, det: Detector, spec: SafetySpec,
                 adversarial_set, p_adv: float = 0.8, lam: float = 1.0,
                 recovery_horizon: int = 100,
                 box: PerturbationBox = None,
                 reward_uses_rollout_min: bool = False):
        self.det = det
        self.spec = spec
        self.adversarial_set = np.asarray(adversarial_set, dtype=float) \
            if len(adversarial_set) else np.zeros((0, env_model.state_dim))
        self.p_adv = p_adv
        self.lam = lam
        self.box = box or PerturbationBox.from_init_box(env_model)
        self.reward_uses_rollout_min = reward_uses_rollout_min
        self._running_min = np.inf
        if len(self.adversarial_set) == 0:
            warnings.warn("empty adversarial set; auxiliary training falls "
                          "back to perturbed nominal starts")

        def reward(s, u, s_next):
            L = safety_reward_state(spec, s_next)
            if self.reward_uses_rollout_min:
                self._running_min = min(self._running_min, L)
                L = self._running_min
            return detector_reward(det, s_next) + self.lam * L

        def done(s_next):
            return safety_reward_state(spec, s_next) <= 0.0

        super().__init__(env_model, reward, done_fn=done,
                         episode_limit=recovery_horizon)

    def reset(self, rng) -> np.ndarray:
        self._running_min = np.inf
        if len(self.adversarial_set) and rng.uniform() < self.p_adv:
            return self.adversarial_set[
                rng.integers(0, len(self.adversarial_set))].copy()
        s0 = sample_initial(self.model, rng)
        if len(self.adversarial_set) == 0:
            offsets = rng.uniform(-self.box.radii, self.box.radii)
            s0 = perturb(s0, self.box, offsets)
        return s0


def train_aux(shield_env: ShieldTrainEnv, cfg: TrainerConfig, seed
              ) -> BlackBoxPolicy:
    """DDPG-style training of the recovery policy on the wrapped plant."""
    return train_ddpg(shield_env, cfg, seed, name="aux")


class ShieldedPolicy(BlackBoxPolicy):
    """Per-step composition of original and auxiliary policy via the detector."""

    def __init__(self, det: Detector, original: BlackBoxPolicy,
                 aux: BlackBoxPolicy, name: str = "shielded",
                 log_decisions: bool = False):
        self.detector = det
        self.original = original
        self.aux = aux
        self.name = name
        self.action_dim = original.action_dim
        self.intervention_count = 0
        self.log_decisions = log_decisions
        self.decision_log = []

    def act(self, s: np.ndarray) -> np.ndarray:
        fire = classify(self.detector, s)
        if fire:
            self.intervention_count += 1
            a = self.aux.act(s)
        else:
            a = self.original.act(s)
        if self.log_decisions:
            self.decision_log.append((np.array(s, copy=True), bool(fire),
                                      np.array(a, copy=True)))
        return a

    def reset_counter(self) -> None:
        self.intervention_count = 0
        self.decision_log = []

    def with_constant(self, C: float) -> "ShieldedPolicy":
        return ShieldedPolicy(with_constant(self.detector, C), self.original,
                              self.aux, name=self.name)


def shielded_step(sp: ShieldedPolicy, s) -> np.ndarray:
    return sp.act(s)


def eval_defense(env: EnvModel, spec: SafetySpec, sp: BlackBoxPolicy,
                 adversarial_set, max_starts: int = None, seed=0) -> float:
    """Fraction of rollouts from adversarial starts that stay safe throughout."""
    adv = np.asarray(adversarial_set, dtype=float)
    if len(adv) == 0:
        raise ShieldError("adversarial set is empty")
    if max_starts is not None and len(adv) > max_starts:
        rng = np.random.default_rng(seed)
        adv = adv[rng.choice(len(adv), size=max_starts, replace=False)]
    violation = lambda s: safety_reward_state(spec, s) <= 0.0
    safe = 0
    for s0 in adv:
        traj = rollout(env, sp, s0, early_stop=violation)
        safe += int(safety_reward_traj(spec, traj) > 0.0)
    return safe / len(adv)


def eval_shielded_attack_improvement(env: EnvModel, spec: SafetySpec,
                                     sp: ShieldedPolicy, box: PerturbationBox,
                                     base_traj: Trajectory,
                                     acq_cfg: AcquisitionConfig, seeds,
                                     stride: int = 1):
    """Reduction in unsafe replays when the same BO attack hits the shield.

    Both attacks share anchors (the given safe base trajectory), budgets, and
    seeds; only the executed policy differs.  Returns the mean of
    ``1 - unsafe_shielded / unsafe_original`` over seeds, or ``None`` when no
    seed produced a single unsafe baseline replay.
    """
    from .attack import bo_attack
    improvements = []
    for seed in seeds:
        _, _, rec_orig = bo_attack(env, sp.original, spec, box, base_traj,
                                   acq_cfg, seed=seed, stride=stride)
        _, _, rec_sp = bo_attack(env, sp, spec, box, base_traj,
                                 acq_cfg, seed=seed, stride=stride)
        base_unsafe = sum(r.unsafe for r in rec_orig)
        sp_unsafe = sum(r.unsafe for r in rec_sp)
        if base_unsafe == 0:
            continue
        improvements.append(1.0 - sp_unsafe / base_unsafe)
    if not improvements:
        return None
    return float(np.mean(improvements))


def perturbed_starts(base_traj: Trajectory, box: PerturbationBox, n: int,
                     rng) -> np.ndarray:
    """n starts drawn uniformly from the perturbation boxes along a trajectory."""
    starts = np.empty((n, base_traj.states.shape[1]))
    for i in range(n):
        k = int(rng.integers(0, len(base_traj.states)))
        offsets = rng.uniform(-box.radii, box.radii)
        starts[i] = perturb(base_traj.states[k], box, offsets)
    return starts


@dataclass
class SweepRow:
    C: float
    defense_rate: float
    mean_perf_return: float
    intervention_count: int


def intervention_sweep(env: EnvModel, spec: SafetySpec, sp: ShieldedPolicy,
                       crange: CRange, adversarial_set,
                       base_traj: Trajectory, box: PerturbationBox,
                       n_perf: int = 200, max_defense_starts: int = None,
                       seed=0) -> list:
    """Defense and performance across the 10 sampled approximating constants.

    ``intervention_count`` counts how many adversarial-set states the
    detector would intervene on at each constant; over a fixed probe set the
    count is non-decreasing in C.
    """
    adv = np.asarray(adversarial_set, dtype=float)
    rng = np.random.default_rng(seed)
    starts = perturbed_starts(base_traj, box, n_perf, rng)
    rows = []
    for C in crange.samples:
        sp_c = sp.with_constant(float(C))
        rate = eval_defense(env, spec, sp_c, adv,
                            max_starts=max_defense_starts, seed=seed)
        returns = [rollout(env, sp_c, s0).perf_return for s0 in starts]
        fired = classify_batch(sp_c.detector, adv) if len(adv) else np.zeros(0, bool)
        rows.append(SweepRow(C=float(C), defense_rate=rate,
                             mean_perf_return=float(np.mean(returns)),
                             intervention_count=int(np.sum(fired))))
    return rows
