"""Opaque state-to-action policies and checkpoint serialization.

Everything downstream of training (attack, shield, harness) sees only the
``act(state) -> action`` surface; whether a policy is a neural actor, a
linear gain, or a shielded composite is invisible by design.
"""

from __future__ import annotations

import json

import numpy as np

from .nets import DenseNet, forward

CHECKPOINT_FORMAT_VERSION = 1


class PolicyError(ValueError):
    pass


class BlackBoxPolicy:
    """Base class: deterministic act(), known action dimension."""

    name = "policy"
    action_dim = 0

    def act(self, s: np.ndarray) -> np.ndarray:
        raise NotImplementedError


class NeuralPolicy(BlackBoxPolicy):
    """tanh-headed actor network scaled to the actuator range."""

    def __init__(self, net: DenseNet, action_limit: float, name: str = "neural"):
        if net.activations[-1] != "tanh":
            raise PolicyError("actor nets must end in a tanh head")
        self.net = net
        self.action_limit = float(action_limit)
        self.name = name
        self.action_dim = net.output_dim

    def act(self, s: np.ndarray) -> np.ndarray:
        return self.action_limit * forward(self.net, s)

    def act_batch(self, states: np.ndarray) -> np.ndarray:
        return self.action_limit * forward(self.net, states)


class LinearPolicy(BlackBoxPolicy):
    """u = clip(-K (s - set_point), +-limit)."""

    def __init__(self, K: np.ndarray, action_limit: float = np.inf,
                 set_point=None, name: str = "linear"):
        self.K = np.asarray(K, dtype=float)
        if self.K.ndim != 2:
            raise PolicyError(f"gain must be a matrix, got shape {self.K.shape}")
        self.action_limit = float(action_limit)
        self.set_point = (np.zeros(self.K.shape[1]) if set_point is None
                          else np.asarray(set_point, dtype=float))
        if self.set_point.shape != (self.K.shape[1],):
            raise PolicyError("set_point does not match gain columns")
        self.name = name
        self.action_dim = self.K.shape[0]

    def act(self, s: np.ndarray) -> np.ndarray:
        u = -self.K @ (np.asarray(s, dtype=float) - self.set_point)
        return np.clip(u, -self.action_limit, self.action_limit)


class ConstantPolicy(BlackBoxPolicy):
    def __init__(self, action, name: str = "constant"):
        self.action = np.atleast_1d(np.asarray(action, dtype=float))
        self.name = name
        self.action_dim = len(self.action)

    def act(self, s: np.ndarray) -> np.ndarray:
        return self.action.copy()


# ---------------------------------------------------------------------------
# Checkpoints: npz archives with a JSON header, self-describing and versioned
# ---------------------------------------------------------------------------

def save_policy(policy: BlackBoxPolicy, path) -> None:
    if isinstance(policy, NeuralPolicy):
        meta = {
            "format_version": CHECKPOINT_FORMAT_VERSION,
            "kind": "neural",
            "name": policy.name,
            "action_limit": policy.action_limit,
            "activations": list(policy.net.activations),
            "layer_sizes": [policy.net.input_dim]
                           + [W.shape[1] for W in policy.net.weights],
        }
        arrays = {}
        for i, (W, b) in enumerate(zip(policy.net.weights, policy.net.biases)):
            arrays[f"W{i}"] = W
            arrays[f"b{i}"] = b
        np.savez(path, meta=np.frombuffer(json.dumps(meta).encode(), dtype=np.uint8),
                 **arrays)
    elif isinstance(policy, LinearPolicy):
        meta = {
            "format_version": CHECKPOINT_FORMAT_VERSION,
            "kind": "linear",
            "name": policy.name,
            "action_limit": None if np.isinf(policy.action_limit)
                            else policy.action_limit,
        }
        np.savez(path, meta=np.frombuffer(json.dumps(meta).encode(), dtype=np.uint8),
                 K=policy.K, set_point=policy.set_point)
    else:
        raise PolicyError(f"cannot serialize policy of type {type(policy).__name__}")


def load_policy(path) -> BlackBoxPolicy:
    with np.load(path) as data:
        meta = json.loads(bytes(data["meta"]).decode())
        if meta["format_version"] != CHECKPOINT_FORMAT_VERSION:
            raise PolicyError(
                f"unsupported checkpoint format {meta['format_version']}")
        if meta["kind"] == "neural":
            n_layers = len(meta["activations"])
            net = DenseNet([data[f"W{i}"] for i in range(n_layers)],
                           [data[f"b{i}"] for i in range(n_layers)],
                           list(meta["activations"]))
            return NeuralPolicy(net, meta["action_limit"], name=meta["name"])
        if meta["kind"] == "linear":
            limit = meta["action_limit"]
            return LinearPolicy(data["K"],
                                np.inf if limit is None else limit,
                                set_point=data["set_point"],
                                name=meta["name"])
        raise PolicyError(f"unknown checkpoint kind {meta['kind']!r}")
