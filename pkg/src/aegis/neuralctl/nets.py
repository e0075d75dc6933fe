"""Small dense networks with hand-written reverse-mode gradients.

Forward maps are compositions of affine layers and elementwise activations
(``relu``, ``tanh``, ``linear``).  Inputs may be single vectors ``(d,)`` or
batches ``(n, d)``.  The backward pass consumes the cache stored by the most
recent ``forward(..., keep_cache=True)`` call and yields exact gradients of
``sum(output * upstream)`` with respect to every parameter and to the input.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

ACTIVATIONS = ("relu", "tanh", "linear")


class NetError(ValueError):
    pass


def _act(name: str, z: np.ndarray) -> np.ndarray:
    if name == "relu":
        return np.maximum(z, 0.0)
    if name == "tanh":
        return np.tanh(z)
    return z


def _act_grad(name: str, z: np.ndarray, h: np.ndarray) -> np.ndarray:
    # h = activation(z), reused to avoid recomputing tanh
    if name == "relu":
        return (z > 0.0).astype(z.dtype)
    if name == "tanh":
        return 1.0 - h * h
    return np.ones_like(z)


@dataclass
class DenseNet:
    """Fully-connected net; ``weights[i]`` has shape (fan_in, fan_out)."""

    weights: list
    biases: list
    activations: list
    _cache: dict = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if not (len(self.weights) == len(self.biases) == len(self.activations)):
            raise NetError("weights, biases, activations must align")
        for i, (W, b, a) in enumerate(zip(self.weights, self.biases,
                                          self.activations)):
            if a not in ACTIVATIONS:
                raise NetError(f"unknown activation {a!r}")
            if W.ndim != 2 or b.shape != (W.shape[1],):
                raise NetError(f"layer {i}: weight {W.shape} / bias {b.shape}")
            if i > 0 and self.weights[i - 1].shape[1] != W.shape[0]:
                raise NetError(f"layer {i}: shape mismatch with layer {i - 1}")
            if not (np.all(np.isfinite(W)) and np.all(np.isfinite(b))):
                raise NetError(f"layer {i}: non-finite parameters")

    @property
    def input_dim(self) -> int:
        return self.weights[0].shape[0]

    @property
    def output_dim(self) -> int:
        return self.weights[-1].shape[1]

    def parameters(self):
        for W, b in zip(self.weights, self.biases):
            yield W
            yield b

    def copy(self) -> "DenseNet":
        return DenseNet([W.copy() for W in self.weights],
                        [b.copy() for b in self.biases],
                        list(self.activations))


def init_dense(layer_sizes, activations, rng,
               scale: float = 1.0) -> DenseNet:
    """He-style initialization; ``layer_sizes`` includes the input size."""
    if len(layer_sizes) != len(activations) + 1:
        raise NetError("need one activation per layer")
    weights, biases = [], []
    for fan_in, fan_out in zip(layer_sizes[:-1], layer_sizes[1:]):
        std = scale * np.sqrt(2.0 / fan_in)
        weights.append(rng.normal(0.0, std, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return DenseNet(weights, biases, list(activations))


def forward(net: DenseNet, x, keep_cache: bool = False) -> np.ndarray:
    """Evaluate the net on a vector or batch."""
    arr = np.asarray(x, dtype=float)
    single = arr.ndim == 1
    h = arr[None, :] if single else arr
    if h.shape[-1] != net.input_dim:
        raise NetError(f"input has size {h.shape[-1]}, net expects "
                       f"{net.input_dim}")
    inputs, preacts, posts = [h], [], []
    for W, b, a in zip(net.weights, net.biases, net.activations):
        z = h @ W + b
        h = _act(a, z)
        preacts.append(z)
        posts.append(h)
        inputs.append(h)
    if keep_cache:
        net._cache = {"inputs": inputs[:-1], "preacts": preacts,
                      "posts": posts, "single": single}
    return h[0] if single else h


def backward(net: DenseNet, upstream):
    """Gradients of sum(output * upstream) w.r.t. parameters and input.

    Requires a preceding ``forward(net, x, keep_cache=True)``.  Returns
    ``(weight_grads, bias_grads, input_grad)``.
    """
    if net._cache is None:
        raise NetError("no cached forward pass; call forward(..., keep_cache=True)")
    cache = net._cache
    g = np.asarray(upstream, dtype=float)
    if cache["single"]:
        g = g[None, :]
    if g.shape != cache["posts"][-1].shape:
        raise NetError(f"upstream shape {g.shape} does not match output "
                       f"{cache['posts'][-1].shape}")
    weight_grads = [None] * len(net.weights)
    bias_grads = [None] * len(net.biases)
    for i in reversed(range(len(net.weights))):
        z, h = cache["preacts"][i], cache["posts"][i]
        dz = g * _act_grad(net.activations[i], z, h)
        weight_grads[i] = cache["inputs"][i].T @ dz
        bias_grads[i] = dz.sum(axis=0)
        g = dz @ net.weights[i].T
    input_grad = g[0] if cache["single"] else g
    return weight_grads, bias_grads, input_grad


class Adam:
    """Adaptive-moment optimizer over a DenseNet's parameter list."""

    def __init__(self, net: DenseNet, lr: float, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.net = net
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p) for p in net.parameters()]
        self.v = [np.zeros_like(p) for p in net.parameters()]

    def step(self, weight_grads, bias_grads) -> None:
        grads = []
        for gW, gb in zip(weight_grads, bias_grads):
            grads.append(gW)
            grads.append(gb)
        self.t += 1
        b1t = 1.0 - self.beta1 ** self.t
        b2t = 1.0 - self.beta2 ** self.t
        for p, g, m, v in zip(self.net.parameters(), grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.lr * (m / b1t) / (np.sqrt(v / b2t) + self.eps)


def soft_update(target: DenseNet, source: DenseNet, tau: float) -> None:
    """Polyak averaging: target <- (1 - tau) * target + tau * source."""
    for pt, ps in zip(target.parameters(), source.parameters()):
        pt *= 1.0 - tau
        pt += tau * ps
