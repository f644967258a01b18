"""Small fully-connected networks with exact backprop.

Layer ``j`` computes ``z_j = f_j(W_j @ z_{j-1} + b_j)`` where ``W_j`` has
shape ``(fan_out, fan_in)``. Inputs may be a single vector or a batch of
row vectors; gradients are averaged over the batch.

Activations are named by strings: ``"sigmoid"``, ``"relu"``, ``"linear"``,
``"softmax"`` (output layer only) and ``"afu_sigmoid:K"``, a K-segment
piecewise-linear sigmoid like the one in a hardware activation unit.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

MSE = "mse"
CROSS_ENTROPY = "cross_entropy"
LOSSES = (MSE, CROSS_ENTROPY)

AFU_RANGE = 8.0


# ---------------------------------------------------------------------------
# Activations
# ---------------------------------------------------------------------------

def sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * np.asarray(x, dtype=np.float64)))


def _afu_knots(segments: int):
    if segments < 2:
        raise ValueError("afu_sigmoid needs at least 2 segments")
    knots = np.linspace(-AFU_RANGE, AFU_RANGE, segments + 1)
    # Build from the positive half so that f(-x) = 1 - f(x) holds exactly.
    values = sigmoid(np.abs(knots))
    values[knots < 0] = 1.0 - values[knots < 0]
    values[0], values[-1] = 0.0, 1.0
    return knots, values


def afu_sigmoid(x, segments: int = 16):
    """Piecewise-linear logistic on uniform knots over [-8, 8]."""
    knots, values = _afu_knots(segments)
    out = np.interp(x, knots, values)
    return out if np.ndim(x) else float(out)


def _afu_slope(x, segments: int):
    knots, values = _afu_knots(segments)
    slopes = np.diff(values) / np.diff(knots)
    idx = np.clip(np.searchsorted(knots, x, side="right") - 1, 0, segments - 1)
    inside = (x >= knots[0]) & (x < knots[-1])
    return np.where(inside, slopes[idx], 0.0)


def softmax(z):
    z = np.asarray(z, dtype=np.float64)
    e = np.exp(z - z.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def _parse(kind: str):
    name, _, arg = kind.partition(":")
    if name == "afu_sigmoid":
        return name, int(arg) if arg else 16
    if name in ("sigmoid", "relu", "linear", "softmax") and not arg:
        return name, None
    raise ValueError(f"unknown activation {kind!r}")


def activate(kind: str, a):
    name, seg = _parse(kind)
    if name == "sigmoid":
        return sigmoid(a)
    if name == "relu":
        return np.maximum(a, 0.0)
    if name == "linear":
        return a
    if name == "softmax":
        return softmax(a)
    return afu_sigmoid(a, seg)


def activation_grad(kind: str, a, z):
    """Elementwise f'(a) given pre-activation ``a`` and output ``z``."""
    name, seg = _parse(kind)
    if name == "sigmoid":
        return z * (1.0 - z)
    if name == "relu":
        return (a > 0).astype(np.float64)
    if name == "linear":
        return np.ones_like(a)
    if name == "afu_sigmoid":
        return _afu_slope(a, seg)
    raise ValueError("softmax is only differentiated through the cross-entropy loss")


# ---------------------------------------------------------------------------
# Network
# ---------------------------------------------------------------------------

@dataclass
class Mlp:
    weights: list
    biases: list
    activations: list

    def __post_init__(self):
        if not (len(self.weights) == len(self.biases) == len(self.activations)):
            raise ValueError("weights, biases and activations must have one entry per layer")
        for j, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.ndim != 2 or b.shape != (w.shape[0],):
                raise ValueError(f"layer {j}: bias shape {b.shape} does not match weights {w.shape}")
            if j and w.shape[1] != self.weights[j - 1].shape[0]:
                raise ValueError(f"layer {j}: fan-in {w.shape[1]} != previous width "
                                 f"{self.weights[j - 1].shape[0]}")
        for kind in self.activations[:-1]:
            if _parse(kind)[0] == "softmax":
                raise ValueError("softmax is only allowed on the output layer")
        for kind in self.activations:
            _parse(kind)

    @property
    def topology(self) -> list[int]:
        return [self.weights[0].shape[1]] + [w.shape[0] for w in self.weights]

    @property
    def n_weights(self) -> int:
        return sum(w.size for w in self.weights)

    @property
    def n_params(self) -> int:
        return self.n_weights + sum(b.size for b in self.biases)

    def copy(self) -> "Mlp":
        return Mlp([w.copy() for w in self.weights], [b.copy() for b in self.biases],
                   list(self.activations))

    def with_weights(self, weights) -> "Mlp":
        return Mlp([np.array(w, dtype=np.float64) for w in weights],
                   [b.copy() for b in self.biases], list(self.activations))

    def __eq__(self, other):
        if not isinstance(other, Mlp):
            return NotImplemented
        return (self.activations == other.activations
                and len(self.weights) == len(other.weights)
                and all(np.array_equal(a, b) for a, b in zip(self.weights, other.weights))
                and all(np.array_equal(a, b) for a, b in zip(self.biases, other.biases)))


def init_mlp(topology, hidden: str = "sigmoid", output: str = "sigmoid",
             seed=0) -> Mlp:
    """Glorot-uniform weights, zero biases."""
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    if len(topology) < 2:
        raise ValueError("topology needs at least an input and an output width")
    weights, biases, acts = [], [], []
    for j, (fan_in, fan_out) in enumerate(zip(topology[:-1], topology[1:])):
        r = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-r, r, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
        acts.append(output if j == len(topology) - 2 else hidden)
    return Mlp(weights, biases, acts)


@dataclass
class Cache:
    inputs: list = field(default_factory=list)   # z_{j-1} per layer, 2-D
    pre: list = field(default_factory=list)      # a_j
    outputs: list = field(default_factory=list)  # z_j
    single: bool = False


@dataclass
class Gradients:
    weights: list
    biases: list


def forward(net: Mlp, x, weights=None, biases=None):
    """Return ``(output, cache)``.

    ``weights`` / ``biases`` substitute for the network's own parameters,
    which is how a masked, quantized view of the weights is evaluated.
    """
    weights = net.weights if weights is None else weights
    biases = net.biases if biases is None else biases
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    z = x[None, :] if single else x
    if z.shape[1] != weights[0].shape[1]:
        raise ValueError(f"input width {z.shape[1]} != network fan-in {weights[0].shape[1]}")
    cache = Cache(single=single)
    for w, b, kind in zip(weights, biases, net.activations):
        a = z @ w.T + b
        cache.inputs.append(z)
        cache.pre.append(a)
        z = activate(kind, a)
        cache.outputs.append(z)
    return (z[0] if single else z), cache


def predict(net: Mlp, x, weights=None, biases=None):
    return forward(net, x, weights, biases)[0]


def _check_loss(net: Mlp, loss: str):
    if loss not in LOSSES:
        raise ValueError(f"unknown loss {loss!r}")
    out_is_softmax = _parse(net.activations[-1])[0] == "softmax"
    if loss == CROSS_ENTROPY and not out_is_softmax:
        raise ValueError("cross-entropy requires a softmax output layer")
    if loss == MSE and out_is_softmax:
        raise ValueError("softmax output is only supported with cross-entropy")


def loss_value(net: Mlp, x, target, loss: str = MSE, weights=None,
               biases=None) -> float:
    """Batch-mean loss: ``0.5*||y - t||^2`` or ``-sum t*log(y)``."""
    _check_loss(net, loss)
    y, _ = forward(net, x, weights, biases)
    y = np.atleast_2d(y)
    t = np.atleast_2d(np.asarray(target, dtype=np.float64))
    if loss == MSE:
        return float(0.5 * np.sum((y - t) ** 2) / y.shape[0])
    return float(-np.sum(t * np.log(np.maximum(y, 1e-300))) / y.shape[0])


def backward(net: Mlp, cache: Cache, target, loss: str = MSE, weights=None) -> Gradients:
    _check_loss(net, loss)
    weights = net.weights if weights is None else weights
    y = cache.outputs[-1]
    t = np.asarray(target, dtype=np.float64)
    t = t[None, :] if t.ndim == 1 else t
    if t.shape != y.shape:
        raise ValueError(f"target shape {t.shape} != output shape {y.shape}")
    n = y.shape[0]
    if loss == CROSS_ENTROPY:
        delta = (y - t) / n
    else:
        delta = (y - t) * activation_grad(net.activations[-1], cache.pre[-1], y) / n
    gw = [None] * len(weights)
    gb = [None] * len(weights)
    for j in range(len(weights) - 1, -1, -1):
        gw[j] = delta.T @ cache.inputs[j]
        gb[j] = delta.sum(axis=0)
        if j:
            delta = (delta @ weights[j]) * activation_grad(
                net.activations[j - 1], cache.pre[j - 1], cache.outputs[j - 1])
    return Gradients(gw, gb)


def sgd_step(net: Mlp, grads: Gradients, alpha: float) -> Mlp:
    if not alpha > 0:
        raise ValueError("step size must be positive")
    return Mlp([w - alpha * g for w, g in zip(net.weights, grads.weights)],
               [b - alpha * g for b, g in zip(net.biases, grads.biases)],
               list(net.activations))


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------

def to_dict(net: Mlp) -> dict:
    return {
        "format": "mlp-checkpoint/1",
        "topology": net.topology,
        "activations": list(net.activations),
        "weights": [w.tolist() for w in net.weights],
        "biases": [b.tolist() for b in net.biases],
    }


def from_dict(d: dict) -> Mlp:
    if d.get("format") != "mlp-checkpoint/1":
        raise ValueError("not an MLP checkpoint")
    net = Mlp([np.array(w, dtype=np.float64).reshape(o, i) for w, i, o in
               zip(d["weights"], d["topology"][:-1], d["topology"][1:])],
              [np.array(b, dtype=np.float64) for b in d["biases"]],
              list(d["activations"]))
    if net.topology != list(d["topology"]):
        raise ValueError("checkpoint topology does not match its weights")
    return net


def save_checkpoint(net: Mlp, path) -> None:
    # json writes floats with repr(), which round-trips exactly
    Path(path).write_text(json.dumps(to_dict(net), indent=1) + "\n")


def load_checkpoint(path) -> Mlp:
    return from_dict(json.loads(Path(path).read_text()))
