"""Small dense networks with hand-written reverse mode and Adam.

Everything is float64.  Inputs may be a single vector ``(in_dim,)`` or a
batch ``(B, in_dim)``; outputs follow the same convention.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DivergenceError

ACTIVATIONS = ("relu", "softmax", "linear")


def softmax(z):
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


@dataclass
class DenseLayer:
    weights: np.ndarray
    bias: np.ndarray | None
    activation: str = "linear"

    def __post_init__(self):
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        self.weights = np.asarray(self.weights, dtype=np.float64)
        if self.bias is not None:
            self.bias = np.asarray(self.bias, dtype=np.float64)
            if self.bias.shape != (self.out_dim,):
                raise ValueError(f"bias shape {self.bias.shape} != ({self.out_dim},)")

    @property
    def in_dim(self):
        return self.weights.shape[1]

    @property
    def out_dim(self):
        return self.weights.shape[0]

    @property
    def n_params(self):
        return self.in_dim * self.out_dim + (self.out_dim if self.bias is not None else 0)

    @classmethod
    def glorot(cls, in_dim, out_dim, rng, activation="linear", bias=True):
        limit = np.sqrt(6.0 / (in_dim + out_dim))
        w = rng.uniform(-limit, limit, size=(out_dim, in_dim))
        return cls(w, np.zeros(out_dim) if bias else None, activation)


@dataclass
class Tape:
    """Activations cached by :func:`forward` for one :func:`backward`."""

    inputs: list
    outputs: list
    squeeze: bool


class Mlp:
    """Feedforward stack of :class:`DenseLayer`."""

    def __init__(self, layers):
        self.layers = list(layers)
        for a, b in zip(self.layers, self.layers[1:]):
            if a.out_dim != b.in_dim:
                raise ValueError(f"layer dims do not chain: {a.out_dim} -> {b.in_dim}")

    @classmethod
    def build(cls, dims, rng, hidden="relu", output="linear", bias=True):
        """``Mlp.build([36, 12, 4], rng, output="softmax")`` and so on."""
        layers = []
        for i, (a, b) in enumerate(zip(dims, dims[1:])):
            act = output if i == len(dims) - 2 else hidden
            layers.append(DenseLayer.glorot(a, b, rng, act, bias))
        return cls(layers)

    @property
    def in_dim(self):
        return self.layers[0].in_dim

    @property
    def out_dim(self):
        return self.layers[-1].out_dim

    @property
    def n_params(self):
        return count_params(self)

    def get_flat(self):
        parts = []
        for layer in self.layers:
            parts.append(layer.weights.ravel())
            if layer.bias is not None:
                parts.append(layer.bias)
        return np.concatenate(parts) if parts else np.zeros(0)

    def set_flat(self, flat):
        flat = np.asarray(flat, dtype=np.float64)
        if flat.size != self.n_params:
            raise ValueError(f"expected {self.n_params} parameters, got {flat.size}")
        pos = 0
        for layer in self.layers:
            n = layer.weights.size
            layer.weights = flat[pos : pos + n].reshape(layer.weights.shape).copy()
            pos += n
            if layer.bias is not None:
                layer.bias = flat[pos : pos + layer.out_dim].copy()
                pos += layer.out_dim

    def forward(self, x):
        return forward(self, x)

    def backward(self, tape, output_grad):
        return backward(self, tape, output_grad)

    def __call__(self, x):
        return forward(self, x)[0]

    def describe(self):
        return {
            "type": "mlp",
            "dims": [self.in_dim] + [layer.out_dim for layer in self.layers],
            "activations": [layer.activation for layer in self.layers],
            "bias": [layer.bias is not None for layer in self.layers],
        }

    @classmethod
    def from_description(cls, desc):
        dims, acts, bias = desc["dims"], desc["activations"], desc["bias"]
        layers = [
            DenseLayer(np.zeros((b, a)), np.zeros(b) if has_b else None, act)
            for a, b, act, has_b in zip(dims, dims[1:], acts, bias)
        ]
        return cls(layers)


def forward(net, x):
    x = np.asarray(x, dtype=np.float64)
    squeeze = x.ndim == 1
    h = x[None, :] if squeeze else x
    if h.shape[1] != net.in_dim:
        raise ValueError(f"input has {h.shape[1]} features, network expects {net.in_dim}")
    inputs, outputs = [], []
    for layer in net.layers:
        inputs.append(h)
        z = h @ layer.weights.T
        if layer.bias is not None:
            z = z + layer.bias
        if layer.activation == "relu":
            h = np.maximum(z, 0.0)
        elif layer.activation == "softmax":
            h = softmax(z)
        else:
            h = z
        outputs.append(h)
    return (h[0] if squeeze else h), Tape(inputs, outputs, squeeze)


def backward(net, tape, output_grad):
    """Reverse pass; returns ``(flat parameter gradient, input gradient)``.

    Parameter gradients are summed over the batch.
    """
    g = np.asarray(output_grad, dtype=np.float64)
    if tape.squeeze:
        g = g[None, :]
    if len(tape.inputs) != len(net.layers) or g.shape != tape.outputs[-1].shape:
        raise ValueError("tape does not match this network / output gradient")
    grads = []
    for layer, h_in, h_out in zip(reversed(net.layers), reversed(tape.inputs), reversed(tape.outputs)):
        if layer.activation == "relu":
            g = g * (h_out > 0)
        elif layer.activation == "softmax":
            g = h_out * (g - (g * h_out).sum(axis=-1, keepdims=True))
        gw = g.T @ h_in
        gb = g.sum(axis=0) if layer.bias is not None else None
        grads.append((gw, gb))
        g = g @ layer.weights
    parts = []
    for gw, gb in reversed(grads):
        parts.append(gw.ravel())
        if gb is not None:
            parts.append(gb)
    return np.concatenate(parts), (g[0] if tape.squeeze else g)


def count_params(net):
    return sum(layer.n_params for layer in net.layers)


@dataclass
class AdamState:
    lr: float
    size: int
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    first_moment: np.ndarray = field(default=None, repr=False)
    second_moment: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        if self.first_moment is None:
            self.first_moment = np.zeros(self.size)
        if self.second_moment is None:
            self.second_moment = np.zeros(self.size)


def adam_step(params, grads, state):
    """One bias-corrected Adam descent step; mutates ``state`` and returns new params."""
    params = np.asarray(params, dtype=np.float64)
    grads = np.asarray(grads, dtype=np.float64)
    if params.shape != grads.shape or params.size != state.size:
        raise ValueError(f"length mismatch: params {params.size}, grads {grads.size}, state {state.size}")
    if not np.all(np.isfinite(grads)):
        raise DivergenceError("non-finite gradient passed to Adam")
    state.step += 1
    state.first_moment = state.beta1 * state.first_moment + (1 - state.beta1) * grads
    state.second_moment = state.beta2 * state.second_moment + (1 - state.beta2) * grads**2
    m_hat = state.first_moment / (1 - state.beta1**state.step)
    v_hat = state.second_moment / (1 - state.beta2**state.step)
    return params - state.lr * m_hat / (np.sqrt(v_hat) + state.eps)


def save_snapshot(path, descriptor, flat):
    """Write ``<path>.json`` (architecture) and ``<path>.bin`` (little-endian f64)."""
    path = Path(path)
    flat = np.asarray(flat, dtype="<f8")
    meta = dict(descriptor, n_values=int(flat.size))
    path.with_suffix(".json").write_text(json.dumps(meta, indent=2, sort_keys=True))
    path.with_suffix(".bin").write_bytes(flat.tobytes())


def load_snapshot(path):
    path = Path(path)
    meta = json.loads(path.with_suffix(".json").read_text())
    flat = np.frombuffer(path.with_suffix(".bin").read_bytes(), dtype="<f8").astype(np.float64)
    if flat.size != meta["n_values"]:
        raise ValueError(f"snapshot holds {flat.size} values, descriptor says {meta['n_values']}")
    return meta, flat
