"""Feed-forward networks: activations, forward evaluation and file parsing."""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum

import numpy as np


class Activation(str, Enum):
    RELU = "relu"
    SIGMOID = "sigmoid"
    TANH = "tanh"
    IDENTITY = "identity"

    @classmethod
    def parse(cls, name: str) -> "Activation":
        try:
            return cls(str(name).lower())
        except ValueError:
            raise ValueError(f"unknown activation {name!r}") from None


def _sigmoid(x):
    x = np.asarray(x, dtype=float)
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def act_eval(act: Activation, x):
    if act is Activation.RELU:
        return np.maximum(x, 0.0)
    if act is Activation.SIGMOID:
        return _sigmoid(x)
    if act is Activation.TANH:
        return np.tanh(x)
    return np.asarray(x, dtype=float) * 1.0


def act_d1(act: Activation, x):
    x = np.asarray(x, dtype=float)
    if act is Activation.RELU:
        return (x > 0).astype(float)
    if act is Activation.SIGMOID:
        s = _sigmoid(x)
        return s * (1 - s)
    if act is Activation.TANH:
        t = np.tanh(x)
        return 1 - t ** 2
    return np.ones_like(x)


def act_d2(act: Activation, x):
    x = np.asarray(x, dtype=float)
    if act is Activation.SIGMOID:
        s = _sigmoid(x)
        return s * (1 - s) * (1 - 2 * s)
    if act is Activation.TANH:
        t = np.tanh(x)
        return -2 * t * (1 - t ** 2)
    return np.zeros_like(x)


# global bound on the first derivative, used by the sampling error bound
DERIVATIVE_BOUND = {Activation.SIGMOID: 0.25, Activation.TANH: 1.0}


@dataclass(frozen=True)
class Layer:
    W: np.ndarray
    b: np.ndarray
    act: Activation

    def __post_init__(self):
        W = np.atleast_2d(np.array(self.W, dtype=float))
        b = np.atleast_1d(np.array(self.b, dtype=float))
        if W.ndim != 2 or b.ndim != 1 or W.shape[0] != b.shape[0]:
            raise ValueError(f"weight shape {W.shape} does not match bias length {b.shape}")
        W.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "W", W)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "act", Activation.parse(self.act))

    @property
    def in_dim(self) -> int:
        return self.W.shape[1]

    @property
    def out_dim(self) -> int:
        return self.W.shape[0]


class Network:
    """Feed-forward network with ``len(layers) - 1`` hidden layers."""

    def __init__(self, layers, input_dim: int | None = None):
        layers = list(layers)
        if not layers:
            raise ValueError("a network needs at least one layer")
        if input_dim is None:
            input_dim = layers[0].in_dim
        if input_dim <= 0:
            raise ValueError("input dimension must be positive")
        width = input_dim
        for i, layer in enumerate(layers):
            if layer.in_dim != width:
                raise ValueError(
                    f"layer {i} expects {layer.in_dim} inputs but receives {width}"
                )
            width = layer.out_dim
        self.layers = tuple(layers)
        self.input_dim = int(input_dim)

    @property
    def output_dim(self) -> int:
        return self.layers[-1].out_dim

    @property
    def hidden_layers(self) -> int:
        return len(self.layers) - 1

    def forward(self, x) -> np.ndarray:
        return forward(self, x)

    def to_dict(self) -> dict:
        return {
            "input_dim": self.input_dim,
            "layers": [
                {"weights": l.W.tolist(), "bias": l.b.tolist(), "activation": l.act.value}
                for l in self.layers
            ],
        }

    def __repr__(self):
        widths = [self.input_dim] + [l.out_dim for l in self.layers]
        acts = ",".join(l.act.value for l in self.layers)
        return f"Network({'-'.join(map(str, widths))}, {acts})"


def forward(net: Network, x) -> np.ndarray:
    """Concrete output for one input vector or an (N, input_dim) batch."""
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != net.input_dim:
        raise ValueError(f"input has length {x.shape[-1]}, network expects {net.input_dim}")
    y = x
    for layer in net.layers:
        y = act_eval(layer.act, y @ layer.W.T + layer.b)
    return y


def layer_inputs(net: Network, x) -> list[np.ndarray]:
    """Pre-activation values of every layer, plus the final output last."""
    y = np.asarray(x, dtype=float)
    pre = []
    for layer in net.layers:
        z = y @ layer.W.T + layer.b
        pre.append(z)
        y = act_eval(layer.act, z)
    pre.append(y)
    return pre


def random_network(widths, activation, rng: np.random.Generator,
                   output_activation="identity", scale: float = 1.0) -> Network:
    """Gaussian weights scaled by 1/sqrt(fan-in)."""
    layers = []
    for i, (a, b) in enumerate(zip(widths[:-1], widths[1:])):
        W = rng.normal(0.0, scale / np.sqrt(a), (b, a))
        bias = rng.normal(0.0, 0.5 * scale, b)
        act = output_activation if i == len(widths) - 2 else activation
        layers.append(Layer(W, bias, act))
    return Network(layers, widths[0])


# ---------------------------------------------------------------------------
# parsing


def parse_json_network(text: str) -> Network:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise ValueError(f"malformed network document: {e}") from None
    return network_from_dict(doc)


def network_from_dict(doc: dict) -> Network:
    if not isinstance(doc, dict) or "layers" not in doc:
        raise ValueError("network document needs a 'layers' list")
    layers = []
    for i, entry in enumerate(doc["layers"]):
        try:
            W, b, act = entry["weights"], entry["bias"], entry.get("activation", "identity")
        except (KeyError, TypeError):
            raise ValueError(f"layer {i} needs 'weights' and 'bias'") from None
        layers.append(Layer(W, b, act))
    return Network(layers, doc.get("input_dim"))


def dump_json_network(net: Network) -> str:
    return json.dumps(net.to_dict())


def _nnet_lines(text: str):
    for raw in text.splitlines():
        line = raw.strip()
        if not line or line.startswith("//"):
            continue
        vals = [v for v in line.replace(",", " ").split()]
        yield [float(v) for v in vals]


def parse_nnet(text: str) -> Network:
    """Parse the ``.nnet`` text format (ACAS Xu style).

    Input normalisation ``(x - mean) / range`` is folded into the first layer
    and output de-normalisation into the last one. Input clipping to the
    stored min/max is not applied.
    """
    lines = _nnet_lines(text)
    try:
        n_layers, n_in, n_out, _ = (int(v) for v in next(lines)[:4])
        sizes = [int(v) for v in next(lines)]
        if len(sizes) < n_layers + 1:
            raise ValueError("layer size line too short")
        sizes = sizes[: n_layers + 1]
        if sizes[0] != n_in or sizes[-1] != n_out:
            raise ValueError("layer sizes disagree with header")
        symmetric = next(lines)
        if symmetric and int(symmetric[0]) != 0:
            raise ValueError("symmetric .nnet normalisation is not supported")
        next(lines)  # input minimums
        next(lines)  # input maximums
        means = np.array(next(lines))
        ranges = np.array(next(lines))
        if means.size < n_in + 1 or ranges.size < n_in + 1:
            raise ValueError("normalisation lines too short")
        layers = []
        for k in range(n_layers):
            rows, cols = sizes[k + 1], sizes[k]
            W = np.array([next(lines) for _ in range(rows)])
            if W.shape != (rows, cols):
                raise ValueError(f"layer {k} weight block has shape {W.shape}")
            b = np.array([next(lines)[0] for _ in range(rows)])
            act = "identity" if k == n_layers - 1 else "relu"
            layers.append([W, b, act])
    except StopIteration:
        raise ValueError("truncated .nnet file") from None

    in_mean, in_range = means[:n_in], ranges[:n_in]
    W0, b0, _ = layers[0]
    layers[0][0] = W0 / in_range[None, :]
    layers[0][1] = b0 - W0 @ (in_mean / in_range)
    out_mean, out_range = means[n_in], ranges[n_in]
    layers[-1][0] = layers[-1][0] * out_range
    layers[-1][1] = layers[-1][1] * out_range + out_mean
    return Network([Layer(*l) for l in layers], n_in)


def load_network(path) -> Network:
    with open(path) as fh:
        text = fh.read()
    if str(path).endswith(".nnet"):
        return parse_nnet(text)
    return parse_json_network(text)
