"""Feedforward ReLU policy networks with a softmax action head.

Networks arrive as JSON documents (see docs in the cli module) and are
immutable after loading; evaluation is pure numpy. Only ReLU hidden
activations are accepted because the bounding machinery assumes them.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


class NetworkError(Exception):
    pass


class SchemaError(NetworkError):
    pass


class DimensionMismatch(NetworkError):
    def __init__(self, layer: int, message: str):
        super().__init__(f"layer {layer}: {message}")
        self.layer = layer


class NonFiniteWeight(NetworkError):
    pass


@dataclass(frozen=True)
class Layer:
    weights: np.ndarray  # (out, in), row-major
    bias: np.ndarray     # (out,)
    activation: str      # "relu" | "linear"


@dataclass(frozen=True)
class Network:
    layers: tuple[Layer, ...]
    input_dim: int
    action_count: int
    probes: tuple[tuple[np.ndarray, np.ndarray], ...] = field(default=())

    @property
    def hidden_sizes(self) -> tuple[int, ...]:
        return tuple(l.weights.shape[0] for l in self.layers[:-1])


def _as_matrix(obj, layer_idx: int) -> np.ndarray:
    try:
        m = np.asarray(obj, dtype=float)
    except (TypeError, ValueError) as exc:
        raise SchemaError(f"layer {layer_idx}: weights are not numeric") from exc
    if m.ndim != 2:
        raise SchemaError(f"layer {layer_idx}: weights must be a 2d array")
    return m


def load_network(path_or_doc) -> Network:
    """Validate and load a network document (path, JSON string, or dict)."""
    if isinstance(path_or_doc, dict):
        doc = path_or_doc
    else:
        text = Path(path_or_doc).read_text() if not str(path_or_doc).lstrip().startswith("{") \
            else str(path_or_doc)
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"invalid JSON: {exc}") from exc

    for key in ("inputs", "actions", "layers"):
        if key not in doc:
            raise SchemaError(f"missing field {key!r}")
    n = int(doc["inputs"])
    k = int(doc["actions"])
    if n < 1:
        raise SchemaError("inputs must be >= 1")
    if k < 2:
        raise SchemaError("actions must be >= 2")
    raw_layers = doc["layers"]
    if not isinstance(raw_layers, list) or not raw_layers:
        raise SchemaError("layers must be a non-empty list")

    layers: list[Layer] = []
    expected_in = n
    for idx, raw in enumerate(raw_layers, start=1):
        if not isinstance(raw, dict) or "weights" not in raw or "activation" not in raw:
            raise SchemaError(f"layer {idx}: needs weights and activation")
        W = _as_matrix(raw["weights"], idx)
        bias = np.asarray(raw.get("bias", np.zeros(W.shape[0])), dtype=float)
        if W.shape[1] != expected_in:
            raise DimensionMismatch(idx, f"expected {expected_in} input columns, got {W.shape[1]}")
        if bias.shape != (W.shape[0],):
            raise DimensionMismatch(idx, f"bias length {bias.shape[0]} != {W.shape[0]} rows")
        if not (np.isfinite(W).all() and np.isfinite(bias).all()):
            raise NonFiniteWeight(f"layer {idx} contains non-finite entries")
        act = raw["activation"]
        if act not in ("relu", "linear"):
            raise SchemaError(f"layer {idx}: unsupported activation {act!r}")
        last = idx == len(raw_layers)
        if last and act != "linear":
            raise SchemaError("final layer activation must be linear")
        if not last and act != "relu":
            raise SchemaError(f"layer {idx}: hidden activations must be relu")
        layers.append(Layer(W, bias, act))
        expected_in = W.shape[0]
    if layers[-1].weights.shape[0] != k:
        raise DimensionMismatch(len(layers), f"final layer has {layers[-1].weights.shape[0]} rows, expected {k} actions")

    probes = []
    for probe in doc.get("probes", []):
        x = np.asarray(probe["input"], dtype=float)
        z = np.asarray(probe["logits"], dtype=float)
        if x.shape != (n,) or z.shape != (k,):
            raise SchemaError("probe dimensions do not match the network")
        probes.append((x, z))
    return Network(tuple(layers), n, k, tuple(probes))


def network_from_arrays(weights: list[np.ndarray], biases: list[np.ndarray]) -> Network:
    """Build a ReLU-hidden/linear-output network directly from arrays."""
    doc = {
        "inputs": int(weights[0].shape[1]),
        "actions": int(weights[-1].shape[0]),
        "layers": [
            {
                "weights": np.asarray(W, dtype=float).tolist(),
                "bias": np.asarray(b, dtype=float).tolist(),
                "activation": "linear" if i == len(weights) - 1 else "relu",
            }
            for i, (W, b) in enumerate(zip(weights, biases))
        ],
    }
    return load_network(doc)


def forward_logits(net: Network, state) -> np.ndarray:
    """Exact forward pass; accepts one state or a batch (m, n)."""
    z = np.asarray(state, dtype=float)
    single = z.ndim == 1
    if single:
        z = z[None, :]
    if z.shape[1] != net.input_dim:
        raise ValueError(f"state dimension {z.shape[1]} != {net.input_dim}")
    for layer in net.layers:
        z = z @ layer.weights.T + layer.bias
        if layer.activation == "relu":
            z = np.maximum(z, 0.0)
    return z[0] if single else z


def softmax(logits: np.ndarray) -> np.ndarray:
    """Row-wise stable softmax."""
    z = np.asarray(logits, dtype=float)
    single = z.ndim == 1
    if single:
        z = z[None, :]
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    out = e / e.sum(axis=1, keepdims=True)
    return out[0] if single else out


def action_distribution(net: Network, state) -> np.ndarray:
    """Softmax action probabilities at one state or a batch."""
    return softmax(forward_logits(net, state))
