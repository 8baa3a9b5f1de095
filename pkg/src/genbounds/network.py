"""Feed-forward networks with per-layer Lipschitz metadata.

A network is a chain of layers ``h -> act(W.T @ h)`` applied after the
input embedding ``x -> [x, 1]``.  Each layer carries an activation tag
(Lipschitz constant and value at zero) from which the per-layer
contraction coefficients used by the complexity bounds are derived.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

__all__ = [
    "Activation",
    "Network",
    "activation",
    "custom_activation",
    "norm_1_inf",
    "layer_coeff",
    "coeff_product",
    "embed_input",
    "forward",
    "load_network",
    "save_network",
]


def _relu(x):
    return np.maximum(x, 0.0)


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-np.asarray(x, dtype=float)))


def _identity(x):
    return np.asarray(x, dtype=float)


# kind -> (Lipschitz constant, value at zero, callable)
_BUILTIN = {
    "relu": (1.0, 0.0, _relu),
    "sigmoid": (0.25, 0.5, _sigmoid),
    "tanh": (1.0, 0.0, np.tanh),
    "identity": (1.0, 0.0, _identity),
}


@dataclass(frozen=True)
class Activation:
    """Scalar activation applied coordinatewise.

    ``lipschitz`` is the declared Lipschitz constant; it is never inferred
    from ``fn``.  ``fn`` may be None for custom activations that are only
    used for closed-form bounds, but any empirical evaluation requires it.
    """

    kind: str
    lipschitz: float
    value_at_zero: float
    fn: Callable | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.lipschitz < 0:
            raise ValueError(f"negative Lipschitz constant: {self.lipschitz}")
        if self.kind in _BUILTIN:
            beta, at_zero, _ = _BUILTIN[self.kind]
            if self.lipschitz != beta or self.value_at_zero != at_zero:
                raise ValueError(
                    f"builtin activation {self.kind!r} has fixed constants "
                    f"({beta}, {at_zero})"
                )
        elif self.kind != "custom":
            raise ValueError(f"unknown activation kind: {self.kind!r}")

    def __call__(self, x):
        if self.fn is None:
            raise ValueError(f"activation {self.kind!r} has no callable attached")
        return self.fn(x)


def activation(kind: str) -> Activation:
    """Build one of the builtin activations: relu, sigmoid, tanh, identity."""
    if kind not in _BUILTIN:
        raise ValueError(f"unknown activation kind: {kind!r}")
    beta, at_zero, fn = _BUILTIN[kind]
    return Activation(kind, beta, at_zero, fn)


def custom_activation(fn: Callable | None, lipschitz: float, value_at_zero: float) -> Activation:
    """Declare a custom activation; the Lipschitz constant is taken on trust."""
    return Activation("custom", float(lipschitz), float(value_at_zero), fn)


def _readonly(a) -> np.ndarray:
    out = np.array(a, dtype=float, copy=True)
    out.flags.writeable = False
    return out


@dataclass(frozen=True)
class Network:
    """Layered weight matrices plus activation tags.

    ``dims`` is ``[d_1, ..., d_{L+1}]`` with ``d_1`` the raw input
    dimension.  The first weight matrix consumes the augmented input
    ``[x, 1]`` and therefore has ``d_1 + 1`` rows; matrix ``i`` has shape
    ``(rows_i, dims[i+1])`` and columns are per-neuron weight vectors.

    ``norm_caps``, when given, overrides the computed column-L1 norms in
    the per-layer coefficients so that bounds can be evaluated for a whole
    norm-capped class rather than the single supplied weight setting.
    """

    dims: tuple[int, ...]
    weights: tuple[np.ndarray, ...]
    activations: tuple[Activation, ...]
    norm_caps: tuple[float, ...] | None = None

    def __post_init__(self):
        dims = tuple(int(d) for d in self.dims)
        weights = tuple(_readonly(w) for w in self.weights)
        acts = tuple(self.activations)
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "activations", acts)
        if len(dims) < 2:
            raise ValueError("dims must list input and output dimensions")
        if any(d < 1 for d in dims):
            raise ValueError(f"dims must be positive: {dims}")
        L = len(dims) - 1
        if len(weights) != L or len(acts) != L:
            raise ValueError(
                f"expected {L} weight matrices and activations, "
                f"got {len(weights)} and {len(acts)}"
            )
        for i, w in enumerate(weights):
            rows = dims[0] + 1 if i == 0 else dims[i]
            if w.ndim != 2 or w.shape != (rows, dims[i + 1]):
                raise ValueError(
                    f"layer {i + 1} weights must have shape {(rows, dims[i + 1])}, "
                    f"got {w.shape}"
                )
            if not np.all(np.isfinite(w)):
                raise ValueError(f"layer {i + 1} weights contain non-finite entries")
        if self.norm_caps is not None:
            caps = tuple(float(c) for c in self.norm_caps)
            object.__setattr__(self, "norm_caps", caps)
            if len(caps) != L:
                raise ValueError(f"expected {L} norm caps, got {len(caps)}")
            if any(c < 0 for c in caps):
                raise ValueError("norm caps must be nonnegative")

    @property
    def depth(self) -> int:
        return len(self.weights)

    @property
    def input_dim(self) -> int:
        return self.dims[0]

    @property
    def output_dim(self) -> int:
        return self.dims[-1]


def norm_1_inf(w) -> float:
    """Max over columns of the column's absolute-entry sum."""
    w = np.asarray(w, dtype=float)
    if w.ndim != 2 or w.size == 0:
        raise ValueError(f"expected a non-empty matrix, got shape {np.shape(w)}")
    if not np.all(np.isfinite(w)):
        raise ValueError("matrix contains non-finite entries")
    return float(np.abs(w).sum(axis=0).max())


def layer_coeff(net: Network, layer_index: int) -> float:
    """Per-layer contraction coefficient: Lipschitz constant times the
    column-L1 norm (or the declared norm cap) of the layer's weights.

    Index ``depth + 1`` is the conventional trailing coefficient 1.
    """
    L = net.depth
    if layer_index == L + 1:
        return 1.0
    if not 1 <= layer_index <= L:
        raise ValueError(f"layer index {layer_index} outside 1..{L + 1}")
    if net.norm_caps is not None:
        norm = net.norm_caps[layer_index - 1]
    else:
        norm = norm_1_inf(net.weights[layer_index - 1])
    return net.activations[layer_index - 1].lipschitz * norm


def coeff_product(net: Network) -> float:
    """Product of the per-layer coefficients over all layers."""
    out = 1.0
    for i in range(1, net.depth + 1):
        out *= layer_coeff(net, i)
    return out


def embed_input(x) -> np.ndarray:
    """Input embedding ``x -> [x, 1]`` applied before the first layer."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise ValueError(f"expected a vector, got shape {x.shape}")
    return np.append(x, 1.0)


def forward(net: Network, x) -> np.ndarray:
    """Evaluate the network at ``x``; returns a vector of length dims[-1].

    Inputs are assumed to lie in [0,1]^d; a violation only degrades the
    closed-form bound assumptions, so it warns instead of raising.
    """
    x = np.asarray(x, dtype=float)
    if x.shape != (net.input_dim,):
        raise ValueError(f"expected input of length {net.input_dim}, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise ValueError("input contains non-finite entries")
    if np.any(x < 0.0) or np.any(x > 1.0):
        warnings.warn("input outside [0,1]^d; bound assumptions unmet", stacklevel=2)
    h = embed_input(x)
    for w, act in zip(net.weights, net.activations):
        h = act(w.T @ h)
    return np.asarray(h, dtype=float)


def inputs_in_unit_box(inputs) -> bool:
    """True when every entry of the input matrix lies in [0,1]."""
    a = np.asarray(inputs, dtype=float)
    return bool(np.all(a >= 0.0) and np.all(a <= 1.0))


def _activation_to_json(act: Activation):
    if act.kind == "custom":
        return {
            "kind": "custom",
            "lipschitz": act.lipschitz,
            "value_at_zero": act.value_at_zero,
        }
    return act.kind


def _activation_from_json(obj) -> Activation:
    if isinstance(obj, str):
        return activation(obj)
    if isinstance(obj, dict):
        unknown = set(obj) - {"kind", "lipschitz", "value_at_zero"}
        if unknown:
            raise ValueError(f"unknown activation keys: {sorted(unknown)}")
        if obj.get("kind") != "custom":
            return activation(obj["kind"])
        return custom_activation(None, obj["lipschitz"], obj["value_at_zero"])
    raise ValueError(f"bad activation entry: {obj!r}")


def network_from_dict(doc: dict, base_dir: Path | None = None) -> Network:
    """Build a network from its document form (see ``save_network``)."""
    unknown = set(doc) - {"dims", "activations", "weights", "weights_csv_stem", "norm_caps"}
    if unknown:
        raise ValueError(f"unknown network keys: {sorted(unknown)}")
    dims = doc["dims"]
    acts = tuple(_activation_from_json(a) for a in doc["activations"])
    if "weights" in doc:
        weights = [np.asarray(w, dtype=float) for w in doc["weights"]]
    elif "weights_csv_stem" in doc:
        # one CSV per layer: <stem>.W1.csv, <stem>.W2.csv, ...
        stem = doc["weights_csv_stem"]
        root = base_dir if base_dir is not None else Path.cwd()
        weights = []
        for i in range(1, len(dims)):
            path = root / f"{stem}.W{i}.csv"
            weights.append(np.atleast_2d(np.loadtxt(path, delimiter=",", ndmin=2)))
    else:
        raise ValueError("network document needs 'weights' or 'weights_csv_stem'")
    caps = doc.get("norm_caps")
    return Network(tuple(dims), tuple(weights), acts,
                   None if caps is None else tuple(caps))


def load_network(path) -> Network:
    path = Path(path)
    with open(path) as fh:
        doc = json.load(fh)
    return network_from_dict(doc, base_dir=path.parent)


def save_network(net: Network, path) -> None:
    doc = {
        "dims": list(net.dims),
        "activations": [_activation_to_json(a) for a in net.activations],
        "weights": [w.tolist() for w in net.weights],
    }
    if net.norm_caps is not None:
        doc["norm_caps"] = list(net.norm_caps)
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")
