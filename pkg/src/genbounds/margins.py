"""Margin functions and their sup-norm transfer constants.

Three classifier margins are supported.  Each comes with a constant A
such that a perturbation of the network output moves the margin by at
most A times the sup-norm perturbation, uniformly over labels:

* ``binary``     — m(f, y) = f * y on labels {-1, +1}; A = 1.
* ``squared_ml`` — m(f, y) = (f - y)^2 - max_{y' != y} (f - y')^2,
  valid for |f| <= M and |y| <= M; A = 8M.  Note the inverted sign
  convention: a smaller squared error to the true label makes the margin
  more negative, so "correct" here means the true label is the *worst*
  fit.  The formula is implemented verbatim.
* ``softmax``    — m(f, y) = f[y] - max_{y' != y} f[y']; A = 2.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["MarginModel", "margin", "margin_batch", "margin_cost", "transfer_gap"]

_KINDS = ("binary", "squared_ml", "softmax")


@dataclass(frozen=True)
class MarginModel:
    """Margin kind plus the label bound M from which A is derived."""

    kind: str
    label_bound: float
    labels: tuple[float, ...] | None = None

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"unknown margin kind: {self.kind!r}")
        if not self.label_bound > 0:
            raise ValueError(f"label bound must be positive: {self.label_bound}")
        if self.kind == "binary":
            if self.labels not in (None, (-1.0, 1.0)):
                raise ValueError("binary margin requires labels {-1, +1}")
            object.__setattr__(self, "labels", (-1.0, 1.0))
        elif self.kind == "squared_ml":
            if self.labels is None or len(self.labels) < 2:
                raise ValueError("squared_ml margin needs at least two labels")
            object.__setattr__(self, "labels", tuple(float(y) for y in self.labels))
        elif self.labels is not None:
            raise ValueError("softmax labels are output coordinate indices")

    @property
    def transfer_constant(self) -> float:
        if self.kind == "binary":
            return 1.0
        if self.kind == "squared_ml":
            return 8.0 * self.label_bound
        return 2.0


def _as_scalar(f_out) -> float:
    a = np.asarray(f_out, dtype=float)
    if a.size != 1:
        raise ValueError(f"expected a scalar output, got shape {a.shape}")
    return float(a.reshape(()))


def margin(model: MarginModel, f_out, y) -> float:
    """Margin of one labelled example; positive iff label y wins with margin
    (except squared_ml, whose sign convention is inverted; see module doc)."""
    if model.kind == "binary":
        y = float(y)
        if y not in (-1.0, 1.0):
            raise ValueError(f"binary label must be -1 or +1, got {y}")
        return _as_scalar(f_out) * y
    if model.kind == "squared_ml":
        y = float(y)
        if y not in model.labels:
            raise ValueError(f"label {y} not in {model.labels}")
        f = _as_scalar(f_out)
        others = [yy for yy in model.labels if yy != y]
        return (f - y) ** 2 - max((f - yy) ** 2 for yy in others)
    out = np.asarray(f_out, dtype=float)
    if out.ndim != 1 or out.size < 2:
        raise ValueError(f"softmax output must be a vector of length >= 2, got shape {out.shape}")
    y = int(y)
    if not 0 <= y < out.size:
        raise ValueError(f"label index {y} outside 0..{out.size - 1}")
    rest = np.delete(out, y)
    return float(out[y] - rest.max())


def margin_batch(model: MarginModel, f_out, y) -> np.ndarray:
    """Vectorized ``margin`` over rows of ``f_out`` and entries of ``y``."""
    y = np.asarray(y)
    if model.kind == "binary":
        f = np.asarray(f_out, dtype=float).reshape(-1)
        yy = y.astype(float)
        if f.shape != yy.shape:
            raise ValueError("outputs and labels must have equal length")
        if not np.all(np.isin(yy, (-1.0, 1.0))):
            raise ValueError("binary labels must be -1 or +1")
        return f * yy
    if model.kind == "squared_ml":
        f = np.asarray(f_out, dtype=float).reshape(-1)
        yy = y.astype(float)
        labels = np.asarray(model.labels)
        sq = (f[:, None] - labels[None, :]) ** 2  # (T, |Y|)
        own = (f - yy) ** 2
        masked = np.where(labels[None, :] == yy[:, None], -np.inf, sq)
        return own - masked.max(axis=1)
    f = np.asarray(f_out, dtype=float)
    if f.ndim != 2:
        raise ValueError(f"softmax batch output must be 2-D, got shape {f.shape}")
    idx = y.astype(int)
    own = f[np.arange(f.shape[0]), idx]
    masked = f.copy()
    masked[np.arange(f.shape[0]), idx] = -np.inf
    return own - masked.max(axis=1)


def margin_cost(x, gamma: float):
    """Piecewise-linear margin cost: 1 below 0, 0 above gamma, linear between.

    Non-increasing and exactly (1/gamma)-Lipschitz.
    """
    if not gamma > 0:
        raise ValueError(f"gamma must be positive: {gamma}")
    out = np.clip(1.0 - np.asarray(x, dtype=float) / gamma, 0.0, 1.0)
    return float(out) if np.isscalar(x) or np.ndim(x) == 0 else out


def transfer_gap(model: MarginModel, f_out_a, f_out_b, y) -> tuple[float, float]:
    """(|margin(a,y) - margin(b,y)|, A * ||a - b||_inf) for harness checks."""
    a = np.asarray(f_out_a, dtype=float)
    b = np.asarray(f_out_b, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"output shapes differ: {a.shape} vs {b.shape}")
    lhs = abs(margin(model, a, y) - margin(model, b, y))
    rhs = model.transfer_constant * float(np.max(np.abs(a - b))) if a.size else 0.0
    return lhs, rhs
