"""Rademacher complexity: closed-form bound, exact and Monte Carlo
estimators over finite hypothesis tables, and contraction verifiers.

The estimators treat a hypothesis class as a table of precomputed values
``values[h, i, j]`` (function h at sample i, output coordinate j), so the
sign-vector expectation can be enumerated exactly for small n or sampled
otherwise.  Enumeration and sampling both proceed over fixed-size blocks
of sign vectors; Monte Carlo blocks draw from independently spawned seed
children and are reduced in block order, which makes every estimate a
deterministic function of (inputs, seed) regardless of worker count.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .network import Activation, Network, layer_coeff, norm_1_inf

__all__ = [
    "ENUMERATION_LIMIT",
    "FiniteHypothesisTable",
    "RademacherEstimate",
    "ContractionReport",
    "VerificationError",
    "exact_rademacher",
    "monte_carlo_rademacher",
    "rademacher_estimate",
    "symmetrize_with_zero",
    "rademacher_bound",
    "verify_contraction_vector",
    "verify_contraction_layer",
    "load_table",
    "save_table",
]

logger = logging.getLogger(__name__)

# 2^22 sign vectors is the largest exact enumeration we run by default.
ENUMERATION_LIMIT = 22

_MODES = ("signed_sup", "abs_sup_infnorm")
_BLOCK = 1 << 16


class VerificationError(Exception):
    """An inequality check failed; carries the offending report."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


@dataclass(frozen=True)
class FiniteHypothesisTable:
    """Values of a finite function class at fixed samples: shape (H, n, m)."""

    values: np.ndarray
    includes_zero: bool = False

    def __post_init__(self):
        v = np.array(self.values, dtype=float, copy=True)
        if v.ndim == 2:
            v = v[:, :, None]
        if v.ndim != 3 or v.shape[0] < 1 or v.shape[1] < 1 or v.shape[2] < 1:
            raise ValueError(f"expected a (H, n, m) value tensor, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("hypothesis table contains non-finite values")
        v.flags.writeable = False
        object.__setattr__(self, "values", v)
        if self.includes_zero and not np.any(np.all(v == 0.0, axis=(1, 2))):
            raise ValueError("includes_zero is set but no all-zero row exists")

    @property
    def num_functions(self) -> int:
        return self.values.shape[0]

    @property
    def num_samples(self) -> int:
        return self.values.shape[1]

    @property
    def output_dim(self) -> int:
        return self.values.shape[2]


@dataclass(frozen=True)
class RademacherEstimate:
    value: float
    method: str  # exact_enumeration | monte_carlo
    num_sign_draws: int
    std_error: float = 0.0

    def __post_init__(self):
        if self.method not in ("exact_enumeration", "monte_carlo"):
            raise ValueError(f"unknown estimate method: {self.method!r}")
        if self.method == "exact_enumeration" and self.std_error != 0.0:
            raise ValueError("exact enumeration has zero standard error")


def _block_sups(signs: np.ndarray, values: np.ndarray, mode: str) -> np.ndarray:
    """Per-sign-vector suprema (not yet divided by n) for one sign block."""
    if mode == "signed_sup":
        dots = signs @ values[:, :, 0].T  # (B, H)
        return dots.max(axis=1)
    sums = np.tensordot(signs, values, axes=([1], [1]))  # (B, H, m)
    return np.abs(sums).max(axis=2).max(axis=1)


def exact_rademacher(table: FiniteHypothesisTable, mode: str = "signed_sup",
                     enumeration_limit: int = ENUMERATION_LIMIT) -> RademacherEstimate:
    """Exact expectation over all 2^n sign vectors.

    ``signed_sup`` averages sup_h (1/n) sum_i e_i h(x_i) and requires
    scalar-valued functions; ``abs_sup_infnorm`` averages
    sup_h (1/n) ||sum_i e_i h(x_i)||_inf.
    """
    if mode not in _MODES:
        raise ValueError(f"unknown mode: {mode!r}")
    n = table.num_samples
    if n > enumeration_limit:
        raise ValueError(
            f"n={n} exceeds enumeration limit {enumeration_limit}; "
            "use monte_carlo_rademacher"
        )
    if mode == "signed_sup" and table.output_dim != 1:
        raise ValueError("signed_sup requires scalar-valued functions (m=1)")
    total_signs = 1 << n
    bit_cols = np.arange(n)
    total = 0.0
    for start in range(0, total_signs, _BLOCK):
        idx = np.arange(start, min(start + _BLOCK, total_signs), dtype=np.int64)
        signs = (((idx[:, None] >> bit_cols[None, :]) & 1) * 2.0 - 1.0)
        total += float(_block_sups(signs, table.values, mode).sum())
    return RademacherEstimate(total / total_signs / n, "exact_enumeration", total_signs)


def monte_carlo_rademacher(table: FiniteHypothesisTable, mode: str, draws: int,
                           seed: int, workers: int = 1) -> RademacherEstimate:
    """Sample mean over independent uniform sign vectors.

    Deterministic given (table, mode, draws, seed): blocks use spawned seed
    children and partial sums are reduced in block order, so the result is
    byte-identical for any worker count.
    """
    if mode not in _MODES:
        raise ValueError(f"unknown mode: {mode!r}")
    if draws < 1:
        raise ValueError(f"draws must be positive: {draws}")
    if mode == "signed_sup" and table.output_dim != 1:
        raise ValueError("signed_sup requires scalar-valued functions (m=1)")
    n = table.num_samples
    n_blocks = (draws + _BLOCK - 1) // _BLOCK
    children = np.random.SeedSequence(seed).spawn(n_blocks)

    def one_block(b: int) -> tuple[float, float]:
        count = min(_BLOCK, draws - b * _BLOCK)
        rng = np.random.default_rng(children[b])
        signs = rng.integers(0, 2, size=(count, n)).astype(float) * 2.0 - 1.0
        sups = _block_sups(signs, table.values, mode) / n
        return float(sups.sum()), float((sups * sups).sum())

    if workers > 1 and n_blocks > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            partials = list(pool.map(one_block, range(n_blocks)))
    else:
        partials = [one_block(b) for b in range(n_blocks)]
    total = 0.0
    total_sq = 0.0
    for s, sq in partials:
        total += s
        total_sq += sq
    mean = total / draws
    if draws > 1:
        var = max(0.0, (total_sq - draws * mean * mean) / (draws - 1))
        std_error = math.sqrt(var / draws)
    else:
        std_error = 0.0
    return RademacherEstimate(mean, "monte_carlo", draws, std_error)


def rademacher_estimate(table: FiniteHypothesisTable, mode: str = "signed_sup",
                        draws: int = 100_000, seed: int = 0, workers: int = 1,
                        enumeration_limit: int = ENUMERATION_LIMIT) -> RademacherEstimate:
    """Exact enumeration when 2^n is affordable, Monte Carlo otherwise."""
    if table.num_samples <= enumeration_limit:
        return exact_rademacher(table, mode, enumeration_limit)
    logger.info(
        "n=%d exceeds enumeration limit %d; falling back to Monte Carlo with %d draws",
        table.num_samples, enumeration_limit, draws,
    )
    return monte_carlo_rademacher(table, mode, draws, seed, workers)


def symmetrize_with_zero(table: FiniteHypothesisTable) -> FiniteHypothesisTable:
    """Close the class under negation and add the zero function.

    Exact duplicate rows are dropped (first occurrence kept), so a class
    that is already symmetric and contains zero maps to itself.
    """
    v = table.values
    stacked = np.concatenate([v, -v, np.zeros((1,) + v.shape[1:])], axis=0)
    seen = set()
    keep = []
    for i, row in enumerate(stacked):
        key = row.tobytes()
        if key not in seen:
            seen.add(key)
            keep.append(i)
    return FiniteHypothesisTable(stacked[keep], includes_zero=True)


def rademacher_bound(net: Network, n: int, sigma0_at_zero: float = 0.0) -> float:
    """Closed-form Rademacher complexity bound from the per-layer coefficients.

    ``sigma0_at_zero`` is the value-at-zero charged to the input embedding
    in the depth sum; the embedding is affine, so the default is 0 and its
    contribution is carried entirely by the sqrt((d+1)/n) term.
    """
    if n < 1:
        raise ValueError(f"sample count must be positive: {n}")
    L = net.depth
    alphas = [layer_coeff(net, i) for i in range(1, L + 2)]
    prod_all = 1.0
    for a in alphas[:L]:
        prod_all *= a
    first = (2.0 ** L) * math.sqrt((net.input_dim + 1) / n) * prod_all
    acc = 0.0
    for l in range(L + 1):
        at_zero = sigma0_at_zero if l == L else net.activations[L - l - 1].value_at_zero
        tail = 1.0
        for j in range(L - l + 1, L + 2):
            tail *= alphas[j - 1]
        acc += (2.0 ** l) * abs(at_zero) * tail
    return first + (2.0 / math.sqrt(n)) * acc


@dataclass(frozen=True)
class ContractionReport:
    lhs: float
    rhs: float
    slack: float
    n: int
    num_functions: int
    output_dim: int
    family: str  # vector | layer
    map_name: str
    lipschitz: float
    value_at_zero: float
    instance_seed: int | None = None

    @property
    def holds(self) -> bool:
        return self.lhs <= self.rhs * (1 + 1e-12) + 1e-15

    def to_dict(self) -> dict:
        return {
            "lhs": self.lhs,
            "rhs": self.rhs,
            "slack": self.slack,
            "n": self.n,
            "num_functions": self.num_functions,
            "output_dim": self.output_dim,
            "family": self.family,
            "map_name": self.map_name,
            "lipschitz": self.lipschitz,
            "value_at_zero": self.value_at_zero,
            "instance_seed": self.instance_seed,
            "holds": self.holds,
        }


def _apply_scalar_map(fn: Callable, values: np.ndarray) -> np.ndarray:
    out = np.asarray(fn(values), dtype=float)
    if out.shape != values.shape:
        out = np.vectorize(fn, otypes=[float])(values)
    return out


def _spot_check_lipschitz(fn: Callable, mu: float, scale: float,
                          trials: int, seed: int) -> None:
    # declared constants are enforced, never inferred: 1e-9 relative slack
    rng = np.random.default_rng(seed)
    x = rng.uniform(-scale, scale, size=trials)
    y = rng.uniform(-scale, scale, size=trials)
    fx = _apply_scalar_map(fn, x)
    fy = _apply_scalar_map(fn, y)
    bad = np.abs(fx - fy) > mu * np.abs(x - y) * (1 + 1e-9) + 1e-12
    if np.any(bad):
        i = int(np.argmax(bad))
        raise ValueError(
            f"map violates declared Lipschitz constant {mu}: "
            f"|f({x[i]}) - f({y[i]})| = {abs(fx[i] - fy[i])} > {mu * abs(x[i] - y[i])}"
        )


def verify_contraction_vector(table: FiniteHypothesisTable, fn: Callable,
                              lipschitz: float, map_name: str = "psi",
                              lipschitz_trials: int = 10_000, seed: int = 0,
                              check: bool = True,
                              instance_seed: int | None = None) -> ContractionReport:
    """Exactly enumerate both sides of the coordinatewise-map contraction
    inequality for vector-valued classes and report (lhs, rhs, slack).

    lhs = (1/n) E_e[ sup_h || sum_i e_i psi(h(x_i)) ||_inf ]
    rhs = 2*mu * (1/n) E_e[ sup_h || sum_i e_i h(x_i) ||_inf ] + 2|psi(0)|/sqrt(n)

    Requires the zero function in the class (a hypothesis of the
    inequality) and spot-checks the declared Lipschitz constant.
    """
    if not np.any(np.all(table.values == 0.0, axis=(1, 2))):
        raise ValueError("the class must contain the zero function")
    scale = max(1.0, float(np.abs(table.values).max()))
    _spot_check_lipschitz(fn, lipschitz, scale, lipschitz_trials, seed)
    psi0 = float(np.asarray(fn(0.0), dtype=float).reshape(()))
    n = table.num_samples
    mapped = FiniteHypothesisTable(_apply_scalar_map(fn, table.values))
    lhs = exact_rademacher(mapped, "abs_sup_infnorm").value
    base = exact_rademacher(table, "abs_sup_infnorm").value
    rhs = 2.0 * lipschitz * base + 2.0 * abs(psi0) / math.sqrt(n)
    report = ContractionReport(lhs, rhs, rhs - lhs, n, table.num_functions,
                               table.output_dim, "vector", map_name,
                               lipschitz, psi0, instance_seed)
    if check and not report.holds:
        raise VerificationError(f"contraction inequality violated: {report.to_dict()}", report)
    return report


def verify_contraction_layer(weight_class: Sequence[np.ndarray],
                             table: FiniteHypothesisTable, act: Activation,
                             norm_cap: float, check: bool = True,
                             instance_seed: int | None = None) -> ContractionReport:
    """Exactly enumerate both sides of the layer contraction inequality:
    composing the class with ``W.T @ act(.)`` over a column-L1-capped
    matrix family.

    lhs = E_e[ sup_{W,f} || (1/n) sum_i e_i W.T act(f(x_i)) ||_inf ]
    rhs = 2*cap*beta * (1/n) E_e[ sup_f || sum_i e_i f(x_i) ||_inf ]
          + 2*cap*|act(0)|/sqrt(n)
    """
    if not np.any(np.all(table.values == 0.0, axis=(1, 2))):
        raise ValueError("the class must contain the zero function")
    weights = [np.asarray(w, dtype=float) for w in weight_class]
    if not weights:
        raise ValueError("weight class is empty")
    q = table.output_dim
    for w in weights:
        if w.ndim != 2 or w.shape[0] != q:
            raise ValueError(f"weight matrices must have {q} rows, got {w.shape}")
        if norm_1_inf(w) > norm_cap + 1e-12:
            raise ValueError(
                f"matrix with column-L1 norm {norm_1_inf(w)} exceeds cap {norm_cap}"
            )
    n = table.num_samples
    activated = _apply_scalar_map(act.fn, table.values)  # (G, n, q)
    composed = np.concatenate(
        [np.einsum("gnq,qr->gnr", activated, w) for w in weights], axis=0
    )
    lhs = exact_rademacher(FiniteHypothesisTable(composed), "abs_sup_infnorm").value
    base = exact_rademacher(table, "abs_sup_infnorm").value
    rhs = 2.0 * norm_cap * act.lipschitz * base \
        + 2.0 * norm_cap * abs(act.value_at_zero) / math.sqrt(n)
    report = ContractionReport(lhs, rhs, rhs - lhs, n, table.num_functions,
                               table.output_dim, "layer", act.kind,
                               act.lipschitz, act.value_at_zero, instance_seed)
    if check and not report.holds:
        raise VerificationError(f"layer contraction violated: {report.to_dict()}", report)
    return report


def save_table(table: FiniteHypothesisTable, path) -> None:
    """CSV with one row per function; columns are sample-major (i*m + j)."""
    H, n, m = table.values.shape
    flat = table.values.reshape(H, n * m)
    header = f"functions={H} samples={n} coords={m} zero={int(table.includes_zero)}"
    np.savetxt(path, flat, delimiter=",", header=header, fmt="%.17g")


def load_table(path) -> FiniteHypothesisTable:
    with open(path) as fh:
        first = fh.readline()
    if not first.startswith("#"):
        raise ValueError("table CSV must start with a '# functions=.. samples=.. coords=..' header")
    meta = dict(part.split("=") for part in first[1:].split())
    n, m = int(meta["samples"]), int(meta["coords"])
    flat = np.atleast_2d(np.loadtxt(path, delimiter=",", ndmin=2))
    if flat.shape[1] != n * m:
        raise ValueError(f"expected {n * m} columns, got {flat.shape[1]}")
    values = flat.reshape(flat.shape[0], n, m)
    return FiniteHypothesisTable(values, includes_zero=bool(int(meta.get("zero", "0"))))
