"""Finite-state Markov chain analysis.

Everything works in the stationary-weighted L2 inner product, where every
operator of interest is a plain matrix: the contraction factor is the
operator norm of Q minus the rank-one averaging operator, the spectral
gap comes from the eigenvalues of Q, mixing times from brute-force
powering of Q against the total-variation distance, and the bounded-
difference constant from the mixing-time profile.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "AnalysisError",
    "Chain",
    "ChainAnalysis",
    "make_chain",
    "stationary_distribution",
    "spectral_gap",
    "total_variation",
    "mixing_time",
    "mcdiarmid_constant",
    "initial_distribution_stats",
    "sample_trajectory",
    "sample_trajectories",
    "mse_bound",
    "analyze_chain",
    "load_chain",
    "save_chain",
]

DEFAULT_T_MAX = 10 ** 6
# inf over epsilon in [0,1) approximated on a 20-point grid; 0 stands for
# "exact stationarity" and is evaluated at the smallest usable tolerance
DEFAULT_EPSILON_GRID = tuple(0.05 * k for k in range(20))
_EPSILON_FLOOR = 1e-12

_ROW_SUM_TOL = 1e-12
_STATIONARY_TOL = 1e-10
_REVERSIBLE_TOL = 1e-10
_EIG_ONE_TOL = 1e-9


class AnalysisError(ValueError):
    """Chain fails a structural requirement (reducibility, divergence, ...)."""


def _validate_transition(q) -> np.ndarray:
    q = np.array(q, dtype=float, copy=True)
    if q.ndim != 2 or q.shape[0] != q.shape[1] or q.shape[0] < 2:
        raise ValueError(f"transition matrix must be square with >= 2 states, got {q.shape}")
    if not np.all(np.isfinite(q)):
        raise ValueError("transition matrix has non-finite entries")
    if np.any(q < 0):
        raise ValueError("transition matrix has negative entries")
    bad = np.abs(q.sum(axis=1) - 1.0) > _ROW_SUM_TOL
    if np.any(bad):
        rows = np.flatnonzero(bad).tolist()
        raise ValueError(f"rows {rows} do not sum to 1")
    return q


def _reachable_from(adj: np.ndarray, start: int) -> np.ndarray:
    seen = np.zeros(adj.shape[0], dtype=bool)
    seen[start] = True
    frontier = [start]
    while frontier:
        nxt = np.flatnonzero(adj[frontier].any(axis=0) & ~seen)
        seen[nxt] = True
        frontier = nxt.tolist()
    return seen


def _check_irreducible(q: np.ndarray) -> None:
    adj = q > 0.0
    fwd = _reachable_from(adj, 0)
    if not fwd.all():
        block = np.flatnonzero(~fwd).tolist()
        raise AnalysisError(f"chain is reducible: states {block} unreachable from state 0")
    bwd = _reachable_from(adj.T, 0)
    if not bwd.all():
        block = np.flatnonzero(~bwd).tolist()
        raise AnalysisError(f"chain is reducible: states {block} cannot reach state 0")


def stationary_distribution(q) -> np.ndarray:
    """Unique positive left fixed point of an irreducible row-stochastic matrix."""
    q = _validate_transition(q)
    _check_irreducible(q)
    s = q.shape[0]
    a = np.vstack([q.T - np.eye(s), np.ones(s)])
    b = np.zeros(s + 1)
    b[-1] = 1.0
    pi, *_ = np.linalg.lstsq(a, b, rcond=None)
    residual = float(np.abs(pi @ q - pi).max())
    if residual > _STATIONARY_TOL:
        raise AnalysisError(f"stationary solve residual {residual} exceeds {_STATIONARY_TOL}")
    if np.any(pi <= 0):
        raise AnalysisError("stationary distribution has non-positive entries")
    return pi / pi.sum()


def _readonly(a) -> np.ndarray:
    out = np.array(a, dtype=float, copy=True)
    out.flags.writeable = False
    return out


@dataclass(frozen=True)
class Chain:
    """Row-stochastic transition matrix with initial and stationary laws."""

    transition: np.ndarray
    initial: np.ndarray
    stationary: np.ndarray
    reversible: bool

    @property
    def num_states(self) -> int:
        return self.transition.shape[0]


def make_chain(transition, initial=None) -> Chain:
    """Validate and analyze the basic structure; ``initial`` defaults to the
    stationary distribution."""
    q = _validate_transition(transition)
    pi = stationary_distribution(q)
    if initial is None:
        nu = pi.copy()
    else:
        nu = np.array(initial, dtype=float, copy=True)
        if nu.shape != (q.shape[0],):
            raise ValueError(f"initial distribution must have length {q.shape[0]}")
        if np.any(nu < 0) or abs(nu.sum() - 1.0) > _ROW_SUM_TOL:
            raise ValueError("initial distribution must be a probability vector")
    balance = pi[:, None] * q - pi[None, :] * q.T
    reversible = bool(np.abs(balance).max() <= _REVERSIBLE_TOL)
    return Chain(_readonly(q), _readonly(nu), _readonly(pi), reversible)


def spectral_gap(chain: Chain) -> tuple[float, float]:
    """(contraction factor, absolute spectral gap).

    The contraction factor is the stationary-weighted L2 operator norm of
    Q minus the averaging operator, computed as the top singular value of
    the similarity-transformed matrix.  The gap is 1 minus the second
    largest eigenvalue modulus when eigenvalue 1 is simple, else 0.
    """
    q, pi = chain.transition, chain.stationary
    avg = np.tile(pi, (chain.num_states, 1))
    root = np.sqrt(pi)
    sym = root[:, None] * (q - avg) / root[None, :]
    lam = float(np.linalg.svd(sym, compute_uv=False)[0])
    lam = min(max(lam, 0.0), 1.0)
    eig = np.linalg.eigvals(q)
    near_one = np.abs(eig - 1.0) < _EIG_ONE_TOL
    if near_one.sum() != 1:
        gap = 0.0
    else:
        rest = np.abs(eig[~near_one])
        second = float(rest.max()) if rest.size else 0.0
        gap = min(max(1.0 - second, 0.0), 1.0)
    return lam, gap


def total_variation(mu, pi) -> float:
    return 0.5 * float(np.abs(np.asarray(mu, float) - np.asarray(pi, float)).sum())


def _worst_tv(power: np.ndarray, pi: np.ndarray) -> float:
    return 0.5 * float(np.abs(power - pi[None, :]).sum(axis=1).max())


def mixing_time(chain: Chain, epsilon: float = 0.25, t_max: int = DEFAULT_T_MAX) -> int:
    """Smallest t with worst-case total-variation distance of Q^t below epsilon."""
    if not 0 < epsilon < 1:
        raise ValueError(f"epsilon must lie in (0,1): {epsilon}")
    q, pi = chain.transition, chain.stationary
    power = q.copy()
    for t in range(1, t_max + 1):
        if _worst_tv(power, pi) <= epsilon:
            return t
        power = power @ q
    raise AnalysisError(
        f"distance {_worst_tv(power, pi)} still above {epsilon} after t_max={t_max} steps"
    )


def mcdiarmid_constant(chain: Chain, epsilon_grid=None, t_max: int = DEFAULT_T_MAX) -> float:
    """Grid minimum of t_mix(eps) * ((2-eps)/(1-eps))^2 over eps in [0,1).

    The grid approximates an infimum from above, so refining the grid can
    only tighten the constant.  The grid point 0 is evaluated at the
    smallest usable tolerance.
    """
    grid = DEFAULT_EPSILON_GRID if epsilon_grid is None else tuple(epsilon_grid)
    if not grid:
        raise ValueError("epsilon grid is empty")
    if any(not 0 <= e < 1 for e in grid):
        raise ValueError("epsilon grid points must lie in [0, 1)")
    effective = [max(e, _EPSILON_FLOOR) for e in grid]
    target = min(effective)
    # one powering pass gives the whole distance profile
    q, pi = chain.transition, chain.stationary
    profile = []
    power = q.copy()
    for _ in range(t_max):
        profile.append(_worst_tv(power, pi))
        if profile[-1] <= target:
            break
        power = power @ q
    else:
        raise AnalysisError(
            f"distance {profile[-1]} still above {target} after t_max={t_max} steps"
        )
    dist = np.array(profile)
    best = math.inf
    for e, ee in zip(grid, effective):
        t_mix = int(np.argmax(dist <= ee)) + 1
        best = min(best, t_mix * ((2.0 - e) / (1.0 - e)) ** 2)
    return best


def initial_distribution_stats(chain: Chain, weighted: bool = True) -> tuple[float, float]:
    """(max density ratio of initial vs stationary, L2 norm of the ratio - 1).

    The norm is stationary-weighted by default; ``weighted=False`` gives
    the plain Euclidean norm of the ratio deviations.
    """
    ratio = chain.initial / chain.stationary
    c = float(ratio.max())
    dev = ratio - 1.0
    if weighted:
        chi = math.sqrt(float(np.sum(chain.stationary * dev * dev)))
    else:
        chi = math.sqrt(float(np.sum(dev * dev)))
    return c, chi


def sample_trajectory(chain: Chain, n: int, seed: int) -> np.ndarray:
    """Length-n state sequence: first state from the initial law, then Q."""
    if n < 1:
        raise ValueError(f"trajectory length must be positive: {n}")
    rng = np.random.default_rng(seed)
    cum_q = np.cumsum(chain.transition, axis=1)
    cum_nu = np.cumsum(chain.initial)
    u = rng.random(n)
    s = chain.num_states
    out = np.empty(n, dtype=np.int64)
    out[0] = min(int(np.searchsorted(cum_nu, u[0], side="right")), s - 1)
    for t in range(1, n):
        out[t] = min(int(np.searchsorted(cum_q[out[t - 1]], u[t], side="right")), s - 1)
    return out


def sample_trajectories(chain: Chain, n: int, trials: int, seed: int) -> np.ndarray:
    """(trials, n) array of independent trajectories, vectorized over trials."""
    if n < 1 or trials < 1:
        raise ValueError("trajectory length and trial count must be positive")
    rng = np.random.default_rng(seed)
    cum_q = np.cumsum(chain.transition, axis=1)
    cum_nu = np.cumsum(chain.initial)
    s = chain.num_states
    u = rng.random((trials, n))
    out = np.empty((trials, n), dtype=np.int64)
    out[:, 0] = np.minimum(np.searchsorted(cum_nu, u[:, 0], side="right"), s - 1)
    for t in range(1, n):
        rows = cum_q[out[:, t - 1]]  # (trials, S)
        out[:, t] = np.minimum((rows <= u[:, t, None]).sum(axis=1), s - 1)
    return out


def mse_bound(chain: Chain, n: int, n0: int, m_f: float) -> float:
    """Upper bound on the mean squared deviation of a trajectory average of
    a function bounded by ``m_f`` from its stationary expectation, after a
    burn-in of ``n0`` steps."""
    if n < 1:
        raise ValueError(f"sample count must be positive: {n}")
    if n0 < 0:
        raise ValueError(f"burn-in must be nonnegative: {n0}")
    if not m_f > 0:
        raise ValueError(f"function bound must be positive: {m_f}")
    lam, _ = spectral_gap(chain)
    if lam >= 1.0 - 1e-12:
        raise ValueError("contraction factor is 1; the bound is infinite")
    _, chi = initial_distribution_stats(chain)
    first = 2.0 * m_f / (n * (1.0 - lam))
    second = 64.0 * m_f ** 2 / (n ** 2 * (1.0 - lam) ** 2) * lam ** n0 * chi
    return first + second


@dataclass(frozen=True)
class ChainAnalysis:
    contraction_factor: float     # L2 operator norm of Q minus averaging
    spectral_gap: float           # 1 - second largest eigenvalue modulus
    mixing_time: int              # at the conventional 1/4 threshold
    mcdiarmid_constant: float
    density_ratio_max: float
    chi_norm: float               # stationary-weighted, used in the bounds
    chi_norm_unweighted: float
    min_stationary_prob: float

    def to_dict(self) -> dict:
        return {
            "contraction_factor": self.contraction_factor,
            "spectral_gap": self.spectral_gap,
            "mixing_time": self.mixing_time,
            "mcdiarmid_constant": self.mcdiarmid_constant,
            "density_ratio_max": self.density_ratio_max,
            "chi_norm": self.chi_norm,
            "chi_norm_unweighted": self.chi_norm_unweighted,
            "min_stationary_prob": self.min_stationary_prob,
        }


def analyze_chain(chain: Chain, epsilon_grid=None, t_max: int = DEFAULT_T_MAX) -> ChainAnalysis:
    """Full analysis record; cross-checks the eigenvalue identity and the
    mixing-time sandwich on reversible chains."""
    lam, gap = spectral_gap(chain)
    eig = np.linalg.eigvals(chain.transition)
    simple_top = int((np.abs(eig - 1.0) < _EIG_ONE_TOL).sum()) == 1
    if chain.reversible and simple_top and abs(lam - (1.0 - gap)) > 1e-10:
        raise AnalysisError(
            f"contraction factor {lam} and 1 - gap {1.0 - gap} disagree beyond 1e-10"
        )
    t_mix = mixing_time(chain, 0.25, t_max)
    tau = mcdiarmid_constant(chain, epsilon_grid, t_max)
    c, chi_w = initial_distribution_stats(chain, weighted=True)
    _, chi_u = initial_distribution_stats(chain, weighted=False)
    pi_star = float(chain.stationary.min())
    if chain.reversible and simple_top and gap > 0:
        lower = (1.0 / gap - 1.0) * math.log(2.0)
        upper = math.log(4.0 / pi_star) / gap
        if t_mix < lower - 1e-9 or t_mix > upper + 1e-9:
            raise AnalysisError(
                f"mixing time {t_mix} violates the sandwich [{lower}, {upper}]"
            )
    return ChainAnalysis(lam, gap, t_mix, tau, c, chi_w, chi_u, pi_star)


def load_chain(path) -> Chain:
    with open(path) as fh:
        doc = json.load(fh)
    unknown = set(doc) - {"transition", "initial"}
    if unknown:
        raise ValueError(f"unknown chain keys: {sorted(unknown)}")
    return make_chain(doc["transition"], doc.get("initial"))


def save_chain(chain: Chain, path) -> None:
    doc = {
        "transition": chain.transition.tolist(),
        "initial": chain.initial.tolist(),
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")
