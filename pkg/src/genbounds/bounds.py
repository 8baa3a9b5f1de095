"""PAC generalization bounds with per-term decomposition and grid infimum.

Both bounds share the same four-term structure per margin threshold
gamma: empirical margin risk, a complexity term scaled by 2M(2M-1)/gamma,
a log-log term from the dyadic union over thresholds, and a confidence
term in log(2/delta).  The Markov variant scales the last two terms by
the square root of the chain's bounded-difference constant and adds one
gamma-independent convergence term after the infimum.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .complexity import RademacherEstimate
from .margins import MarginModel
from .markov import ChainAnalysis
from .network import Network, coeff_product, layer_coeff

__all__ = [
    "DEFAULT_GAMMA_GRID",
    "BoundReport",
    "empirical_margin_risk",
    "iid_pac_bound",
    "markov_pac_bound",
]

# dyadic thresholds 1, 1/2, ..., 2^-10
DEFAULT_GAMMA_GRID = tuple(2.0 ** -k for k in range(11))


@dataclass(frozen=True)
class BoundReport:
    gamma_grid: tuple[float, ...]
    # per gamma: (risk, complexity, loglog, confidence, markov extra or 0)
    per_gamma_terms: tuple[tuple[float, float, float, float, float], ...]
    best_gamma: float
    bound_value: float
    inputs_digest: dict

    def per_gamma_totals(self) -> tuple[float, ...]:
        """Clamped four-term sums; the grid infimum runs over these."""
        return tuple(min(1.0, r + c + l + t) for r, c, l, t, _ in self.per_gamma_terms)

    def to_dict(self) -> dict:
        rows = [
            {
                "gamma": g,
                "empirical_margin_risk": r,
                "complexity_term": c,
                "loglog_term": l,
                "confidence_term": t,
                "markov_extra_term": e,
                "total": total,
            }
            for g, (r, c, l, t, e), total in zip(
                self.gamma_grid, self.per_gamma_terms, self.per_gamma_totals()
            )
        ]
        return {
            "bound_value": self.bound_value,
            "best_gamma": self.best_gamma,
            "per_gamma": rows,
            "inputs_digest": dict(self.inputs_digest),
        }


def empirical_margin_risk(margins, gamma: float) -> float:
    """Fraction of margins at or below the threshold gamma."""
    if not gamma > 0:
        raise ValueError(f"gamma must be positive: {gamma}")
    m = np.asarray(margins, dtype=float)
    if m.size == 0:
        raise ValueError("empty margin list")
    return float(np.count_nonzero(m <= gamma)) / m.size


def _rademacher_value(rademacher) -> tuple[float, str]:
    if isinstance(rademacher, RademacherEstimate):
        return rademacher.value, rademacher.method
    return float(rademacher), "closed_form"


def _validate_grid(gamma_grid) -> tuple[float, ...]:
    grid = DEFAULT_GAMMA_GRID if gamma_grid is None else tuple(float(g) for g in gamma_grid)
    if not grid:
        raise ValueError("gamma grid is empty")
    if any(not 0 < g <= 1 for g in grid):
        raise ValueError(f"gamma grid must lie in (0, 1]: {grid}")
    return grid


def _assemble(margins, net: Network, model: MarginModel, delta: float,
              gamma_grid, rademacher, tau: float, extra: float,
              conservative_constants: bool, digest_extra: dict,
              inputs_in_unit_box) -> BoundReport:
    margins = np.asarray(margins, dtype=float)
    n = margins.size
    if n < 2:
        raise ValueError(f"need at least two margins, got {n}")
    if not 0 < delta <= 1:
        raise ValueError(f"delta must lie in (0, 1]: {delta}")
    grid = _validate_grid(gamma_grid)
    r_value, r_method = _rademacher_value(rademacher)
    if r_value < 0:
        raise ValueError(f"negative complexity value: {r_value}")
    big_m = model.label_bound
    transfer = model.transfer_constant * (2.0 if conservative_constants else 1.0)
    prod_alpha = coeff_product(net)
    terms = []
    for gamma in grid:
        risk = empirical_margin_risk(margins, gamma)
        comp = (2.0 * big_m * (2.0 * big_m - 1.0) / gamma) * r_value
        clamp = min(1.0, (transfer / gamma) * prod_alpha)
        loglog = clamp * math.sqrt(tau * math.log(math.log2(2.0 / gamma)) / n)
        conf = clamp * math.sqrt(tau * math.log(2.0 / delta) / (2.0 * n))
        terms.append((risk, comp, loglog, conf, extra))
    totals = [min(1.0, r + c + l + t) for r, c, l, t, _ in terms]
    best_idx = int(np.argmin(totals))
    bound_value = min(1.0, totals[best_idx] + extra)
    digest = {
        "n": n,
        "depth": net.depth,
        "layer_coeffs": [layer_coeff(net, i) for i in range(1, net.depth + 1)],
        "prod_alpha": prod_alpha,
        "transfer_constant": transfer,
        "conservative_constants": conservative_constants,
        "label_bound": big_m,
        "delta": delta,
        "rademacher_value": r_value,
        "rademacher_method": r_method,
        "inputs_in_unit_box": inputs_in_unit_box,
    }
    digest.update(digest_extra)
    return BoundReport(grid, tuple(terms), grid[best_idx], bound_value, digest)


def iid_pac_bound(margins, net: Network, margin_model: MarginModel, delta: float,
                  gamma_grid=None, rademacher=None, *,
                  conservative_constants: bool = False,
                  inputs_in_unit_box=None) -> BoundReport:
    """Probability-(1-delta) upper bound on the misclassification risk for
    i.i.d. data, minimized over the gamma grid.

    ``rademacher`` is the complexity value plugged into the bound: either
    an empirical estimate for the negation-closed class or the closed-form
    value from ``rademacher_bound`` (which upper-bounds it).
    """
    if rademacher is None:
        raise ValueError("a rademacher value or estimate is required")
    return _assemble(margins, net, margin_model, delta, gamma_grid, rademacher,
                     tau=1.0, extra=0.0,
                     conservative_constants=conservative_constants,
                     digest_extra={}, inputs_in_unit_box=inputs_in_unit_box)


def markov_pac_bound(margins, net: Network, margin_model: MarginModel, delta: float,
                     gamma_grid=None, rademacher=None,
                     analysis: ChainAnalysis = None, m_f: float = 1.0, *,
                     conservative_constants: bool = False,
                     include_convergence_term: bool = True,
                     inputs_in_unit_box=None) -> BoundReport:
    """Markov-data analogue of ``iid_pac_bound``: the log-log and
    confidence terms carry the chain's bounded-difference constant, and a
    gamma-independent stationarity-convergence term is added after the
    grid infimum (with zero burn-in).

    ``include_convergence_term=False`` drops the extra term; that exists
    for structural regression against the i.i.d. assembly, not as a
    statement about the data.
    """
    if rademacher is None:
        raise ValueError("a rademacher value or estimate is required")
    if analysis is None:
        raise ValueError("a chain analysis is required")
    lam = analysis.contraction_factor
    if lam >= 1.0 - 1e-12:
        raise ValueError("contraction factor is 1; the bound is infinite")
    n = np.asarray(margins, dtype=float).size
    if include_convergence_term:
        extra = math.sqrt(
            2.0 * m_f / (n * (1.0 - lam))
            + 64.0 * m_f ** 2 / (n ** 2 * (1.0 - lam) ** 2) * analysis.chi_norm
        )
    else:
        extra = 0.0
    digest_extra = {
        "mcdiarmid_constant": analysis.mcdiarmid_constant,
        "contraction_factor": lam,
        "chi_norm": analysis.chi_norm,
        "m_f": m_f,
        "include_convergence_term": include_convergence_term,
    }
    return _assemble(margins, net, margin_model, delta, gamma_grid, rademacher,
                     tau=analysis.mcdiarmid_constant, extra=extra,
                     conservative_constants=conservative_constants,
                     digest_extra=digest_extra, inputs_in_unit_box=inputs_in_unit_box)
