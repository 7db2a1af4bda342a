"""Transport-entropy inequalities on finite spaces.

The inequality ``F(s1, s2) <= l1 KL(s1 || mu) + l2 KL(s2 || nu)`` for all
probability pairs ``(s1, s2)`` has the dual (Maurey-type) form

    (int e^{-F^- g / l1} dmu)^l1 (int e^{g / l2} dnu)^l2 <= 1   for all g,

with ``F^- g(x) = max_y g(y) - F(x, y)``.  Both sides are scanned on grids:
simplex grids for the primal, potential grids (plus a local refinement of
the incumbent) for the dual.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.optimize import minimize
from scipy.special import logsumexp

from .duality import primal_ot, simplex_grid
from .entropy import LogEntropy
from .operators import KantorovichOperator
from .space import FiniteSpace, Measure, ValidationError
from .transfer import Transfer, UnsupportedRepresentation, cost_transfer

GRID_BUDGET = 200_000


class GridBudgetExceeded(RuntimeError):
    pass


def _instance_range(C) -> float:
    fin = np.asarray(C, dtype=float)
    fin = fin[np.isfinite(fin)]
    return max(float(np.ptp(fin)) if fin.size else 0.0, 1.0)


def potential_grid(dim: int, M: float, steps: int = 10) -> np.ndarray:
    """Potentials pinned at ``g[0] = 0`` with the other entries on
    ``{-M, ..., M}`` in steps ``M / steps``."""
    axis = np.linspace(-M, M, 2 * steps + 1)
    count = len(axis) ** max(dim - 1, 0)
    if count > GRID_BUDGET:
        raise GridBudgetExceeded(f"{count} potentials exceeds the budget {GRID_BUDGET}")
    rest = np.array(list(itertools.product(axis, repeat=dim - 1))).reshape(-1, dim - 1)
    return np.hstack([np.zeros((len(rest), 1)), rest])


def _log_integral(values, weights) -> float:
    with np.errstate(divide="ignore"):
        return float(logsumexp(values, b=weights))


def _grid_then_refine(obj, dim, M, maximize: bool):
    """Best grid point of ``obj`` followed by a Nelder-Mead polish in the
    free coordinates; returns ``(value, argument)``."""
    sign = -1.0 if maximize else 1.0
    G = potential_grid(dim, M)
    vals = np.array([sign * obj(g) for g in G])
    k = int(np.argmin(vals))           # lowest index wins ties
    best_v, best_g = vals[k], G[k]
    if dim > 1:
        res = minimize(lambda z: sign * obj(np.concatenate([[0.0], z])), best_g[1:],
                       method="Nelder-Mead",
                       options={"xatol": 1e-10, "fatol": 1e-13, "maxiter": 4000})
        if np.isfinite(res.fun) and res.fun < best_v:
            best_v, best_g = float(res.fun), np.concatenate([[0.0], res.x])
    return sign * float(best_v), best_g


def entropic_conv_dual(E: LogEntropy, F: Transfer, mu: Measure, nu: Measure):
    """``inf_f { log int K e^{F^- f} dmu - int f dnu }``.

    This is ``-(E * F)(mu, nu) = -inf_s [E(mu, s) + F(s, nu)]``; for the
    identity ``F`` it equals ``-KL(nu || mu K)``.  Returns the value and the
    minimising potential (pinned at its first entry).
    """
    op = F.operator
    if op.n_out != E.target.n or op.n_in != nu.space.n:
        raise ValidationError("spaces of E and F do not chain")
    w = mu.weights @ E.kernel
    C = F.cost if F.cost is not None else np.zeros((1, 1))
    M = 3.0 * _instance_range(C[np.isfinite(C)] if np.isfinite(C).any() else [0.0])

    def obj(f):
        return _log_integral(op.apply(f), w) - nu.integrate(f)

    return _grid_then_refine(obj, op.n_in, M, maximize=False)


def entropic_conv_primal_grid(E: LogEntropy, F: Transfer, mu: Measure, nu: Measure,
                              step: float = 1e-2) -> float:
    """Oracle: ``-min_s [KL(s || mu K) + F(s, nu)]`` on a simplex grid."""
    if F.cost is None:
        raise UnsupportedRepresentation("the grid oracle needs a cost table")
    ref = E.reference(mu)
    best = np.inf
    for s in simplex_grid(E.target.n, step):
        sig = Measure(E.target, s)
        from .space import kl_divergence

        k = kl_divergence(sig, ref)
        if not np.isfinite(k):
            continue
        best = min(best, k + F(sig, nu))
    return -best


@dataclass
class InequalitySpec:
    """``F(s1, s2) <= l1 E1(s1, mu) + l2 E2(s2, nu)``.

    ``T1``/``T2`` are optional forward operators composed with the entropies
    in the dual check (identity when omitted).
    """

    F: Transfer
    mu: Measure
    nu: Measure
    lam1: float
    lam2: float
    T1: Optional[KantorovichOperator] = None
    T2: Optional[KantorovichOperator] = None
    sigma_step: float = 1e-2
    name: str = ""

    def __post_init__(self):
        if not (self.lam1 > 0 and self.lam2 > 0):
            raise ValidationError("weights must be positive")
        if (self.F.source.n, self.F.target.n) != (self.mu.space.n, self.nu.space.n):
            raise ValidationError("F must act between the spaces of mu and nu")


@dataclass
class DualReport:
    passes: bool
    worst_log_product: float
    worst_product: float
    witness: np.ndarray
    tol: float = 1e-9

    def to_json(self) -> dict:
        return {"passes": self.passes, "worst_log_product": self.worst_log_product,
                "worst_product": self.worst_product, "witness": self.witness.tolist(),
                "tol": self.tol}


def log_product(spec: InequalitySpec, g) -> float:
    g = np.asarray(g, dtype=float)
    h1 = spec.F.operator.apply(g) / spec.lam1
    if spec.T1 is not None:
        h1 = spec.T1.apply(h1)
    h2 = -g / spec.lam2
    if spec.T2 is not None:
        h2 = spec.T2.apply(h2)
    return (spec.lam1 * _log_integral(-h1, spec.mu.weights)
            + spec.lam2 * _log_integral(-h2, spec.nu.weights))


def maurey_dual_check(spec: InequalitySpec, tol: float = 1e-9) -> DualReport:
    """Largest product over the potential grid (plus refinement) and its witness."""
    C = spec.F.cost if spec.F.cost is not None else np.zeros((1, 1))
    M = 3.0 * _instance_range(C)
    worst, g = _grid_then_refine(lambda x: log_product(spec, x), spec.nu.space.n, M,
                                 maximize=True)
    return DualReport(bool(worst <= tol), float(worst), float(np.exp(worst)), g, tol)


@dataclass
class PrimalReport:
    passes: bool
    max_violation: float
    witness: tuple
    pairs: int
    tol: float = 1e-9

    def to_json(self) -> dict:
        return {"passes": self.passes, "max_violation": self.max_violation,
                "witness": [w.tolist() for w in self.witness], "pairs": self.pairs,
                "tol": self.tol}


def _kl_rows(S, ref) -> np.ndarray:
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(S > 0, S * np.log(S / ref[None, :]), 0.0)
    return terms.sum(axis=1)


def _two_point_costs(C, S1, S2) -> np.ndarray:
    """Optimal cost for every pair of 2-point measures (closed form)."""
    p = S1[:, 0][:, None]
    q = S2[:, 0][None, :]
    lo = np.maximum(0.0, p + q - 1.0)
    hi = np.minimum(p, q)
    slope = C[0, 0] - C[0, 1] - C[1, 0] + C[1, 1]
    a = np.where(slope >= 0, lo, hi)
    return a * slope + p * C[0, 1] + q * C[1, 0] + (1.0 - p - q) * C[1, 1]


def transport_cost_table(C, S1, S2) -> np.ndarray:
    C = np.asarray(C, dtype=float)
    if C.shape == (2, 2) and np.all(np.isfinite(C)):
        return _two_point_costs(C, S1, S2)
    if len(S1) * len(S2) > GRID_BUDGET:
        raise GridBudgetExceeded("too many measure pairs for the LP scan")
    X, Y = FiniteSpace(C.shape[0]), FiniteSpace(C.shape[1])
    out = np.empty((len(S1), len(S2)))
    for i, s1 in enumerate(S1):
        for j, s2 in enumerate(S2):
            try:
                out[i, j] = primal_ot(C, Measure(X, s1), Measure(Y, s2))[0]
            except Exception:
                out[i, j] = np.inf
    return out


def primal_inequality_scan(spec: InequalitySpec, tol: float = 1e-9) -> PrimalReport:
    """Max of ``F - l1 KL(s1 || mu) - l2 KL(s2 || nu)`` over simplex grids."""
    if spec.T1 is not None or spec.T2 is not None:
        raise UnsupportedRepresentation("the primal scan covers identity T1, T2 only")
    if spec.F.cost is None:
        raise UnsupportedRepresentation("the primal scan needs a cost table")
    S1 = simplex_grid(spec.mu.space.n, spec.sigma_step)
    S2 = simplex_grid(spec.nu.space.n, spec.sigma_step)
    Fv = transport_cost_table(spec.F.cost, S1, S2)
    rhs = spec.lam1 * _kl_rows(S1, spec.mu.weights)[:, None] \
        + spec.lam2 * _kl_rows(S2, spec.nu.weights)[None, :]
    with np.errstate(invalid="ignore"):
        viol = np.where(np.isfinite(rhs), Fv - rhs, -np.inf)
    k = int(np.argmax(viol))
    i, j = np.unravel_index(k, viol.shape)
    worst = float(viol[i, j])
    return PrimalReport(bool(worst <= tol), worst, (S1[i], S2[j]), viol.size, tol)


# ---------------------------------------------------------------------------
# shipped instances
# ---------------------------------------------------------------------------

def pinsker_cost(margin: float = 0.25) -> np.ndarray:
    """Two-point cost ``d - margin``: plain ``d`` grows linearly near the
    reference while KL grows quadratically, so a finite threshold needs the
    offset."""
    return np.array([[0.0, 1.0], [1.0, 0.0]]) - margin


def pinsker_threshold(margin: float = 0.25, step: float = 1e-3) -> float:
    """``sup (F - 0) / (KL(s1||u) + KL(s2||u))`` over a fine grid, ``u`` uniform."""
    C = pinsker_cost(margin)
    S = simplex_grid(2, step)
    u = np.array([0.5, 0.5])
    Fv = _two_point_costs(C, S, S)
    denom = _kl_rows(S, u)[:, None] + _kl_rows(S, u)[None, :]
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where((Fv > 0) & (denom > 0), Fv / denom, 0.0)
    return float(ratio.max())


def shipped_instances() -> list:
    X = FiniteSpace.line([0.0, 1.0])
    u = Measure.uniform(X)
    lam = pinsker_threshold()
    F = cost_transfer(pinsker_cost(), X, X)
    skew = Measure(X, [0.3, 0.7])
    G = cost_transfer(np.array([[0.0, 2.0], [0.5, 0.0]]) - 0.4, X, X)
    return [
        InequalitySpec(F, u, u, 2 * lam, 2 * lam, name="pinsker-pass"),
        InequalitySpec(F, u, u, 0.5 * lam, 0.5 * lam, name="pinsker-fail"),
        InequalitySpec(F, u, u, 1e3, 1e3, name="huge-weights"),
        InequalitySpec(G, skew, u, 1.0, 3.0, name="asymmetric"),
        InequalitySpec(G, skew, u, 0.05, 0.05, name="asymmetric-small"),
    ]
