"""Wasserstein regularisation ``T_eps = S_eps o T o S_eps``.

``S_eps g(x) = max_y g(y) - d(x, y) / eps`` is the (1/eps)-Lipschitz upper
regularisation; on the primal side it adds ``W1 / eps`` penalties on both
ends, so ``T_eps <= T`` and ``T_eps`` increases as ``eps`` decreases.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .ergodic import mane_min_mean_cycle
from .operators import CompositeOperator, CostOperator, minplus
from .space import ValidationError
from .transfer import PropertyViolation, Transfer, cost_transfer

MONOTONE_TOL = 1e-9


def default_ladder(k: int = 10) -> list:
    """``1, 1/2, ..., 2^-k``."""
    return [2.0 ** -j for j in range(k + 1)]


def smoother(d, epsilon: float) -> CostOperator:
    if not epsilon > 0:
        raise ValidationError("epsilon must be positive")
    return CostOperator(np.asarray(d, dtype=float) / epsilon)


@dataclass(frozen=True, eq=False)
class RegularizedTransfer:
    base: Transfer
    epsilon: float
    smoother: CostOperator
    transfer: Transfer

    @property
    def operator(self):
        return self.transfer.operator

    @property
    def cost(self):
        return self.transfer.cost

    def __call__(self, mu, nu) -> float:
        return self.transfer(mu, nu)


def regularize(T: Transfer, epsilon: float) -> RegularizedTransfer:
    """Operator ``S_eps o T o S_eps``; the convolved cost is materialised when
    ``T`` has a cost table."""
    if T.source.n != T.target.n:
        raise ValidationError("regularisation needs a transfer on one space")
    d = T.source.require_metric()
    S = smoother(d, epsilon)
    if T.cost is not None:
        C = minplus(minplus(S.cost, T.cost), S.cost)
        reg = cost_transfer(C, T.source, T.target, kind="regularized",
                            params={"epsilon": epsilon})
        reg = Transfer(CompositeOperator([S, T.operator, S]), reg.source, reg.target,
                       kind="regularized", cost=reg.cost, forward=reg.forward,
                       weak_cost=reg.weak_cost, symmetric=reg.symmetric,
                       params={"epsilon": epsilon}, children=(T,))
    else:
        reg = Transfer(CompositeOperator([S, T.operator, S]), T.source, T.target,
                       kind="regularized", params={"epsilon": epsilon}, children=(T,))
    return RegularizedTransfer(T, float(epsilon), S, reg)


def c_epsilon_curve(T: Transfer, eps: Optional[Sequence[float]] = None) -> list:
    """Mane constants ``c(T_eps)`` along a ladder, checked nondecreasing as
    ``eps`` decreases and bounded by ``c(T)``."""
    if T.cost is None:
        raise ValidationError("the curve needs a cost representation")
    ladder = sorted(default_ladder() if eps is None else eps, reverse=True)
    c_T = float(mane_min_mean_cycle(T.cost))
    out = [mane_min_mean_cycle(regularize(T, e).cost) for e in ladder]
    vals = [float(v) for v in out]
    if any(b < a - MONOTONE_TOL for a, b in zip(vals, vals[1:])):
        raise PropertyViolation("c(T_eps) decreased as eps decreased")
    if any(v > c_T + MONOTONE_TOL for v in vals):
        raise PropertyViolation("c(T_eps) exceeds c(T)")
    return out


def lipschitz_defect(g, d, epsilon: float) -> float:
    """``max (S g(x) - S g(y) - d(x, y) / eps)``; nonpositive up to rounding."""
    d = np.asarray(d, dtype=float)
    Sg = smoother(d, epsilon)(g)
    return float(np.max(Sg[:, None] - Sg[None, :] - d / epsilon))
