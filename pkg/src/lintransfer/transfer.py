"""Linear transfers and the operation calculus on them.

A :class:`Transfer` couples a backward Kantorovich operator with whatever
extra structure is known about it: a cost table (enables exact LP primal
values and the max-plus fast paths), a forward operator, or a weak cost
``c(x, sigma)`` for brute-force primal evaluation.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from itertools import product as iproduct
from typing import Callable, Optional

import numpy as np
from scipy.optimize import minimize_scalar

from .operators import (
    CompositeOperator,
    CostOperator,
    FunctionOperator,
    KantorovichOperator,
    ScaledOperator,
    SumOperator,
    _vec,
    minplus,
)
from .space import FiniteSpace, Measure, ValidationError


class UnsupportedRepresentation(TypeError):
    """The requested operation has no closed form for this representation."""


class PropertyViolation(AssertionError):
    """A structural identity failed; points at a representation bug."""


class ConvergenceError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class Transfer:
    operator: KantorovichOperator
    source: FiniteSpace
    target: FiniteSpace
    kind: str = "generic"
    cost: Optional[np.ndarray] = None
    forward: Optional[KantorovichOperator] = None
    weak_cost: Optional[Callable] = None
    symmetric: bool = False
    params: dict = field(default_factory=dict)
    children: tuple = ()

    def __post_init__(self):
        op = self.operator
        if (op.n_out, op.n_in) != (self.source.n, self.target.n):
            raise ValidationError("operator does not act between source and target")

    @property
    def directions(self) -> tuple:
        return ("backward", "forward") if self.forward is not None else ("backward",)

    def apply(self, f) -> np.ndarray:
        return self.operator(f)

    def primal_value(self, mu: Measure, nu: Measure) -> float:
        """Exact primal value; available for cost tables only."""
        if self.cost is None:
            raise UnsupportedRepresentation("primal value needs a cost table")
        from .duality import primal_ot

        return primal_ot(self.cost, mu, nu)[0]

    def __call__(self, mu: Measure, nu: Measure) -> float:
        """Transfer value: LP for cost tables, dual ascent otherwise."""
        if self.cost is not None:
            from .duality import InfeasibleTransport

            try:
                return self.primal_value(mu, nu)
            except InfeasibleTransport:
                return float("inf")
        from .duality import dual_ascent

        rep = dual_ascent(self, mu, nu)
        return float("inf") if rep.unbounded else rep.value


def cost_transfer(cost, source: Optional[FiniteSpace] = None,
                  target: Optional[FiniteSpace] = None, kind: str = "cost",
                  params: Optional[dict] = None) -> Transfer:
    c = np.array(cost, dtype=float)
    source = source or FiniteSpace(c.shape[0])
    target = target or FiniteSpace(c.shape[1])
    op = CostOperator(c)
    sym = c.shape[0] == c.shape[1] and bool(np.array_equal(c, c.T))
    return Transfer(op, source, target, kind=kind, cost=op.cost,
                    forward=CostOperator(c, "forward"),
                    weak_cost=_linear_weak_cost(op.cost), symmetric=sym,
                    params=params or {})


def _linear_weak_cost(c):
    def weak(x, sigma):
        sigma = np.atleast_2d(sigma)
        row = c[x]
        fin = np.isfinite(row)
        out = sigma[:, fin] @ row[fin]
        bad = (sigma[:, ~fin] > 0).any(axis=1)
        out = np.where(bad, np.inf, out)
        return out
    return weak


def metric_transfer(space: FiniteSpace) -> Transfer:
    return cost_transfer(space.require_metric(), space, space, kind="metric")


def identity_transfer(space: FiniteSpace) -> Transfer:
    c = np.full((space.n, space.n), np.inf)
    np.fill_diagonal(c, 0.0)
    return cost_transfer(c, space, space, kind="identity")


def zero_transfer(source: FiniteSpace, target: FiniteSpace) -> Transfer:
    """The transfer that is 0 everywhere; its operator is ``f -> max f``."""
    return cost_transfer(np.zeros((source.n, target.n)), source, target, kind="zero")


# ---------------------------------------------------------------------------
# operation calculus
# ---------------------------------------------------------------------------

def convolve(t1: Transfer, t2: Transfer) -> Transfer:
    """Inf-convolution ``t1 * t2``; its operator is ``T1 o T2``."""
    if t1.target != t2.source:
        raise ValidationError("middle spaces do not match")
    if t1.cost is not None and t2.cost is not None:
        return cost_transfer(minplus(t1.cost, t2.cost), t1.source, t2.target,
                             kind="cost")
    op = CompositeOperator([t1.operator, t2.operator])
    fwd = None
    if t1.forward is not None and t2.forward is not None:
        fwd = CompositeOperator([t2.forward, t1.forward])
    return Transfer(op, t1.source, t2.target, kind="composite", forward=fwd,
                    children=(t1, t2))


def tensor(t1: Transfer, t2: Transfer) -> Transfer:
    """Tensor product of two cost transfers on the product spaces."""
    if t1.cost is None or t2.cost is None:
        raise UnsupportedRepresentation("tensor product is only defined for cost tables here")
    c1, c2 = t1.cost, t2.cost
    big = c1[:, None, :, None] + c2[None, :, None, :]
    big = big.reshape(c1.shape[0] * c2.shape[0], c1.shape[1] * c2.shape[1])
    return cost_transfer(big, t1.source.product(t2.source), t1.target.product(t2.target))


def scalar_mult(a: float, t: Transfer) -> Transfer:
    if not a > 0:
        raise ValidationError("scalar must be positive")
    if t.cost is not None:
        return cost_transfer(a * t.cost, t.source, t.target, kind=t.kind)
    fwd = ScaledOperator(a, t.forward) if t.forward is not None else None
    return Transfer(ScaledOperator(a, t.operator), t.source, t.target, kind="scaled",
                    forward=fwd, params={"a": a}, children=(t,))


def dual_sum(t1: Transfer, t2: Transfer) -> Transfer:
    """The transfer whose operator is ``T1 + T2`` (defined by its dual formula).

    ``T1 + T2`` moves constants by ``2k``, so on probability measures the dual
    supremum is ``+inf``; the result is useful through its operator.
    """
    if t1.source != t2.source or t1.target != t2.target:
        raise ValidationError("dual sum needs transfers between the same spaces")
    return Transfer(SumOperator(t1.operator, t2.operator), t1.source, t1.target,
                    kind="dual_sum", children=(t1, t2))


def cost_sum(t1: Transfer, t2: Transfer) -> Transfer:
    """Addition of cost transfers (costs add)."""
    if t1.cost is None or t2.cost is None:
        raise UnsupportedRepresentation("general addition needs an inner minimisation; cost tables only")
    return cost_transfer(t1.cost + t2.cost, t1.source, t1.target)


class RecessionOperator(KantorovichOperator):
    """``lim T(lam f) / lam``, by doubling ``lam``."""

    kind = "recession"

    def __init__(self, base: KantorovichOperator, tol: float = 1e-9, max_doublings: int = 60):
        self.base = base
        self.tol = tol
        self.max_doublings = max_doublings
        super().__init__(base.n_out, base.n_in)

    def apply(self, f):
        lam = 1.0
        prev = self.base.apply(f)
        for _ in range(self.max_doublings):
            lam *= 2.0
            cur = self.base.apply(lam * f) / lam
            if np.all(np.abs(cur - prev) < self.tol) or np.array_equal(cur, prev):
                return cur
            prev = cur
        raise ConvergenceError("recession limit did not settle within 2^60")


def recession(t: Transfer, numeric: bool = False) -> KantorovichOperator:
    """Recession operator; closed form ``max{f(y) : c(x, y) < inf}`` for costs."""
    if t.cost is not None and not numeric:
        pattern = np.where(np.isfinite(t.cost), 0.0, np.inf)
        return CostOperator(pattern)
    return RecessionOperator(t.operator)


# --- alpha envelopes -------------------------------------------------------

def _conjugate_numeric(alpha: Callable) -> Callable:
    """Increasing conjugate ``sup_{t >= 0} t s - alpha(t)`` by grid + refinement."""
    ts = np.concatenate([[0.0], np.logspace(-6, 6, 481)])
    vals_alpha = np.array([alpha(t) for t in ts])

    def conj(s):
        vals = s * ts - vals_alpha
        k = int(np.argmax(vals))
        if k == len(ts) - 1:
            return np.inf
        lo = ts[max(k - 1, 0)]
        hi = ts[min(k + 1, len(ts) - 1)]
        res = minimize_scalar(lambda t: -(s * t - alpha(t)), bounds=(lo, hi),
                              method="bounded", options={"xatol": 1e-12})
        return max(vals[k], -res.fun)
    return conj


def _resolve_alpha(alpha, alpha_conj=None):
    if isinstance(alpha, str):
        if alpha == "identity":
            return (lambda t: t), (lambda s: 0.0 if s <= 1.0 else np.inf)
        if alpha == "square":
            return (lambda t: t * t), (lambda s: s * s / 4.0)
        raise ValidationError(f"unknown alpha {alpha!r}")
    if alpha_conj is None:
        alpha_conj = _conjugate_numeric(alpha)
    return alpha, alpha_conj


class AlphaEnvelopeOperator(KantorovichOperator):
    """``f -> inf_{s > 0} s T(f / s) + alpha_conj(s)`` on a refined log grid."""

    kind = "alpha_envelope"

    def __init__(self, base: KantorovichOperator, alpha_conj: Callable,
                 s_range=(1e-6, 1e6), points: int = 241, passes: int = 3):
        self.base = base
        self.alpha_conj = alpha_conj
        self.s_range = s_range
        self.points = points
        self.passes = passes
        super().__init__(base.n_out, base.n_in)

    def _h(self, s, f):
        a = self.alpha_conj(s)
        if not np.isfinite(a):
            return np.full(self.n_out, np.inf)
        return s * self.base.apply(f / s) + a

    def apply(self, f):
        grid = np.exp(np.linspace(np.log(self.s_range[0]), np.log(self.s_range[1]), self.points))
        vals = np.array([self._h(s, f) for s in grid])          # (points, n_out)
        out = vals.min(axis=0)
        for x in range(self.n_out):
            g, v = grid, vals[:, x]
            # s -> s T(f/s) + alpha_conj(s) is convex, so bracket and refine
            for _ in range(self.passes):
                k = int(np.argmin(v))
                lo, hi = g[max(k - 1, 0)], g[min(k + 1, len(g) - 1)]
                g = np.exp(np.linspace(np.log(lo), np.log(hi), 41))
                v = np.array([self._h(s, f)[x] for s in g])
                out[x] = min(out[x], v.min())
            k = int(np.argmin(v))
            lo, hi = g[max(k - 1, 0)], g[min(k + 1, len(g) - 1)]
            if hi > lo and np.isfinite(self._h(lo, f)[x]) and np.isfinite(self._h(hi, f)[x]):
                res = minimize_scalar(lambda s: self._h(s, f)[x], bounds=(lo, hi),
                                      method="bounded", options={"xatol": 1e-14})
                out[x] = min(out[x], float(res.fun))
        return out


def alpha_envelope(t: Transfer, alpha="identity", alpha_conj: Optional[Callable] = None,
                   probes: int = 64) -> KantorovichOperator:
    """Operator of the envelope of ``alpha(T)`` for convex increasing ``alpha``."""
    alpha, conj = _resolve_alpha(alpha, alpha_conj)
    ts = np.linspace(0.0, 10.0, probes)
    vals = np.array([alpha(s) for s in ts])
    if np.any(np.diff(vals) < -1e-12):
        raise ValidationError("alpha is not increasing on the probe grid")
    return AlphaEnvelopeOperator(t.operator, conj)


# --- Kantorovich envelope of an arbitrary map ------------------------------

class EnvelopeOperator(KantorovichOperator):
    """Largest Kantorovich operator below a translation-covariant map ``T``.

    For each point ``x`` the value at ``f`` is the convex envelope of
    ``g -> T g(x)`` evaluated at ``f``; it is computed over a potential grid
    ``g = f + delta`` (``delta[0] = 0`` by translation, components in
    ``{-M, ..., M}`` with step ``M / steps``) as the LP
    ``min sum lam_i T g_i(x) + K  s.t.  sum lam_i g_i + K = f``.
    The LP dual gives the optimal measure ``sigma``.
    """

    kind = "kantorovich_envelope"
    MAX_POINTS = 4

    def __init__(self, fn: Callable, n_out: int, n_in: int, radius: Optional[float] = None,
                 steps: int = 10):
        if n_in > self.MAX_POINTS:
            raise ValidationError(f"envelope grid budget exceeded: |Y| = {n_in} > {self.MAX_POINTS}")
        self.fn = fn
        self.radius = radius
        self.steps = steps
        super().__init__(n_out, n_in)

    def _grid(self, f):
        M = self.radius
        if M is None:
            span = float(np.ptp(f)) if len(f) > 1 else 0.0
            M = 3.0 * max(span, 1.0)
        axis = np.linspace(-M, M, 2 * self.steps + 1)
        deltas = np.array(list(iproduct(*([axis] * (self.n_in - 1))))) if self.n_in > 1 \
            else np.zeros((1, 0))
        deltas = np.hstack([np.zeros((len(deltas), 1)), deltas])
        return f[None, :] + deltas

    def evaluate(self, f) -> tuple:
        """Envelope values and the optimal measures (one row per point)."""
        from scipy.optimize import linprog

        f = _vec(f, self.n_in)
        G = self._grid(f)
        TG = np.array([self.fn(g) for g in G])        # (len(G), n_out)
        out = np.empty(self.n_out)
        sig = np.zeros((self.n_out, self.n_in))
        A = np.hstack([G.T, np.ones((self.n_in, 1)), -np.ones((self.n_in, 1))])
        A = np.vstack([A, np.concatenate([np.ones(len(G)), [0.0, 0.0]])])
        b = np.concatenate([f, [1.0]])
        for x in range(self.n_out):
            c = np.concatenate([TG[:, x], [1.0, -1.0]])
            res = linprog(c, A_eq=A, b_eq=b, bounds=(0, None), method="highs")
            if res.status != 0:
                raise ConvergenceError(f"envelope LP failed: {res.message}")
            out[x] = res.fun
            sig[x] = res.eqlin.marginals[: self.n_in]
        return out, sig

    def apply(self, f):
        return self.evaluate(f)[0]

    def maximizers(self, f):
        return self.evaluate(f)[1]


def kantorovich_envelope(T, n_out: Optional[int] = None, n_in: Optional[int] = None,
                         radius: Optional[float] = None, steps: int = 10) -> EnvelopeOperator:
    """Grid approximation of the largest Kantorovich operator below ``T``.

    ``T`` may be a KantorovichOperator or any callable mapping arrays on Y to
    arrays on X (then pass ``n_out``/``n_in``).  Exact when ``g -> T g(x)`` is
    already convex.
    """
    if isinstance(T, KantorovichOperator):
        fn, n_out, n_in = T.apply, T.n_out, T.n_in
    else:
        fn = T
        if n_out is None or n_in is None:
            raise ValidationError("pass n_out and n_in for a bare callable")
    return EnvelopeOperator(lambda g: np.asarray(fn(g), dtype=float), n_out, n_in, radius, steps)


def pointwise_min(*ops: KantorovichOperator) -> FunctionOperator:
    """``f -> min_i T_i f``: monotone and translation-covariant, not always convex."""
    first = ops[0]
    return FunctionOperator(lambda f: np.min([op.apply(f) for op in ops], axis=0),
                            first.n_out, first.n_in, kind="pointwise_min")


# --- conjugate pairs -------------------------------------------------------

def conjugate_pair(t: Transfer, g, tol: float = 1e-10) -> tuple:
    """``(psi0, psi1) = (T- g, T+ T- g)``, checked to be a conjugate pair."""
    if t.forward is None:
        raise UnsupportedRepresentation("conjugate pairs need both directions")
    g = _vec(g, t.target.n)
    psi0 = t.operator(g)
    psi1 = t.forward(psi0)
    if np.any(psi1 < g - tol):
        raise PropertyViolation("T+ T- g >= g fails")
    back = t.operator(psi1)
    if np.max(np.abs(back - psi0)) > tol:
        raise PropertyViolation("T- T+ T- g != T- g")
    if np.max(np.abs(t.forward(back) - psi1)) > tol:
        raise PropertyViolation("T+ T- T+ f != T+ f")
    return psi0, psi1


def with_operator(t: Transfer, op: KantorovichOperator, kind: str) -> Transfer:
    return replace(t, operator=op, kind=kind, cost=None, forward=None, weak_cost=None)
