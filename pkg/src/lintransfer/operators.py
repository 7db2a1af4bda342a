"""Kantorovich operators on functions over finite spaces.

A backward operator maps functions on Y (length ``n_in``) to functions on X
(length ``n_out``).  Each concrete class may also expose ``maximizers(f)``:
a row-stochastic ``n_out x n_in`` table whose row x is an optimal measure
sigma in ``T f(x) = sup_sigma { int f dsigma - c(x, sigma) }``.  Those rows are
supergradients of ``f -> T f(x)`` and feed the dual ascent.
"""

from __future__ import annotations

from typing import Callable, Optional, Sequence

import numpy as np
from scipy.special import logsumexp

from .space import IndeterminateFormError, ValidationError, ext_add, ext_sub

STOCHASTIC_TOL = 1e-12


def _vec(f, n: int) -> np.ndarray:
    f = np.asarray(f, dtype=float)
    if f.shape != (n,):
        raise ValidationError(f"expected a function with {n} values, got shape {f.shape}")
    if np.any(np.isnan(f)):
        raise ValidationError("NaN in potential")
    return f


def minplus(A, B) -> np.ndarray:
    """Min-plus matrix product ``(A o B)[i, j] = min_k A[i, k] + B[k, j]``."""
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    return np.min(ext_add(A[:, :, None], B[None, :, :]), axis=1)


def check_stochastic(P, name="kernel") -> np.ndarray:
    P = np.asarray(P, dtype=float)
    if P.ndim != 2 or np.any(P < 0) or not np.all(np.isfinite(P)):
        raise ValidationError(f"{name} must be a nonnegative finite table")
    if np.any(np.abs(P.sum(axis=1) - 1.0) > STOCHASTIC_TOL):
        raise ValidationError(f"{name} rows must sum to 1")
    return P


class KantorovichOperator:
    direction = "backward"
    kind = "abstract"

    def __init__(self, n_out: int, n_in: int):
        self.n_out = n_out
        self.n_in = n_in

    def __call__(self, f) -> np.ndarray:
        return self.apply(_vec(f, self.n_in))

    def apply(self, f: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def maximizers(self, f) -> Optional[np.ndarray]:
        return None

    def power(self, n: int, f) -> np.ndarray:
        """``T^n f`` for a square operator."""
        if self.n_in != self.n_out:
            raise ValidationError("powers need a square operator")
        f = _vec(f, self.n_in)
        for _ in range(n):
            f = self.apply(f)
        return f

    def __repr__(self):
        return f"<{type(self).__name__} {self.kind} {self.n_out}x{self.n_in}>"


class CostOperator(KantorovichOperator):
    """Max-plus operator of a cost table.

    backward: ``T f(x) = max_y f(y) - c(x, y)``  (functions on Y -> X)
    forward:  ``T f(y) = min_x f(x) + c(x, y)``  (functions on X -> Y)
    """

    kind = "cost"

    def __init__(self, cost, direction: str = "backward"):
        c = np.array(cost, dtype=float)
        if c.ndim != 2 or np.any(np.isnan(c)) or np.any(c == -np.inf):
            raise ValidationError("cost must be a 2-D table with entries in (-inf, +inf]")
        c.setflags(write=False)
        self.cost = c
        self.direction = direction
        if direction == "backward":
            super().__init__(c.shape[0], c.shape[1])
        elif direction == "forward":
            super().__init__(c.shape[1], c.shape[0])
        else:
            raise ValidationError(f"unknown direction {direction!r}")

    def _scores(self, f):
        if self.direction == "backward":
            return ext_sub(f[None, :], self.cost)
        return ext_add(f[:, None], self.cost).T

    def apply(self, f):
        s = self._scores(f)
        return s.max(axis=1) if self.direction == "backward" else s.min(axis=1)

    def argmax(self, f) -> np.ndarray:
        """Optimal index per output point; ties go to the lowest index."""
        s = self._scores(_vec(f, self.n_in))
        return np.argmax(s, axis=1) if self.direction == "backward" else np.argmin(s, axis=1)

    def maximizers(self, f):
        idx = self.argmax(f)
        out = np.zeros((self.n_out, self.n_in))
        out[np.arange(self.n_out), idx] = 1.0
        return out


class MarkovOperator(KantorovichOperator):
    """``T f = P f`` for a row-stochastic kernel."""

    kind = "markov"

    def __init__(self, P):
        P = check_stochastic(P).copy()
        P.setflags(write=False)
        self.P = P
        super().__init__(*P.shape)

    def apply(self, f):
        mask = self.P > 0
        if np.any(np.isinf(f)):
            terms = np.where(mask, self.P * f[None, :], 0.0)
            with np.errstate(invalid="ignore"):
                out = terms.sum(axis=1)
            if np.any(np.isnan(out)):
                raise IndeterminateFormError("inf - inf in kernel average")
            return out
        return self.P @ f

    def maximizers(self, f):
        return np.array(self.P)


class EntropicOperator(KantorovichOperator):
    """``T f = log P e^f`` (Schroedinger-type log-sum-exp operator)."""

    kind = "entropic"

    def __init__(self, P):
        P = check_stochastic(P).copy()
        P.setflags(write=False)
        self.P = P
        super().__init__(*P.shape)

    def apply(self, f):
        if np.any(f == np.inf):
            hit = (self.P[:, f == np.inf] > 0).any(axis=1)
            out = np.full(self.n_out, np.inf)
            rest = ~hit
            if rest.any():
                g = np.where(f == np.inf, -np.inf, f)
                out[rest] = logsumexp(g[None, :], b=self.P[rest], axis=1)
            return out
        with np.errstate(divide="ignore"):
            return logsumexp(f[None, :], b=self.P, axis=1)

    def maximizers(self, f):
        f = _vec(f, self.n_in)
        with np.errstate(divide="ignore"):
            logw = np.log(self.P) + f[None, :]
        logw -= logsumexp(logw, axis=1, keepdims=True)
        return np.exp(logw)


class CompositeOperator(KantorovichOperator):
    """``ops[0] o ops[1] o ... o ops[-1]`` (the last one acts first)."""

    kind = "composite"

    def __init__(self, ops: Sequence[KantorovichOperator]):
        ops = tuple(ops)
        if not ops:
            raise ValidationError("empty composition")
        for a, b in zip(ops, ops[1:]):
            if a.n_in != b.n_out:
                raise ValidationError("middle spaces do not match")
        self.ops = ops
        super().__init__(ops[0].n_out, ops[-1].n_in)

    def apply(self, f):
        for op in reversed(self.ops):
            f = op.apply(f)
        return f

    def maximizers(self, f):
        f = _vec(f, self.n_in)
        stages = []
        for op in reversed(self.ops):
            stages.append(f)
            f = op.apply(f)
        out = None
        for op, g in zip(reversed(self.ops), stages):
            m = op.maximizers(g)
            if m is None:
                return None
            out = m if out is None else m @ out
        return out


class ScaledOperator(KantorovichOperator):
    """``f -> a T(f / a)``."""

    kind = "scaled"

    def __init__(self, a: float, base: KantorovichOperator):
        if not a > 0:
            raise ValidationError("scale must be positive")
        self.a = float(a)
        self.base = base
        super().__init__(base.n_out, base.n_in)

    def apply(self, f):
        return self.a * self.base.apply(f / self.a)

    def maximizers(self, f):
        return self.base.maximizers(np.asarray(f, dtype=float) / self.a)


class SumOperator(KantorovichOperator):
    """Pointwise sum ``T1 f + T2 f``.

    Constants are translated twice over: ``(T1 + T2)(f + k) = (T1 + T2) f + 2k``.
    """

    kind = "dual_sum"
    translation_weight = 2

    def __init__(self, first: KantorovichOperator, second: KantorovichOperator):
        if (first.n_out, first.n_in) != (second.n_out, second.n_in):
            raise ValidationError("summands act between different spaces")
        self.first = first
        self.second = second
        super().__init__(first.n_out, first.n_in)

    def apply(self, f):
        return ext_add(self.first.apply(f), self.second.apply(f))

    def maximizers(self, f):
        a, b = self.first.maximizers(f), self.second.maximizers(f)
        if a is None or b is None:
            return None
        return a + b


class ShiftedOperator(KantorovichOperator):
    """``f -> T f + k``."""

    kind = "shifted"

    def __init__(self, base: KantorovichOperator, shift: float):
        self.base = base
        self.shift = float(shift)
        super().__init__(base.n_out, base.n_in)

    def apply(self, f):
        return self.base.apply(f) + self.shift

    def maximizers(self, f):
        return self.base.maximizers(f)


class FunctionOperator(KantorovichOperator):
    """An operator given by a closed-form callable on value arrays."""

    def __init__(self, fn: Callable, n_out: int, n_in: int, kind: str = "function",
                 maximizer_fn: Optional[Callable] = None):
        self.fn = fn
        self.kind = kind
        self._maximizer_fn = maximizer_fn
        super().__init__(n_out, n_in)

    def apply(self, f):
        return np.asarray(self.fn(f), dtype=float)

    def maximizers(self, f):
        if self._maximizer_fn is None:
            return None
        return self._maximizer_fn(_vec(f, self.n_in))


def identity_operator(n: int) -> CostOperator:
    c = np.full((n, n), np.inf)
    np.fill_diagonal(c, 0.0)
    return CostOperator(c)


def apply(T, f) -> np.ndarray:
    """Apply a Kantorovich operator (or a transfer's operator) to ``f``."""
    op = getattr(T, "operator", T)
    return op(np.asarray(f, dtype=float))


def apply_with_diagnostics(T, f) -> tuple:
    """Like :func:`apply` but also returns which representation ran and,
    for cost operators, the lowest-index argmax per point."""
    op = getattr(T, "operator", T)
    values = op(np.asarray(f, dtype=float))
    info = {"kind": op.kind, "tie_break": "lowest index"}
    if isinstance(op, CostOperator):
        info["argmax"] = op.argmax(f).tolist()
    return values, info
