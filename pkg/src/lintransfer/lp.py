"""Dense two-phase tableau simplex with Bland's rule.

Instances in this package are tiny (a few dozen variables), so a dense
tableau is fine.  Integer or Fraction data is solved in exact rational
arithmetic; anything else runs in float64 with a pivot tolerance.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from numbers import Integral, Rational
from typing import Optional

import numpy as np

FLOAT_EPS = 1e-11
PIVOT_EPS = 1e-9   # smallest admissible pivot element in float mode


class LPError(RuntimeError):
    pass


class InfeasibleError(LPError):
    pass


class UnboundedError(LPError):
    pass


@dataclass(frozen=True)
class LinearProgram:
    """min objective . x  subject to  A_eq x = b_eq,  x >= 0."""

    objective: np.ndarray
    A_eq: np.ndarray
    b_eq: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.objective)
        A = np.asarray(self.A_eq)
        b = np.asarray(self.b_eq)
        if A.ndim != 2 or c.shape != (A.shape[1],) or b.shape != (A.shape[0],):
            raise ValueError("inconsistent LP dimensions")
        if b.dtype != object and not np.all(np.isfinite(b)):
            raise ValueError("right-hand side must be finite")
        object.__setattr__(self, "objective", c)
        object.__setattr__(self, "A_eq", A)
        object.__setattr__(self, "b_eq", b)

    @property
    def shape(self):
        return self.A_eq.shape


def _is_rational_array(a: np.ndarray) -> bool:
    if a.dtype == object:
        return all(isinstance(v, Rational) for v in a.ravel())
    if np.issubdtype(a.dtype, np.integer):
        return True
    if np.issubdtype(a.dtype, np.floating):
        return bool(np.all(np.isfinite(a)) and np.all(a == np.round(a)))
    return False


def _to_fraction(a: np.ndarray) -> np.ndarray:
    out = np.empty(a.shape, dtype=object)
    flat = a.ravel()
    res = out.ravel()
    for k, v in enumerate(flat):
        res[k] = v if isinstance(v, Fraction) else Fraction(int(v)) if isinstance(v, (Integral, np.integer)) else Fraction(v)
    return out


class _Tableau:
    def __init__(self, T, basis, eps, pivot_eps=None):
        self.T = T
        self.basis = basis
        self.eps = eps
        self.pivot_eps = eps if pivot_eps is None else pivot_eps

    def pivot(self, r, j):
        T = self.T
        T[r] = T[r] / T[r, j]
        col = T[:, j].copy()
        col[r] = 0
        nz = np.nonzero(col != 0)[0]
        if len(nz):
            T[nz] -= np.outer(col[nz], T[r])
        self.basis[r] = j

    def run(self, allowed: int, max_pivots: int) -> None:
        """Bland's rule on the objective stored in the last row."""
        T, eps = self.T, self.eps
        m = T.shape[0] - 1
        for _ in range(max_pivots):
            z = T[-1, :allowed]
            cand = [j for j in range(allowed) if z[j] < -eps]
            if not cand:
                return
            j = cand[0]
            col = T[:m, j]
            best = None
            for r in range(m):
                if col[r] > self.pivot_eps:
                    ratio = max(T[r, -1], 0) / col[r]
                    key = (ratio, self.basis[r])
                    if best is None or key < best[0]:
                        best = (key, r)
            if best is None:
                raise UnboundedError("objective is unbounded below")
            self.pivot(best[1], j)
        raise LPError("pivot limit reached")


def lp_solve(lp: LinearProgram, exact: Optional[bool] = None, max_pivots: int = 100000):
    """Solve ``lp``; returns ``(x, value)``.

    ``exact=None`` picks rational arithmetic when every datum is an integer
    or Fraction.  Raises InfeasibleError / UnboundedError.
    """
    c, A, b = lp.objective, lp.A_eq, lp.b_eq
    if exact is None:
        exact = _is_rational_array(c) and _is_rational_array(A) and _is_rational_array(b)
    if exact:
        c, A, b = _to_fraction(c), _to_fraction(A), _to_fraction(b)
        eps = Fraction(0)
        zero, one = Fraction(0), Fraction(1)
    else:
        c, A, b = (np.asarray(v, dtype=float) for v in (c, A, b))
        eps = FLOAT_EPS
        zero, one = 0.0, 1.0
    m, n = A.shape
    dtype = object if exact else float

    A = A.copy()
    b = b.copy()
    neg = b < 0
    A[neg] = -A[neg]
    b[neg] = -b[neg]

    # phase 1 tableau: [A | I | b] with objective sum of artificials
    T = np.empty((m + 1, n + m + 1), dtype=dtype)
    T[:m, :n] = A
    T[:m, n:n + m] = zero
    for r in range(m):
        T[r, n + r] = one
    T[:m, -1] = b
    T[-1, :] = zero
    T[-1, :n] = -A.sum(axis=0) if m else zero
    T[-1, -1] = -b.sum() if m else zero
    piv = 0 if exact else PIVOT_EPS
    tab = _Tableau(T, list(range(n, n + m)), eps, piv)
    tab.run(n + m, max_pivots)
    if -tab.T[-1, -1] > (PIVOT_EPS if not exact else 0) * max(1.0, float(abs(b).sum()) if m else 1.0):
        raise InfeasibleError("no feasible point")

    # drive artificials out of the basis; rows that cannot pivot are redundant
    keep = []
    for r in range(m):
        if tab.basis[r] >= n:
            row = tab.T[r, :n]
            if exact:
                js = [j for j in range(n) if row[j] != 0]
                j = js[0] if js else None
            else:
                j = int(np.argmax(np.abs(row))) if n else None
                if j is not None and abs(row[j]) <= PIVOT_EPS:
                    j = None
            if j is not None:
                tab.pivot(r, j)
                keep.append(r)
        else:
            keep.append(r)
    rows = keep + [m]
    T2 = np.empty((len(keep) + 1, n + 1), dtype=dtype)
    T2[:, :n] = tab.T[rows, :n]
    T2[:, -1] = tab.T[rows, -1]
    basis = [tab.basis[r] for r in keep]
    T2[-1, :n] = c
    T2[-1, -1] = zero
    for r, j in enumerate(basis):
        if T2[-1, j] != 0:
            T2[-1] = T2[-1] - T2[-1, j] * T2[r]
    tab2 = _Tableau(T2, basis, eps, piv)
    tab2.run(n, max_pivots)

    x = np.empty(n, dtype=dtype)
    x[:] = zero
    for r, j in enumerate(tab2.basis):
        x[j] = tab2.T[r, -1]
    value = -tab2.T[-1, -1]
    if not exact:
        x = np.maximum(x, 0.0)
        value = float(value)
    return x, value
