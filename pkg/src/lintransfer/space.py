"""Finite ground spaces, probability measures, couplings and potentials.

Everything here is an immutable value object.  Arrays handed to the
constructors are copied and frozen (``writeable=False``).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

NORMALIZATION_TOL = 1e-12
METRIC_TOL = 1e-12


class IndeterminateFormError(ArithmeticError):
    """Raised when extended-real arithmetic would form inf - inf."""


class ValidationError(ValueError):
    """Input data violates a type invariant."""


def _frozen(a, dtype=float) -> np.ndarray:
    arr = np.array(a, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


def ext_sub(a, b) -> np.ndarray:
    """Broadcast ``a - b`` over extended reals; inf - inf raises."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    with np.errstate(invalid="ignore"):
        out = a - b
    bad = np.isnan(out) & ~np.isnan(a) & ~np.isnan(b)
    if np.any(bad):
        raise IndeterminateFormError("inf - inf encountered")
    return out


def ext_add(a, b) -> np.ndarray:
    """Broadcast ``a + b`` over extended reals; (+inf) + (-inf) raises."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    with np.errstate(invalid="ignore"):
        out = a + b
    bad = np.isnan(out) & ~np.isnan(a) & ~np.isnan(b)
    if np.any(bad):
        raise IndeterminateFormError("inf + (-inf) encountered")
    return out


@dataclass(frozen=True, eq=False)
class FiniteSpace:
    """A finite point set with optional 1-D coordinates and metric."""

    n: int
    labels: tuple = ()
    coords: Optional[np.ndarray] = None
    metric: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.n < 1:
            raise ValidationError("space needs at least one point")
        if not self.labels:
            object.__setattr__(self, "labels", tuple(str(i) for i in range(self.n)))
        elif len(self.labels) != self.n:
            raise ValidationError("one label per point required")
        if self.coords is not None:
            coords = _frozen(self.coords)
            if coords.shape != (self.n,):
                raise ValidationError("coords must have one entry per point")
            object.__setattr__(self, "coords", coords)
        if self.metric is not None:
            d = _frozen(self.metric)
            _check_metric(d, self.n)
            object.__setattr__(self, "metric", d)

    @classmethod
    def line(cls, coords: Sequence[float], metric: bool = True) -> "FiniteSpace":
        """Points on the real line with the distance |x - y|."""
        c = np.asarray(coords, dtype=float)
        d = np.abs(c[:, None] - c[None, :]) if metric else None
        return cls(len(c), coords=c, metric=d)

    @classmethod
    def discrete(cls, n: int) -> "FiniteSpace":
        return cls(n)

    def product(self, other: "FiniteSpace") -> "FiniteSpace":
        """Product space; point (i, j) has flat index ``i * other.n + j``."""
        labels = tuple(f"({a},{b})" for a in self.labels for b in other.labels)
        return FiniteSpace(self.n * other.n, labels=labels)

    def require_metric(self) -> np.ndarray:
        if self.metric is None:
            raise ValidationError("this operation needs a metric on the space")
        return self.metric

    def require_sorted_coords(self) -> np.ndarray:
        if self.coords is None:
            raise ValidationError("this operation needs coordinates")
        if np.any(np.diff(self.coords) <= 0):
            raise ValidationError("coordinates must be strictly increasing")
        return self.coords

    def __eq__(self, other):
        if not isinstance(other, FiniteSpace):
            return NotImplemented
        if self is other:
            return True
        return (
            self.n == other.n
            and self.labels == other.labels
            and _opt_equal(self.coords, other.coords)
            and _opt_equal(self.metric, other.metric)
        )

    def __hash__(self):
        return hash((self.n, self.labels))


def _opt_equal(a, b) -> bool:
    if a is None or b is None:
        return a is None and b is None
    return a.shape == b.shape and bool(np.array_equal(a, b))


def _check_metric(d: np.ndarray, n: int) -> None:
    if d.shape != (n, n):
        raise ValidationError("metric must be n x n")
    if not np.all(np.isfinite(d)) or np.any(d < 0):
        raise ValidationError("metric entries must be finite and nonnegative")
    if np.any(np.abs(np.diag(d)) > METRIC_TOL):
        raise ValidationError("metric must vanish on the diagonal")
    if np.any(np.abs(d - d.T) > METRIC_TOL):
        raise ValidationError("metric must be symmetric")
    # d(x, y) <= d(x, z) + d(z, y)
    via = np.min(d[:, :, None] + d[None, :, :], axis=1)
    if np.any(d - via > METRIC_TOL):
        raise ValidationError("metric violates the triangle inequality")


@dataclass(frozen=True, eq=False)
class Measure:
    space: FiniteSpace
    weights: np.ndarray

    def __post_init__(self):
        w = _frozen(self.weights)
        if w.shape != (self.space.n,):
            raise ValidationError("one weight per point required")
        if not np.all(np.isfinite(w)) or np.any(w < 0):
            raise ValidationError("weights must be finite and nonnegative")
        if abs(w.sum() - 1.0) > NORMALIZATION_TOL:
            raise ValidationError(f"weights sum to {w.sum()!r}, not 1")
        object.__setattr__(self, "weights", w)

    @classmethod
    def dirac(cls, space: FiniteSpace, i: int) -> "Measure":
        w = np.zeros(space.n)
        w[i] = 1.0
        return cls(space, w)

    @classmethod
    def uniform(cls, space: FiniteSpace) -> "Measure":
        return cls(space, np.full(space.n, 1.0 / space.n))

    def integrate(self, f) -> float:
        """Integral of an extended-real function; 0 * inf counts as 0."""
        f = np.asarray(f, dtype=float)
        mask = self.weights > 0
        return float(np.sum(self.weights[mask] * f[mask]))

    def product(self, other: "Measure") -> "Coupling":
        return Coupling(self.space, other.space, np.outer(self.weights, other.weights))

    def diag(self) -> "Coupling":
        return Coupling(self.space, self.space, np.diag(self.weights))

    def tensor(self, other: "Measure") -> "Measure":
        return Measure(self.space.product(other.space), np.outer(self.weights, other.weights).ravel())

    def __eq__(self, other):
        if not isinstance(other, Measure):
            return NotImplemented
        return self.space == other.space and bool(np.array_equal(self.weights, other.weights))

    __hash__ = None


@dataclass(frozen=True, eq=False)
class Coupling:
    row_space: FiniteSpace
    col_space: FiniteSpace
    weights: np.ndarray

    def __post_init__(self):
        w = _frozen(self.weights)
        if w.shape != (self.row_space.n, self.col_space.n):
            raise ValidationError("coupling table has the wrong shape")
        if not np.all(np.isfinite(w)) or np.any(w < 0):
            raise ValidationError("coupling entries must be finite and nonnegative")
        if abs(w.sum() - 1.0) > NORMALIZATION_TOL:
            raise ValidationError(f"coupling mass is {w.sum()!r}, not 1")
        object.__setattr__(self, "weights", w)

    def cost(self, c) -> float:
        c = np.asarray(c, dtype=float)
        mask = self.weights > 0
        return float(np.sum(self.weights[mask] * c[mask]))

    def support(self) -> list:
        return [tuple(int(k) for k in ij) for ij in np.argwhere(self.weights > 0)]


def marginals(pi: Coupling) -> tuple:
    """Row and column marginals of a coupling."""
    rows = pi.weights.sum(axis=1)
    cols = pi.weights.sum(axis=0)
    return Measure(pi.row_space, rows), Measure(pi.col_space, cols)


@dataclass(frozen=True, eq=False)
class Potential:
    """An extended-real function on a finite space."""

    space: FiniteSpace
    values: np.ndarray = field(default=None)

    def __post_init__(self):
        v = _frozen(self.values)
        if v.shape != (self.space.n,):
            raise ValidationError("one value per point required")
        if np.any(np.isnan(v)):
            raise ValidationError("potential values may not be NaN")
        object.__setattr__(self, "values", v)

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.values, dtype=dtype)


def kl_divergence(nu: Measure, mu: Measure) -> float:
    """KL(nu || mu) = sum nu log(nu / mu); +inf when nu is not << mu."""
    if nu.space != mu.space:
        raise ValidationError("measures live on different spaces")
    p, q = nu.weights, mu.weights
    mask = p > 0
    if np.any(q[mask] == 0):
        return float("inf")
    return float(np.sum(p[mask] * np.log(p[mask] / q[mask])))


def wasserstein1(mu: Measure, nu: Measure) -> float:
    """W1 distance for the space metric, solved as a transport LP."""
    from .duality import primal_ot

    d = mu.space.require_metric()
    if nu.space != mu.space:
        raise ValidationError("measures live on different spaces")
    value, _ = primal_ot(d, mu, nu)
    return value


def wasserstein1_dual(mu: Measure, nu: Measure) -> float:
    """W1 through the Lipschitz dual: max sum u (nu - mu) over 1-Lipschitz u.

    The dual LP is solved independently of the primal transport LP.
    """
    from .lp import LinearProgram, lp_solve

    d = mu.space.require_metric()
    n = mu.space.n
    # u = u+ - u-, constraints u_i - u_j + s_ij = d_ij for i != j
    diff = nu.weights - mu.weights
    pairs = [(i, j) for i in range(n) for j in range(n) if i != j]
    nvar = 2 * n + len(pairs)
    A = np.zeros((len(pairs), nvar))
    b = np.zeros(len(pairs))
    for k, (i, j) in enumerate(pairs):
        A[k, i] += 1
        A[k, n + i] -= 1
        A[k, j] -= 1
        A[k, n + j] += 1
        A[k, 2 * n + k] = 1
        b[k] = d[i, j]
    cost = np.concatenate([-diff, diff, np.zeros(len(pairs))])
    if not pairs:
        return 0.0
    _, value = lp_solve(LinearProgram(cost, A, b))
    return -value
