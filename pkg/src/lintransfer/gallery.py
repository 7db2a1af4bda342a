"""Constructors for the standard example transfers.

Envelope-based kinds (balayage, martingale, variance, Marton) live on 1-D
coordinate grids, where the concave envelope is the exact upper hull of the
graph.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.optimize import minimize_scalar

from .operators import (
    CostOperator,
    EntropicOperator,
    FunctionOperator,
    MarkovOperator,
    _vec,
    check_stochastic,
)
from .space import FiniteSpace, ValidationError
from .transfer import Transfer, cost_transfer

BARY_TOL = 1e-9

KINDS = ("cost", "metric", "power_cost", "pushforward", "markov", "heat", "balayage_1d",
         "martingale_1d", "variance_1d", "marton", "entropic")


# ---------------------------------------------------------------------------
# upper hull machinery
# ---------------------------------------------------------------------------

def upper_hull(xs, ys) -> list:
    """Indices of the vertices of the upper concave hull (monotone chain).

    ``xs`` must be strictly increasing.  Points with value -inf are skipped.
    Exact when the inputs are ints or Fractions.
    """
    hull: list = []
    for i in range(len(xs)):
        if ys[i] == -np.inf:
            continue
        while len(hull) >= 2:
            a, b = hull[-2], hull[-1]
            # drop b if it is on or below the chord a -> i
            cross = (xs[b] - xs[a]) * (ys[i] - ys[a]) - (ys[b] - ys[a]) * (xs[i] - xs[a])
            if cross >= 0:
                hull.pop()
            else:
                break
        hull.append(i)
    return hull


def _bracket(xs, hull, z):
    """Hull vertices (i, j) and weight on j with xs[i] <= z <= xs[j]."""
    if z <= xs[hull[0]]:
        return hull[0], hull[0], 0.0
    if z >= xs[hull[-1]]:
        return hull[-1], hull[-1], 0.0
    for a, b in zip(hull, hull[1:]):
        if xs[a] <= z <= xs[b]:
            if z == xs[a]:
                return a, a, 0.0
            if z == xs[b]:
                return b, b, 0.0
            return a, b, (z - xs[a]) / (xs[b] - xs[a])
    raise AssertionError("unreachable")


def _hull_value(xs, ys, hull, z):
    i, j, w = _bracket(xs, hull, z)
    if i == j:
        return ys[i]
    return ys[i] * (1 - w) + ys[j] * w


def concave_envelope(coords, values) -> np.ndarray:
    """Upper concave envelope of ``values`` evaluated at each coordinate."""
    xs = list(coords)
    if any(b <= a for a, b in zip(xs, xs[1:])):
        raise ValidationError("coordinates must be strictly increasing")
    ys = list(values)
    if any(y == np.inf for y in ys):
        return np.full(len(xs), np.inf)
    hull = upper_hull(xs, ys)
    if not hull:
        return np.full(len(xs), -np.inf)
    out = []
    for z in xs:
        if z < xs[hull[0]] or z > xs[hull[-1]]:
            out.append(-np.inf)
        else:
            out.append(_hull_value(xs, ys, hull, z))
    if all(isinstance(v, (int, float, np.floating, np.integer)) for v in out):
        return np.array(out, dtype=float)
    return np.array(out, dtype=object)


def _envelope_measure(xs, ys, z, n) -> np.ndarray:
    """The two-atom measure realising the concave envelope at ``z``."""
    hull = upper_hull(xs, ys)
    sig = np.zeros(n)
    i, j, w = _bracket(xs, hull, z)
    sig[i] += 1 - w
    sig[j] += w
    return sig


def _max_segment(a0, a1, z0, z1, gamma):
    """Maximise the line through (z0, a0), (z1, a1) minus gamma on [z0, z1]."""
    if z1 == z0:
        return a0 - gamma(z0), z0
    slope = (a1 - a0) / (z1 - z0)
    if gamma is _square:
        z = min(max(slope / 2.0, z0), z1)
    else:
        res = minimize_scalar(lambda t: -(a0 + slope * (t - z0) - gamma(t)), bounds=(z0, z1),
                              method="bounded", options={"xatol": 1e-12})
        z = res.x
        for cand in (z0, z1):
            if a0 + slope * (cand - z0) - gamma(cand) >= a0 + slope * (z - z0) - gamma(z):
                z = cand
    return a0 + slope * (z - z0) - gamma(z), z


def _square(t):
    return t * t


def _sup_hull_minus(xs, ys, gamma):
    """``sup_z hull(z) - gamma(z)`` over ``[xs[0], xs[-1]]`` and the optimal z."""
    hull = upper_hull(xs, ys)
    best, arg = -np.inf, None
    if len(hull) == 1:
        i = hull[0]
        return ys[i] - gamma(xs[i]), xs[i]
    for a, b in zip(hull, hull[1:]):
        v, z = _max_segment(ys[a], ys[b], xs[a], xs[b], gamma)
        if v > best:
            best, arg = v, z
    return best, arg


# ---------------------------------------------------------------------------
# gallery kinds and constructors
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GallerySpec:
    kind: str
    space: FiniteSpace
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValidationError(f"unknown gallery kind {self.kind!r}")
        if self.kind in ("balayage_1d", "martingale_1d", "variance_1d", "power_cost"):
            self.space.require_sorted_coords()
        if self.kind == "power_cost" and not self.params.get("p", 0) > 0:
            raise ValidationError("power_cost needs p > 0")
        if self.kind in ("markov", "heat", "entropic"):
            check_stochastic(self.params["kernel"])


def _gamma(params) -> Callable:
    g = params.get("gamma", "square")
    if g == "square":
        return _square
    if g == "identity":
        return lambda t: t
    if callable(g):
        return g
    raise ValidationError(f"unknown gamma {g!r}")


def _marton_parts(space, params):
    d = params.get("d")
    d = space.require_metric() if d is None else np.asarray(d, dtype=float)
    return d, _gamma(params)


def _marton_level_problem(drow, f):
    """Sorted distinct (level, best value) pairs for the level envelope."""
    order = np.lexsort((-f, drow))
    xs, ys = [], []
    for k in order:
        if xs and drow[k] == xs[-1]:
            continue                      # same level, smaller value
        xs.append(float(drow[k]))
        ys.append(float(f[k]))
    return xs, ys


def marton_value(d, gamma, f, x) -> tuple:
    """``sup_sigma int f dsigma - gamma(int d(x, .) dsigma)`` and a maximiser.

    For fixed level ``t = int d(x, .) dsigma`` the best linear value is the
    concave envelope of the points ``(d(x, y), f(y))`` at ``t``, so only a
    one-dimensional problem in ``t`` remains.
    """
    drow = np.asarray(d[x], dtype=float)
    xs, ys = _marton_level_problem(drow, f)
    val, t = _sup_hull_minus(xs, ys, gamma)
    hull = upper_hull(xs, ys)
    i, j, w = _bracket(xs, hull, t)
    sig = np.zeros(len(f))
    # map levels back to the best point at that level
    for lvl_idx, mass in ((i, 1 - w), (j, w)):
        cands = np.nonzero(drow == xs[lvl_idx])[0]
        best = cands[np.argmax(f[cands])]
        sig[best] += mass
    return val, sig


def make_transfer(spec: GallerySpec) -> Transfer:
    """Build the transfer for a gallery spec."""
    kind, space, p = spec.kind, spec.space, spec.params
    n = space.n
    if kind == "cost":
        return cost_transfer(p["cost"], space, space, params=dict(p))
    if kind == "metric":
        return cost_transfer(space.require_metric(), space, space, kind="metric")
    if kind == "power_cost":
        xs = space.coords
        c = np.abs(xs[:, None] - xs[None, :]) ** p["p"]
        return cost_transfer(c, space, space, kind="power_cost", params=dict(p))
    if kind == "pushforward":
        sigma = list(p["sigma"])
        target = p.get("target", space)
        if len(sigma) != n or not all(0 <= s < target.n for s in sigma):
            raise ValidationError("sigma must map every point into the target")
        c = np.full((n, target.n), np.inf)
        c[np.arange(n), sigma] = 0.0
        return cost_transfer(c, space, target, kind="pushforward", params={"sigma": sigma})
    if kind in ("markov", "heat"):
        P = np.asarray(p["kernel"], dtype=float)
        op = MarkovOperator(P)
        return Transfer(op, space, FiniteSpace(P.shape[1]) if P.shape[1] != n else space,
                        kind=kind, weak_cost=_markov_weak_cost(op.P), params={"kernel": P.tolist()})
    if kind == "entropic":
        P = np.asarray(p["kernel"], dtype=float)
        op = EntropicOperator(P)
        return Transfer(op, space, space if P.shape[1] == n else FiniteSpace(P.shape[1]),
                        kind="entropic", weak_cost=_kl_weak_cost(op.P), params={"kernel": P.tolist()})
    xs = space.coords
    if kind == "balayage_1d":
        op = FunctionOperator(lambda f: concave_envelope(xs, f).astype(float), n, n,
                              kind="balayage_1d",
                              maximizer_fn=lambda f: np.array([_envelope_measure(list(xs), list(f), z, n)
                                                               for z in xs]))
        return Transfer(op, space, space, kind=kind, weak_cost=_bary_weak_cost(xs, None))
    if kind == "martingale_1d":
        c = np.asarray(p.get("cost", np.abs(xs[:, None] - xs[None, :])), dtype=float)

        def mart(f):
            return np.array([concave_envelope(xs, f - c[x])[x] for x in range(n)], dtype=float)

        def mart_max(f):
            return np.array([_envelope_measure(list(xs), list(f - c[x]), xs[x], n) for x in range(n)])

        op = FunctionOperator(mart, n, n, kind="martingale_1d", maximizer_fn=mart_max)
        return Transfer(op, space, space, kind=kind, weak_cost=_bary_weak_cost(xs, c),
                        params={"cost": c.tolist()})
    if kind == "variance_1d":
        q = xs ** 2

        def var_op(f):
            v, _ = _sup_hull_minus(list(xs), list(f + q), _square)
            return np.full(n, v)

        def var_max(f):
            _, z = _sup_hull_minus(list(xs), list(f + q), _square)
            return np.tile(_envelope_measure(list(xs), list(f + q), z, n), (n, 1))

        op = FunctionOperator(var_op, n, n, kind="variance_1d", maximizer_fn=var_max)
        return Transfer(op, space, space, kind=kind, weak_cost=_variance_weak_cost(xs))
    if kind == "marton":
        d, gamma = _marton_parts(space, p)

        def marton_op(f):
            return np.array([marton_value(d, gamma, f, x)[0] for x in range(n)])

        def marton_max(f):
            return np.array([marton_value(d, gamma, f, x)[1] for x in range(n)])

        op = FunctionOperator(marton_op, n, d.shape[1], kind="marton", maximizer_fn=marton_max)
        return Transfer(op, space, space if d.shape[1] == n else FiniteSpace(d.shape[1]),
                        kind=kind, weak_cost=_marton_weak_cost(d, gamma),
                        params={"gamma": p.get("gamma", "square")})
    raise ValidationError(f"unhandled kind {kind!r}")


def gallery_apply(spec: GallerySpec, f, x: int) -> float:
    """Evaluate the kind's closed form at a single point ``x``.

    For ``power_cost`` an optional ``params["n"]`` selects the n-th iterate
    ``sup_y f(y) - |x - y|^p / n^(p - 1)``.
    """
    f = _vec(f, spec.space.n)
    if spec.kind == "power_cost":
        p = spec.params["p"]
        n_iter = spec.params.get("n", 1)
        xs = spec.space.coords
        return float(np.max(f - np.abs(xs[x] - xs) ** p / n_iter ** (p - 1)))
    if spec.kind == "marton":
        d, gamma = _marton_parts(spec.space, spec.params)
        return float(marton_value(d, gamma, f, x)[0])
    return float(make_transfer(spec).operator(f)[x])


# ---------------------------------------------------------------------------
# weak costs c(x, sigma), vectorised over rows of sigma
# ---------------------------------------------------------------------------

def _markov_weak_cost(P):
    def weak(x, sigma):
        sigma = np.atleast_2d(sigma)
        ok = np.all(np.abs(sigma - P[x]) <= BARY_TOL, axis=1)
        return np.where(ok, 0.0, np.inf)
    return weak


def _kl_weak_cost(P):
    def weak(x, sigma):
        sigma = np.atleast_2d(sigma)
        r = P[x]
        with np.errstate(divide="ignore", invalid="ignore"):
            terms = np.where(sigma > 0, sigma * np.log(sigma / r), 0.0)
        return terms.sum(axis=1)
    return weak


def _bary_weak_cost(xs, c):
    def weak(x, sigma):
        sigma = np.atleast_2d(sigma)
        bary = sigma @ xs
        ok = np.abs(bary - xs[x]) <= BARY_TOL
        base = np.zeros(len(sigma)) if c is None else sigma @ c[x]
        return np.where(ok, base, np.inf)
    return weak


def _variance_weak_cost(xs):
    def weak(x, sigma):
        sigma = np.atleast_2d(sigma)
        return (sigma @ xs) ** 2 - sigma @ (xs ** 2)
    return weak


def _marton_weak_cost(d, gamma):
    def weak(x, sigma):
        sigma = np.atleast_2d(sigma)
        t = sigma @ d[x]
        try:
            return np.asarray(gamma(t), dtype=float).reshape(t.shape)
        except (TypeError, ValueError):
            return np.array([gamma(v) for v in t])
    return weak
