"""Ergodic objects of backward transfers.

Mane constant (three routes), weak KAM solutions, the Peierls barrier and
effective operator, the Aubry set, Mather couplings and the Schroedinger
(log-sum-exp) effective limit.

Integer cost tables take an exact path: with ``c = p / q`` the tilted cost
``q C - p`` is integral, and every max-plus quantity is computed on those
integers (float64 represents them exactly) before dividing by ``q``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional, Union

import numpy as np

from .lp import LinearProgram, lp_solve
from .operators import (
    CostOperator,
    EntropicOperator,
    KantorovichOperator,
    MarkovOperator,
    check_stochastic,
    minplus,
)
from .space import Coupling, FiniteSpace, ValidationError
from .transfer import ConvergenceError, PropertyViolation, Transfer, UnsupportedRepresentation

CRITICAL_TOL = 1e-9
Number = Union[Fraction, float]


class PeriodicityError(ConvergenceError):
    pass


def is_integral(C) -> bool:
    C = np.asarray(C, dtype=float)
    fin = C[np.isfinite(C)]
    return bool(np.all(fin == np.round(fin)) and np.all(np.abs(fin) < 2 ** 40))


def _cost_of(T) -> np.ndarray:
    if isinstance(T, Transfer):
        if T.cost is None:
            raise UnsupportedRepresentation("a cost table is required")
        return np.asarray(T.cost, dtype=float)
    C = np.asarray(T, dtype=float)
    if C.ndim != 2 or C.shape[0] != C.shape[1]:
        raise ValidationError("square cost table required")
    return C


# ---------------------------------------------------------------------------
# Mane constant
# ---------------------------------------------------------------------------

def _walk_table(C) -> np.ndarray:
    """``D[k, v]`` = min weight of a k-edge walk ending at v (any start)."""
    n = C.shape[0]
    D = np.full((n + 1, n), np.inf)
    D[0] = 0.0
    for k in range(1, n + 1):
        D[k] = np.min(D[k - 1][:, None] + C, axis=0)
    return D


def mane_min_mean_cycle(T) -> Number:
    """Minimum mean weight over directed cycles (Karp).

    Exact ``Fraction`` for integer tables; ``+inf`` when no cycle has finite
    weight.
    """
    C = _cost_of(T)
    n = C.shape[0]
    D = _walk_table(C)
    exact = is_integral(C)
    best = None
    for v in range(n):
        if not np.isfinite(D[n, v]):
            continue
        worst = None
        for k in range(n):
            if not np.isfinite(D[k, v]):
                continue
            if exact:
                r = Fraction(int(D[n, v] - D[k, v]), n - k)
            else:
                r = (D[n, v] - D[k, v]) / (n - k)
            if worst is None or r > worst:
                worst = r
        if worst is not None and (best is None or worst < best):
            best = worst
    if best is None:
        return float("inf")
    return best


def mane_diag_lp(T) -> Number:
    """``min sum C pi`` over probability couplings with equal marginals."""
    C = _cost_of(T)
    n = C.shape[0]
    cells = [(i, j) for i in range(n) for j in range(n) if np.isfinite(C[i, j])]
    exact = is_integral(C)
    A = np.zeros((n, len(cells)), dtype=int if exact else float)
    for k, (i, j) in enumerate(cells):
        A[0, k] = 1
        if i < n - 1:
            A[1 + i, k] += 1
        if j < n - 1:
            A[1 + j, k] -= 1
    b = np.zeros(n, dtype=int if exact else float)
    b[0] = 1
    c = np.array([C[i, j] for i, j in cells])
    if exact:
        c = c.astype(int)
    _, value = lp_solve(LinearProgram(c, A, b), exact=exact)
    return value


@dataclass
class ManeEstimate:
    value: float
    bound: Optional[float]
    n: int
    diverged: bool = False


def mane_iterative(T, f=None, n: int = 1000, x0: int = 0) -> ManeEstimate:
    """``-(T^n f(x0) - f(x0)) / n`` with the a-priori error bound.

    The bound is ``(range f + K) / n``; ``K = max C - min C`` for cost tables
    without forbidden pairs (a bound on the span of any weak KAM solution),
    otherwise no bound is reported.
    """
    op = getattr(T, "operator", T)
    f = np.zeros(op.n_in) if f is None else np.asarray(f, dtype=float)
    v = f.copy()
    for k in range(n):
        v = op.apply(v)
        if v[x0] == -np.inf:
            return ManeEstimate(float("inf"), None, k + 1, diverged=True)
    est = -(v[x0] - f[x0]) / n
    K = None
    cost = getattr(T, "cost", None)
    if cost is not None and np.all(np.isfinite(cost)):
        K = float(cost.max() - cost.min())
    elif isinstance(op, (MarkovOperator, EntropicOperator)):
        K = 0.0 if np.ptp(f) == 0 else None
    bound = None if K is None else (float(np.ptp(f)) + K) / n
    return ManeEstimate(float(est), bound, n)


# ---------------------------------------------------------------------------
# Peierls barrier, Aubry set
# ---------------------------------------------------------------------------

def kleene_star(B) -> np.ndarray:
    """Min-plus Kleene star (all-pairs shortest paths, empty path allowed)."""
    S = np.array(B, dtype=float)
    n = S.shape[0]
    S = np.minimum(S, np.where(np.eye(n, dtype=bool), 0.0, np.inf))
    for k in range(n):
        S = np.minimum(S, S[:, k:k + 1] + S[k:k + 1, :])
    return S


@dataclass
class Peierls:
    table: np.ndarray               # c_inf, already divided by the scale
    scaled: np.ndarray              # q * c_inf (integers on the exact path)
    scale: int                      # q
    critical: list
    star: np.ndarray                # Kleene star of the scaled tilted cost
    tilted: np.ndarray              # scaled tilted cost q C - p
    exact: bool
    ambiguous: bool = False


def _tilt(C, c):
    if isinstance(c, Fraction) and is_integral(C):
        q, p = c.denominator, c.numerator
        return q * C - p, q, True
    return C - float(c), 1, False


def peierls_barrier(T, c: Optional[Number] = None) -> Peierls:
    """Peierls barrier ``c_inf(x, y) = min_{z critical} B*(x, z) + B*(z, y)``
    for the tilted cost ``B = C - c``."""
    C = _cost_of(T)
    if c is None:
        c = mane_min_mean_cycle(C)
    if not np.isfinite(float(c)):
        raise ValidationError("Mane constant is infinite; no barrier")
    B, q, exact = _tilt(C, c)
    star = kleene_star(B)
    plus = minplus(B, star)
    diag = np.diag(plus)
    tol = 0.0 if exact else CRITICAL_TOL
    if np.any(diag < -tol):
        raise PropertyViolation("negative cycle after tilting; c is not the minimum cycle mean")
    critical = [int(x) for x in np.nonzero(np.abs(diag) <= tol)[0]]
    ambiguous = (not exact) and bool(np.any((np.abs(diag) > 0) & (np.abs(diag) <= CRITICAL_TOL)))
    n = C.shape[0]
    scaled = np.full((n, n), np.inf)
    for z in critical:
        scaled = np.minimum(scaled, star[:, z:z + 1] + star[z:z + 1, :])
    return Peierls(scaled / q, scaled, q, critical, star, B, exact, ambiguous)


def aubry_set(peierls: Peierls) -> list:
    d = np.diag(peierls.table)
    return [int(x) for x in np.nonzero(np.abs(d) <= CRITICAL_TOL)[0]]


def oracle_horizon(B) -> int:
    """A walk length past which the windowed minimum of ``B^k`` is ``c_inf``.

    For an integer tilted cost with no negative cycle, a k-edge walk that
    misses every critical node carries at least ``(k - n + 1) / n`` cycles
    of weight >= 1 on top of a simple path of weight >= ``-(n - 1) beta``,
    with ``beta`` the largest finite ``|B|``; past the returned length such
    walks cost more than any barrier value.
    """
    n = B.shape[0]
    fin = np.abs(B[np.isfinite(B)])
    beta = int(fin.max()) if fin.size else 0
    return n * (3 * (n - 1) * beta + 2) + 2 * n


def peierls_bruteforce(C, c: Number, kmax: Optional[int] = None, window: Optional[int] = None):
    """Oracle: entrywise min of ``B^k`` over ``k in [kmax - window, kmax]``.

    Defaults: ``window = n`` (long enough to pad with any critical cycle)
    and ``kmax = oracle_horizon + n``.  Returns the scaled table and scale.
    """
    C = np.asarray(C, dtype=float)
    n = C.shape[0]
    B, q, _ = _tilt(C, c)
    window = window or n
    kmax = kmax or oracle_horizon(B) + window
    P = B.copy()
    best = np.full((n, n), np.inf)
    for k in range(1, kmax + 1):
        if k > 1:
            P = minplus(P, B)
        if k >= kmax - window:
            best = np.minimum(best, P)
    return best, q


# ---------------------------------------------------------------------------
# weak KAM
# ---------------------------------------------------------------------------

@dataclass
class WeakKAM:
    u: np.ndarray
    residual: float
    iterations: int
    exact: bool = False


def weak_kam_solve(T, c: Number, x0: int = 0, max_iters: int = 10 ** 6,
                   tol: float = 1e-12) -> WeakKAM:
    """A solution of ``T u + c = u`` by limsup stabilisation + monotone iteration.

    Stage 1 follows ``v_n = T^n 0 + n c`` and takes running maxima over
    windows of ``W = 4 * (state count)`` steps until two consecutive window
    maxima agree.  Stage 2 iterates ``u <- T u + c`` from that maximum until
    the increase drops below ``tol``.  ``u`` is pinned at ``u(x0) = 0``.
    """
    op = getattr(T, "operator", T)
    cost = getattr(T, "cost", None)
    if cost is None and isinstance(op, CostOperator) and op.direction == "backward":
        cost = op.cost
    if cost is not None and isinstance(c, Fraction) and is_integral(cost):
        q, p = c.denominator, c.numerator
        step = CostOperator(q * np.asarray(cost)).apply
        shift = float(p)
        scale, exact, tol = q, True, 0.0
    else:
        step = op.apply
        shift = float(c)
        scale, exact = 1, False

    n = op.n_in
    W = 4 * n
    v = np.zeros(n)
    prev_max = None
    it = 0
    while True:
        wmax = np.full(n, -np.inf)
        for _ in range(W):
            v = step(v) + shift
            wmax = np.maximum(wmax, v)
            it += 1
        if prev_max is not None and np.all(np.abs(wmax - prev_max) <= tol) \
                or prev_max is not None and np.array_equal(wmax, prev_max):
            break
        prev_max = wmax
        if it >= max_iters:
            raise ConvergenceError("window maxima did not stabilise")
    u = wmax
    while True:
        nxt = step(u) + shift
        it += 1
        inc = np.max(np.abs(np.where(np.isfinite(nxt), nxt - u, 0.0)))
        u = nxt
        if inc <= tol:
            break
        if it >= max_iters:
            raise ConvergenceError("monotone stage did not settle")
    if np.isfinite(u[x0]):
        u = u - u[x0]
    res_scaled = step(u) + shift - u
    fin = np.isfinite(u)
    residual = float(np.max(np.abs(res_scaled[fin]))) / scale if fin.any() else 0.0
    return WeakKAM(u / scale, residual, it, exact)


def residual(T, u, c) -> float:
    op = getattr(T, "operator", T)
    r = op.apply(np.asarray(u, dtype=float)) + float(c) - u
    return float(np.max(np.abs(r[np.isfinite(u)])))


def level_slope(T, d: float, n_start: int = 50, n_end: int = 250, x0: int = 0) -> float:
    """Least-squares slope of ``n -> T^n 0 (x0) + n d`` over ``[n_start, n_end]``.

    Its sign is ``sign(d - c)``: only ``d = c`` admits bounded iterates.
    """
    op = getattr(T, "operator", T)
    v = np.zeros(op.n_in)
    ns, vals = [], []
    for k in range(1, n_end + 1):
        v = op.apply(v)
        if k >= n_start:
            ns.append(k)
            vals.append(v[x0] + k * d)
    return float(np.polyfit(ns, vals, 1)[0])


# ---------------------------------------------------------------------------
# effective operator, Mather measures, Schroedinger limit
# ---------------------------------------------------------------------------

def stationary_distribution(P) -> np.ndarray:
    P = check_stochastic(P)
    n = P.shape[0]
    A = np.vstack([P.T - np.eye(n), np.ones((1, n))])
    b = np.concatenate([np.zeros(n), [1.0]])
    m = np.linalg.lstsq(A, b, rcond=None)[0]
    m = np.clip(m, 0.0, None)
    return m / m.sum()


def effective_operator(T) -> KantorovichOperator:
    """Idempotent effective operator ``T_inf``.

    cost: max-plus with kernel ``c_inf``; entropic: ``f -> log sum e^f m``;
    Markov: ``f -> sum f m``, with ``m`` the invariant distribution.
    """
    op = getattr(T, "operator", T)
    cost = getattr(T, "cost", None)
    if cost is not None or isinstance(op, CostOperator):
        C = cost if cost is not None else op.cost
        return CostOperator(peierls_barrier(C).table)
    if isinstance(op, EntropicOperator):
        m = schrodinger_effective(op.P)[0]
        return EntropicOperator(np.tile(m, (op.n_out, 1)))
    if isinstance(op, MarkovOperator):
        m = stationary_distribution(op.P)
        return MarkovOperator(np.tile(m, (op.n_out, 1)))
    raise UnsupportedRepresentation(f"no effective operator for {op.kind!r}")


def _critical_cycle(peierls: Peierls) -> list:
    """Zero-weight cycle through the lowest critical node, lowest-index successors."""
    B, S = peierls.tilted, peierls.star
    tol = 0.0 if peierls.exact else CRITICAL_TOL
    z = peierls.critical[0]
    n = B.shape[0]
    tight = np.abs(B + S[None, :, z] - S[:, z][:, None]) <= tol   # edge on a shortest path to z
    # hop counts to z inside the tight subgraph
    hop = np.full(n, np.inf)
    hop[z] = 0
    for _ in range(n):
        for x in range(n):
            nxt = [hop[y] + 1 for y in range(n) if tight[x, y] and np.isfinite(B[x, y])]
            if nxt:
                hop[x] = min(hop[x], min(nxt)) if x != z else 0
    first = [y for y in range(n) if np.isfinite(B[z, y]) and abs(B[z, y] + S[y, z]) <= tol]
    if not first:
        raise PropertyViolation("critical node without a zero cycle")
    y = first[0]
    cycle = [z]
    while y != z:
        cycle.append(y)
        succ = [w for w in range(n) if tight[y, w] and np.isfinite(B[y, w]) and hop[w] == hop[y] - 1]
        if not succ:
            raise PropertyViolation("broken tight path")
        y = succ[0]
        if len(cycle) > n:
            raise PropertyViolation("cycle extraction looped")
    return cycle


def mather_measure(T, tol: float = 1e-9) -> Coupling:
    """Uniform coupling on a minimum-mean cycle, checked for optimality and
    support in ``D = {C(x, y) + c_inf(y, x) = c}``."""
    C = _cost_of(T)
    n = C.shape[0]
    c = mane_min_mean_cycle(C)
    if not np.isfinite(float(c)):
        raise ValidationError("no finite cycle")
    pe = peierls_barrier(C, c)
    cycle = _critical_cycle(pe)
    plan = np.zeros((n, n))
    for a, b in zip(cycle, cycle[1:] + cycle[:1]):
        plan[a, b] += 1.0 / len(cycle)
    space = T.source if isinstance(T, Transfer) else FiniteSpace(n)
    pi = Coupling(space, space, plan)
    if abs(pi.cost(C) - float(c)) > 1e-8:
        raise PropertyViolation("cycle coupling is not optimal")
    for a, b in pi.support():
        if abs(C[a, b] + pe.table[b, a] - float(c)) > tol:
            raise PropertyViolation("Mather support leaves the set D")
    return pi


def _frac_matrix(P) -> np.ndarray:
    out = np.empty(np.shape(P), dtype=object)
    for idx, v in np.ndenumerate(np.asarray(P)):
        out[idx] = v if isinstance(v, Fraction) else Fraction(float(v))
    return out


def _frac_matpow(P, k: int) -> np.ndarray:
    n = P.shape[0]
    R = np.empty((n, n), dtype=object)
    for i in range(n):
        for j in range(n):
            R[i, j] = Fraction(int(i == j))
    for _ in range(k):
        R = R.dot(P)
    return R


def schrodinger_effective(P, tol: float = 1e-12, max_iters: int = 10 ** 5,
                          probes: Optional[np.ndarray] = None, semigroup_pairs=((1, 2), (2, 3))):
    """Invariant distribution ``m`` of ``P`` by powers, plus consistency checks.

    Checks: ``T_n f -> log sum e^f m`` on probes; ``T_{n+m} = T_n o T_m``
    through exact rational kernel powers.
    """
    P = check_stochastic(P)
    Pn = P.copy()
    for it in range(1, max_iters + 1):
        m = Pn.mean(axis=0)
        if np.max(np.abs(Pn - m[None, :])) <= tol:
            break
        Pn = Pn @ P
    else:
        raise PeriodicityError("kernel powers did not converge; chain periodic or reducible")
    m = Pn[0] / Pn[0].sum()
    rng = np.random.default_rng(0)
    probes = rng.normal(size=(5, P.shape[0])) if probes is None else probes
    Tn = EntropicOperator(Pn)
    lim = np.max([np.max(np.abs(Tn(f) - np.log(np.exp(f) @ m))) for f in probes])
    Pf = _frac_matrix(P)
    semigroup_exact = all(
        np.array_equal(_frac_matpow(Pf, a + b), _frac_matpow(Pf, a).dot(_frac_matpow(Pf, b)))
        for a, b in semigroup_pairs)
    checks = {"iterations": it, "limit_error": float(lim), "semigroup_exact": bool(semigroup_exact)}
    return m, checks


# ---------------------------------------------------------------------------
# summary
# ---------------------------------------------------------------------------

@dataclass
class ErgodicSummary:
    c: Number
    u: np.ndarray
    peierls: np.ndarray
    aubry: list
    mather: Coupling
    residual: float
    methods: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        from .io import encode_matrix, encode_vector

        return {
            "c": float(self.c),
            "c_exact": str(self.c) if isinstance(self.c, Fraction) else None,
            "u": encode_vector(self.u),
            "peierls": encode_matrix(self.peierls),
            "aubry": list(self.aubry),
            "mather": encode_matrix(self.mather.weights),
            "residual": self.residual,
            "methods": self.methods,
        }


def summarize(T) -> ErgodicSummary:
    C = _cost_of(T)
    t = T if isinstance(T, Transfer) else None
    c = mane_min_mean_cycle(C)
    from .transfer import cost_transfer

    t = t or cost_transfer(C)
    wk = weak_kam_solve(t, c)
    pe = peierls_barrier(C, c)
    pi = mather_measure(t)
    methods = {"c": "karp", "u": "window-limsup+monotone", "peierls": "kleene-star",
               "mather": "critical-cycle", "exact": pe.exact, "tolerance": CRITICAL_TOL,
               "weak_kam_iterations": wk.iterations, "ambiguous": pe.ambiguous}
    return ErgodicSummary(c, wk.u, pe.table, aubry_set(pe), pi, wk.residual, methods)
