"""Primal solvers and dual ascent for transfers.

* :func:`primal_ot` -- transport LP for a cost table.
* :func:`dual_value` -- the dual supremum ``sup_g int g dnu - int T g dmu``;
  an independent LP for cost tables, :func:`dual_ascent` otherwise.
* :func:`primal_weak_bruteforce` -- grid oracle for weak costs on tiny spaces.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from itertools import combinations
from typing import Optional

import numpy as np
from scipy.optimize import linprog, minimize
from scipy.special import logsumexp

from .entropy import LogEntropy
from .operators import EntropicOperator, FunctionOperator, MarkovOperator
from .lp import InfeasibleError, LinearProgram, UnboundedError, lp_solve
from .space import Coupling, Measure, ValidationError
from .transfer import Transfer

log = logging.getLogger(__name__)


class InfeasibleTransport(InfeasibleError):
    """No coupling of finite cost exists."""


@dataclass
class DualAscentReport:
    value: float
    maximizer: np.ndarray
    iterations: int = 0
    attained: bool = True
    unbounded: bool = False
    gap: Optional[float] = None
    upper_bound: Optional[float] = None
    method: str = "ascent"
    history: list = field(default_factory=list, repr=False)


def _check_spaces(t, mu: Measure, nu: Measure):
    if mu.space.n != t.source.n or nu.space.n != t.target.n:
        raise ValidationError("measures do not live on the transfer's spaces")


# ---------------------------------------------------------------------------
# transport LP
# ---------------------------------------------------------------------------

def primal_ot(C, mu: Measure, nu: Measure, exact: bool = False) -> tuple:
    """Optimal transport value and plan for the cost table ``C``.

    Infinite entries are forbidden pairs.  Raises InfeasibleTransport when no
    finite-cost plan exists.
    """
    C = np.asarray(C, dtype=float)
    n, m = C.shape
    if mu.space.n != n or nu.space.n != m:
        raise ValidationError("cost shape does not match the measures")
    cells = [(i, j) for i in range(n) for j in range(m) if np.isfinite(C[i, j])]
    if not cells:
        raise InfeasibleTransport("every pair is forbidden")
    A = np.zeros((n + m, len(cells)))
    for k, (i, j) in enumerate(cells):
        A[i, k] = 1.0
        A[n + j, k] = 1.0
    b = np.concatenate([mu.weights, nu.weights])
    c = np.array([C[i, j] for i, j in cells])
    try:
        x, value = lp_solve(LinearProgram(c, A, b), exact=exact)
    except InfeasibleError as exc:
        raise InfeasibleTransport(str(exc)) from exc
    plan = np.zeros((n, m))
    for k, (i, j) in enumerate(cells):
        plan[i, j] = float(x[k])
    plan /= plan.sum()
    return float(value), Coupling(mu.space, nu.space, plan)


def _cost_dual_lp(C, mu: Measure, nu: Measure) -> DualAscentReport:
    """``max sum nu g - sum mu phi`` s.t. ``g_y - phi_x <= C_xy`` (finite entries)."""
    C = np.asarray(C, dtype=float)
    n, m = C.shape
    cells = [(i, j) for i in range(n) for j in range(m) if np.isfinite(C[i, j])]
    # variables: g+ (m), g- (m), phi+ (n), phi- (n), slacks (cells)
    nv = 2 * m + 2 * n + len(cells)
    A = np.zeros((len(cells), nv))
    b = np.zeros(len(cells))
    for k, (i, j) in enumerate(cells):
        A[k, j] = 1.0
        A[k, m + j] = -1.0
        A[k, 2 * m + i] = -1.0
        A[k, 2 * m + n + i] = 1.0
        A[k, 2 * m + 2 * n + k] = 1.0
        b[k] = C[i, j]
    obj = np.concatenate([-nu.weights, nu.weights, mu.weights, -mu.weights, np.zeros(len(cells))])
    try:
        x, val = lp_solve(LinearProgram(obj, A, b))
    except UnboundedError:
        return DualAscentReport(np.inf, np.zeros(m), attained=False, unbounded=True, method="lp")
    g = x[:m] - x[m:2 * m]
    return DualAscentReport(-float(val), g - g[0], method="lp", attained=True)


# ---------------------------------------------------------------------------
# dual ascent
# ---------------------------------------------------------------------------

def _translation_weight(op) -> float:
    z = np.zeros(op.n_in)
    return float(np.mean(op.apply(z + 1.0) - op.apply(z)))


def _supergradient(op, g, mu, nu):
    sig = op.maximizers(g)
    if sig is None:
        h = 1e-7
        base = op.apply(g)
        sig = np.empty((op.n_out, op.n_in))
        for j in range(op.n_in):
            e = np.zeros(op.n_in)
            e[j] = h
            sig[:, j] = (op.apply(g + e) - base) / h
    return nu.weights - mu.weights @ sig


def _gibbs_newton(E: LogEntropy, mu: Measure, nu: Measure, max_iters: int) -> DualAscentReport:
    w = mu.weights @ E.kernel
    if np.any((nu.weights > 0) & (w == 0)):
        return DualAscentReport(np.inf, np.zeros(len(w)), attained=False, unbounded=True,
                                method="newton")
    live = w > 0
    logw = np.full(len(w), -np.inf)
    logw[live] = np.log(w[live])
    g = np.zeros(len(w))

    def phi(g):
        return float(nu.weights[live] @ g[live] - logsumexp(g[live] + logw[live]))

    val = phi(g)
    history = [val]
    it = 0
    for it in range(1, max_iters + 1):
        z = g[live] + logw[live]
        p = np.exp(z - logsumexp(z))
        grad = nu.weights[live] - p
        H = np.diag(p) - np.outer(p, p)
        step = np.linalg.lstsq(H + 1e-14 * np.eye(len(p)), grad, rcond=None)[0]
        t = 1.0
        while True:
            cand = g.copy()
            cand[live] = g[live] + t * step
            cv = phi(cand)
            if cv >= val - 1e-15 or t < 1e-8:
                break
            t /= 2
        if cv < val:
            break
        done = cv - val < 1e-15 and np.max(np.abs(grad)) < 1e-9
        g, val = cand, cv
        history.append(val)
        if done or np.max(np.abs(grad)) < 1e-13:
            break
    g = np.where(live, g, -np.inf)
    attained = bool(np.all(nu.weights[live] > 0))
    return DualAscentReport(val, g, iterations=it, attained=attained, method="newton",
                            history=history)


def _linear_dual(op: MarkovOperator, mu: Measure, nu: Measure) -> DualAscentReport:
    """``sup_g int g d(nu - mu P)``: zero when ``nu = mu P``, else ``+inf``."""
    resid = nu.weights - mu.weights @ op.P
    if np.max(np.abs(resid)) <= 1e-12:
        return DualAscentReport(0.0, np.zeros(op.n_in), method="linear", gap=0.0)
    return DualAscentReport(np.inf, resid, attained=False, unbounded=True, method="linear")


def _smooth_ascent(op: EntropicOperator, mu: Measure, nu: Measure,
                   max_iters: int, blowup: float = 1e4) -> DualAscentReport:
    """BFGS on the smooth concave objective restricted to the support of ``nu``.

    Off that support the supremum sends ``g`` to ``-inf``, which only removes
    kernel mass, so the reduced log-sum-exp is optimised instead; it is pinned
    at the first supported point and its softmax gives the exact gradient.
    """
    m = op.n_in
    S = np.flatnonzero(nu.weights > 0)
    X = np.flatnonzero(mu.weights > 0)
    K = op.P[np.ix_(X, S)]
    w, b = mu.weights[X], nu.weights[S]
    if np.any(K.sum(axis=1) == 0):
        # some x in supp mu reaches nothing in supp nu: the value is +inf
        return DualAscentReport(np.inf, np.zeros(m), attained=False, unbounded=True, method="bfgs")
    with np.errstate(divide="ignore"):
        logK = np.log(K)

    def neg(z):
        h = np.concatenate([[0.0], z])
        rows = h[None, :] + logK
        lse = logsumexp(rows, axis=1)
        soft = np.exp(rows - lse[:, None])
        val = b @ h - w @ lse
        grad = b - w @ soft
        return -val, -grad[1:]

    g = np.full(m, -np.inf)
    if len(S) == 1:
        g[S] = 0.0
        return DualAscentReport(float(-neg(np.zeros(0))[0]), g, attained=(m == 1),
                                method="bfgs", gap=0.0)
    res = minimize(neg, np.zeros(len(S) - 1), jac=True, method="BFGS",
                   options={"gtol": 1e-12, "maxiter": max_iters})
    g[S] = np.concatenate([[0.0], res.x])
    unbounded = bool(np.max(np.abs(g[S])) > blowup)
    return DualAscentReport(np.inf if unbounded else float(-res.fun), g, iterations=int(res.nit),
                            attained=not unbounded and len(S) == m, unbounded=unbounded,
                            method="bfgs",
                            gap=float(np.max(np.abs(res.jac))) if res.jac.size else 0.0)


def dual_ascent(T, mu: Measure, nu: Measure, max_iters: int = 200,
                radius: Optional[float] = None, polish: bool = True) -> DualAscentReport:
    """Maximise ``Phi(g) = int g dnu - int T g dmu`` over potentials ``g``.

    Supergradient ascent from ``g = 0`` with steps ``a / sqrt(t)``, ``a = 1``,
    translation-pinned at ``g[0] = 0``; then (``polish=True``) a cutting-plane
    pass that reuses every supergradient as a cut on the box ``|g| <= radius``
    and certifies an upper bound.  A maximiser pushed to the box boundary
    with a still-growing value is reported as ``unbounded`` (value ``+inf``
    trend).  ``LogEntropy`` instances use exact Newton steps on the Gibbs form.
    """
    if isinstance(T, LogEntropy):
        _check_spaces(T, mu, nu)
        return _gibbs_newton(T, mu, nu, max_iters)
    op = getattr(T, "operator", T)
    if isinstance(T, Transfer):
        _check_spaces(T, mu, nu)
    m = op.n_in
    if isinstance(op, MarkovOperator):
        return _linear_dual(op, mu, nu)
    if isinstance(op, EntropicOperator):
        return _smooth_ascent(op, mu, nu, max_iters)

    weight = _translation_weight(op)
    if abs(weight - 1.0) > 1e-9:
        # Phi(g - k) = Phi(g) + k (weight - 1): unbounded in the constant direction
        return DualAscentReport(np.inf, np.zeros(m), attained=False, unbounded=True,
                                method="translation")

    def phi(g):
        tg = op.apply(g)
        return nu.integrate(g) - mu.integrate(tg)

    g = np.zeros(m)
    cur = phi(g)
    best_val, best_g = cur, g.copy()
    cuts = []
    history = [cur]
    a = 1.0
    it = 0
    for it in range(1, max_iters + 1):
        s = _supergradient(op, g, mu, nu)
        if np.isfinite(cur):
            cuts.append((g.copy(), cur, s.copy()))
        if np.max(np.abs(s)) < 1e-14:
            break
        g = g + a / np.sqrt(it) * s
        g = g - g[0]
        nxt = phi(g)
        history.append(nxt)
        if nxt > best_val:
            best_val, best_g = nxt, g.copy()
        if abs(nxt - cur) < 1e-10:
            cur = nxt
            break
        cur = nxt
    report = DualAscentReport(best_val, best_g, iterations=it, method="supergradient",
                              history=history)
    if op.maximizers(best_g) is None:
        # finite-difference slopes are not valid cuts at kinks
        polish = False
    if not polish or not cuts:
        return report
    if radius is None:
        radius = 4.0 * (10.0 + float(np.max(np.abs(best_g))) + abs(best_val))
    return _kelley(op, phi, mu, nu, cuts, report, radius)


def _kelley(op, phi, mu, nu, cuts, report, radius, max_cuts: int = 400, tol: float = 1e-10):
    m = op.n_in
    best_val, best_g = report.value, report.maximizer

    def solve(cuts, R):
        # variables (g_1..g_{m-1}, t); maximise t
        G = np.array([c[0] for c in cuts])
        V = np.array([c[1] for c in cuts])
        S = np.array([c[2] for c in cuts])
        A = np.hstack([-S[:, 1:], np.ones((len(cuts), 1))])
        b = V - np.einsum("ij,ij->i", S, G)
        bounds = [(-R, R)] * (m - 1) + [(None, None)]
        res = linprog(np.concatenate([np.zeros(m - 1), [-1.0]]), A_ub=A, b_ub=b,
                      bounds=bounds, method="highs")
        if res.status != 0:
            return None, np.inf
        return np.concatenate([[0.0], res.x[:-1]]), -res.fun

    def run(R, best_val, best_g):
        ub = np.inf
        g = best_g
        for _ in range(max_cuts):
            g, ub = solve(cuts, R)
            if g is None:
                return best_val, best_g, np.inf, None
            v = phi(g)
            if v > best_val:
                best_val, best_g = v, g.copy()
            if ub - best_val <= tol * max(1.0, abs(best_val)):
                break
            cuts.append((g.copy(), v, _supergradient(op, g, mu, nu)))
        return best_val, best_g, ub, g

    if m == 1:
        return DualAscentReport(phi(np.zeros(1)), np.zeros(1), iterations=report.iterations,
                                method="supergradient+kelley", gap=0.0, history=report.history)
    val, g, ub, last = run(radius, best_val, best_g)
    on_box = bool(np.max(np.abs(g)) >= radius * (1 - 1e-9))
    unbounded = False
    if on_box:
        val2, g2, ub2, _ = run(4.0 * radius, val, g)
        if val2 > val + 1e-6:
            unbounded = True
        val, g, ub = val2, g2, ub2
    return DualAscentReport(val, g, iterations=report.iterations + len(cuts),
                            attained=not on_box, unbounded=unbounded,
                            gap=float(ub - val) if np.isfinite(ub) else None,
                            upper_bound=float(ub), method="supergradient+kelley",
                            history=report.history)


def dual_value(T, mu: Measure, nu: Measure, **kwargs) -> DualAscentReport:
    """Dual value of a transfer: exact LP for cost tables, ascent otherwise."""
    if isinstance(T, Transfer) and T.cost is not None:
        _check_spaces(T, mu, nu)
        return _cost_dual_lp(T.cost, mu, nu)
    return dual_ascent(T, mu, nu, **kwargs)


# ---------------------------------------------------------------------------
# brute-force weak transport
# ---------------------------------------------------------------------------

def simplex_grid(dim: int, step: float) -> np.ndarray:
    """All points of the probability simplex in R^dim with coordinates k * step."""
    K = int(round(1.0 / step))
    pts = []
    for bars in combinations(range(K + dim - 1), dim - 1):
        prev = -1
        row = []
        for b in bars:
            row.append(b - prev - 1)
            prev = b
        row.append(K + dim - 2 - prev)
        pts.append(row)
    return np.array(pts, dtype=float) / K


def primal_weak_bruteforce(T: Transfer, mu: Measure, nu: Measure, step: float = 1e-2,
                           refine_step: float = 1e-4, max_size: int = 3,
                           refine_rounds: int = 3) -> float:
    """``min sum_x mu(x) c(x, pi_x)`` over disintegrations with ``sum mu(x) pi_x = nu``.

    The first free kernels scan a simplex grid, the last is solved from the
    marginal constraint; local passes at ``refine_step`` follow until no
    kernel improves.  Every candidate is feasible, so the result is an upper
    bound on the primal value.
    """
    if T.weak_cost is None:
        raise ValidationError("transfer has no weak cost")
    nx, ny = T.source.n, T.target.n
    if nx > max_size or ny > max_size:
        raise ValidationError(f"brute force limited to {max_size} points per side")
    c = T.weak_cost
    xs = [x for x in range(nx) if mu.weights[x] > 0]
    w = mu.weights[xs]
    target = nu.weights
    last = xs[-1]
    free = xs[:-1]

    def last_kernel(partial):            # partial: (batch, ny)
        rest = (target[None, :] - partial) / w[-1]
        ok = np.all(rest >= -1e-12, axis=1)
        return np.clip(rest, 0.0, None), ok

    def total(kernels):                 # list of (batch, ny) per free x
        partial = np.zeros((len(kernels[0]) if kernels else 1, ny))
        val = np.zeros(len(partial))
        for k, x in enumerate(free):
            partial = partial + w[k] * kernels[k]
            val = val + w[k] * c(x, kernels[k])
        rest, ok = last_kernel(partial)
        val = val + w[-1] * c(last, rest)
        return np.where(ok, val, np.inf)

    if not free:
        return float(c(last, target[None, :])[0])

    grid = simplex_grid(ny, step)
    best, best_k = np.inf, None
    if len(free) == 1:
        vals = total([grid])
        k = int(np.argmin(vals))
        best, best_k = vals[k], [grid[k]]
    else:
        # a kernel may not push more mass than nu has anywhere
        outer = grid[np.all(w[0] * grid <= target + 1e-12, axis=1)]
        for a in outer:
            inner = grid[np.all(w[0] * a + w[1] * grid <= target + 1e-12, axis=1)]
            if not len(inner):
                continue
            A = np.repeat(a[None, :], len(inner), axis=0)
            vals = total([A, inner])
            k = int(np.argmin(vals))
            if vals[k] < best:
                best, best_k = vals[k], [a, inner[k]]

    if best_k is None or not np.isfinite(best):
        return float(best)
    # refinement passes, kernel by kernel, on a local lattice
    span = int(round(step / refine_step))
    offsets = np.arange(-span, span + 1) * refine_step
    dirs = [np.eye(ny)[j] - np.eye(ny)[-1] for j in range(ny - 1)]
    for k in [k for _ in range(refine_rounds) for k in range(len(free))]:
        if ny == 1:
            break
        mesh = np.array(np.meshgrid(*([offsets] * (ny - 1)), indexing="ij")).reshape(ny - 1, -1).T
        cand = best_k[k][None, :] + mesh @ np.array(dirs)
        cand = cand[np.all(cand >= -1e-15, axis=1)]
        cand = np.clip(cand, 0.0, None)
        kernels = [np.repeat(best_k[i][None, :], len(cand), axis=0) for i in range(len(free))]
        kernels[k] = cand
        vals = total(kernels)
        j = int(np.argmin(vals))
        if vals[j] < best:
            best = vals[j]
            best_k[k] = cand[j]
    return float(best)


def forward_dual_value(T: Transfer, mu: Measure, nu: Measure, **kwargs) -> DualAscentReport:
    """``sup_f int T^+ f dnu - int f dmu`` through the forward operator.

    With ``S h = -T^+(-h)`` (a backward-type operator from the target to the
    source) this is the ascent problem for ``S`` with the measures swapped.
    """
    if T.forward is None:
        raise ValidationError("transfer has no forward operator")
    fwd = T.forward
    S = FunctionOperator(lambda h: -fwd.apply(-np.asarray(h, dtype=float)),
                         fwd.n_out, fwd.n_in, kind="forward-mirror",
                         maximizer_fn=lambda h: fwd.maximizers(-h))
    return dual_ascent(S, nu, mu, **kwargs)
