"""The acceptance suite: ten end-to-end checks with fixed seeds.

Each ``criterion_k`` returns a :class:`CriterionResult`; :func:`run_all`
runs them in order and is what ``lintransfer selftest`` calls.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable

import numpy as np

from . import ergodic as erg
from .duality import dual_ascent, dual_value, primal_ot, primal_weak_bruteforce
from .entropy import LogEntropy
from .gallery import GallerySpec, make_transfer
from .inequalities import maurey_dual_check, primal_inequality_scan, shipped_instances
from .operators import CostOperator, EntropicOperator, MarkovOperator, minplus
from .regularize import c_epsilon_curve, default_ladder, lipschitz_defect, regularize
from .space import FiniteSpace, Measure, kl_divergence
from .stochastic import (
    ControlledChain,
    bellman_operator,
    domination_sup,
    occupation_lp,
    relative_value_iteration,
)
from .transfer import Transfer, convolve, cost_transfer, metric_transfer

SELFTEST_BUDGET = 60.0


@dataclass
class CriterionResult:
    number: int
    name: str
    passed: bool
    detail: str
    seconds: float = 0.0

    def line(self) -> str:
        tag = "PASS" if self.passed else "FAIL"
        return f"[{tag}] criterion {self.number:2d} {self.name}: {self.detail} ({self.seconds:.2f}s)"


def _rng(seed: int) -> np.random.Generator:
    return np.random.default_rng(seed)


def random_int_costs(count: int, n: int, seed: int, hi: int = 10) -> list:
    rng = _rng(seed)
    return [rng.integers(0, hi + 1, (n, n)).astype(float) for _ in range(count)]


def cycle3() -> np.ndarray:
    return np.array([[1.0, 0.0, 5.0], [5.0, 1.0, 0.0], [0.0, 5.0, 1.0]])


def heat_kernel(N: int) -> np.ndarray:
    P = np.zeros((N, N))
    for i in range(N):
        P[i, i] += 0.5
        P[i, (i + 1) % N] += 0.25
        P[i, (i - 1) % N] += 0.25
    return P


# ---------------------------------------------------------------------------


def criterion_1() -> tuple:
    """Karp, diagonal LP and iteration agree on random integer matrices."""
    t0 = time.perf_counter()
    worst_gap = 0.0
    for C in random_int_costs(50, 6, seed=1):
        a, b = erg.mane_min_mean_cycle(C), erg.mane_diag_lp(C)
        if not (isinstance(a, Fraction) and a == b):
            return False, f"Karp {a} != LP {b}"
        est = erg.mane_iterative(cost_transfer(C), n=1000)
        if abs(est.value - float(a)) > est.bound:
            return False, f"iterate off by {abs(est.value - float(a))} > {est.bound}"
        worst_gap = max(worst_gap, abs(est.value - float(a)) / est.bound)
    dt = time.perf_counter() - t0
    return dt < 5.0, f"50 instances exact, worst iterate/bound {worst_gap:.3f}, {dt:.2f}s < 5s"


def _weak_kam_instances() -> list:
    out = [("cycle3", cost_transfer(cycle3()))]
    out += [(f"random{k}", cost_transfer(C)) for k, C in enumerate(random_int_costs(20, 6, seed=2))]
    grid = FiniteSpace.line(np.arange(11.0))
    out.append(("power2", make_transfer(GallerySpec("power_cost", grid, {"p": 2}))))
    out.append(("metric", metric_transfer(grid)))
    X = FiniteSpace(5)
    out.append(("heat", Transfer(MarkovOperator(heat_kernel(5)), X, X, kind="markov")))
    P = _rng(3).dirichlet(np.ones(4), 4)
    Y = FiniteSpace(4)
    out.append(("entropic", Transfer(EntropicOperator(P), Y, Y, kind="entropic")))
    return out


def criterion_2() -> tuple:
    """Weak KAM residuals and the slope test separating ``c`` from ``c +- 0.1``."""
    worst = 0.0
    for name, T in _weak_kam_instances():
        c = erg.mane_min_mean_cycle(T.cost) if T.cost is not None else 0.0
        wk = erg.weak_kam_solve(T, c)
        r = erg.residual(T, wk.u, c)
        worst = max(worst, r)
        if r > 1e-9:
            return False, f"{name}: residual {r:.3e}"
        for d in (float(c) - 0.1, float(c) + 0.1):
            s = erg.level_slope(T, d)
            if np.sign(s) != np.sign(d - float(c)) or abs(s - (d - float(c))) > 0.05:
                return False, f"{name}: slope {s} at d={d} does not certify d != c"
    for N, V in ((5, [0, 1, 1, 0.5, 2]), (7, None)):
        ch = ControlledChain.lazy(N, potential=V)
        rvi = relative_value_iteration(ch)
        worst = max(worst, rvi.residual)
        if rvi.residual > 1e-9:
            return False, f"chain N={N}: residual {rvi.residual:.3e}"
    return True, f"max residual {worst:.2e}; slope signs certify d != c on every instance"


def criterion_3() -> tuple:
    """Kleene-star barrier equals the brute-force min of tilted powers."""
    rng = _rng(4)
    count = 0
    for t in range(60):
        n = int(rng.integers(2, 7))
        C = rng.integers(0, 11, (n, n)).astype(float)
        if t % 3 == 2:                     # sparse, kept strongly connected by a cycle
            C[rng.random((n, n)) < 0.4] = np.inf
            for i in range(n):
                C[i, (i + 1) % n] = float(rng.integers(0, 11))
        c = erg.mane_min_mean_cycle(C)
        pe = erg.peierls_barrier(C, c)
        bf, _ = erg.peierls_bruteforce(C, c)
        short, _ = erg.peierls_bruteforce(C, c, kmax=3 * n * n, window=n)
        if not np.array_equal(pe.scaled, bf):
            return False, f"instance {t}: star and brute force differ"
        if not np.array_equal(pe.scaled, short):
            return False, f"instance {t}: star and the k <= 3n^2 window differ"
        S = pe.scaled
        if np.any(minplus(S, S) < S):
            return False, f"instance {t}: triangle law fails"
        A = erg.aubry_set(pe)
        fac = np.full_like(S, np.inf)
        for z in A:
            fac = np.minimum(fac, S[:, z:z + 1] + S[z:z + 1, :])
        if not np.array_equal(fac, S) or np.any(np.diag(S)[A] != 0):
            return False, f"instance {t}: Aubry factorisation fails"
        count += 1
    return True, (f"{count} integer instances (n <= 6) equal both oracles (k <= 3n^2 window and "
                  f"the provable horizon) exactly; triangle and factorisation exact")


def power_cost_composition(f, n: int, p: float = 2.0) -> np.ndarray:
    """n-fold composition through intermediate grids of spacing ``1 / n``."""
    xs = np.arange(11.0)
    fine = np.arange(0, 10 * n + 1) / n
    first = CostOperator(np.abs(xs[:, None] - fine[None, :]) ** p)
    mid = CostOperator(np.abs(fine[:, None] - fine[None, :]) ** p)
    last = CostOperator(np.abs(fine[:, None] - xs[None, :]) ** p)
    v = last(f)
    for _ in range(n - 2):
        v = mid(v)
    return first(v) if n >= 2 else CostOperator(np.abs(xs[:, None] - xs[None, :]) ** p)(f)


def criterion_4() -> tuple:
    """Power cost ``p = 2``: n-fold composition equals the closed form."""
    xs = np.arange(11.0)
    spec = GallerySpec("power_cost", FiniteSpace.line(xs), {"p": 2})
    rng = _rng(5)
    worst = 0.0
    for n in range(1, 17):
        for _ in range(3):
            f = rng.normal(scale=5.0, size=11)
            comp = power_cost_composition(f, n)
            closed = np.max(f[None, :] - (xs[:, None] - xs[None, :]) ** 2 / n, axis=1)
            worst = max(worst, float(np.max(np.abs(comp - closed))))
    c = erg.mane_min_mean_cycle(make_transfer(spec).cost)
    ok = worst <= 1e-12 and c == 0
    return ok, f"max |composition - closed form| {worst:.1e} for n <= 16; c(T_2) = {c}"


def _weak_gallery() -> list:
    X = FiniteSpace.line([0.0, 1.0, 2.0])
    P = _rng(6).dirichlet(np.ones(3), 3)
    return [
        ("markov", make_transfer(GallerySpec("markov", X, {"kernel": P}))),
        ("heat", make_transfer(GallerySpec("heat", X, {"kernel": heat_kernel(3)}))),
        ("entropic", make_transfer(GallerySpec("entropic", X, {"kernel": P}))),
        ("balayage_1d", make_transfer(GallerySpec("balayage_1d", X, {}))),
        ("martingale_1d", make_transfer(GallerySpec("martingale_1d", X, {}))),
        ("variance_1d", make_transfer(GallerySpec("variance_1d", X, {}))),
        ("marton", make_transfer(GallerySpec("marton", X, {}))),
        ("power_cost", make_transfer(GallerySpec("power_cost", X, {"p": 2}))),
        ("pushforward", make_transfer(GallerySpec("pushforward", X, {"sigma": [1, 2, 0]}))),
    ]


def criterion_5() -> tuple:
    """LP duality on random transport problems; weak primal >= dual ascent."""
    rng = _rng(7)
    X = FiniteSpace(5)
    worst = 0.0
    for _ in range(100):
        C = rng.uniform(0, 10, (5, 5))
        mu = Measure(X, rng.dirichlet(np.ones(5)))
        nu = Measure(X, rng.dirichlet(np.ones(5)))
        gap = abs(primal_ot(C, mu, nu)[0] - dual_value(cost_transfer(C), mu, nu).value)
        worst = max(worst, gap)
    if worst > 1e-8:
        return False, f"LP duality gap {worst:.2e}"
    Y = FiniteSpace.line([0.0, 1.0, 2.0])
    pairs = [(Measure(Y, [0, 1, 0]), Measure(Y, [0.5, 0, 0.5])),
             (Measure(Y, [0.2, 0.5, 0.3]), Measure(Y, [0.3, 0.3, 0.4])),
             (Measure(Y, [0.6, 0.1, 0.3]), Measure(Y, [0.1, 0.8, 0.1]))]
    checked = 0
    for name, T in _weak_gallery():
        for mu, nu in pairs:
            rep = dual_ascent(T, mu, nu)
            primal = primal_weak_bruteforce(T, mu, nu)
            dual = np.inf if rep.unbounded else rep.value
            rng_scale = 1.0 if T.cost is None else max(float(np.ptp(T.cost[np.isfinite(T.cost)])), 1.0)
            if np.isfinite(dual) and primal < dual - 1e-3 * rng_scale:
                return False, f"{name}: primal {primal} below dual {dual}"
            if np.isinf(dual) and np.isfinite(primal):
                return False, f"{name}: dual unbounded but primal finite"
            checked += 1
    return True, f"LP gap {worst:.1e} on 100 instances; {checked} weak (kind, pair) checks"


def criterion_6() -> tuple:
    """Gibbs identity, exact semigroup law, effective entropic and heat limits."""
    rng = _rng(8)
    X = FiniteSpace(4)
    E = LogEntropy.identity(X)
    worst = 0.0
    for _ in range(50):
        mu = Measure(X, rng.dirichlet(np.ones(4)))
        nu = Measure(X, rng.dirichlet(np.ones(4)))
        worst = max(worst, abs(dual_ascent(E, mu, nu).value - kl_divergence(nu, mu)))
    if worst > 1e-6:
        return False, f"Gibbs identity off by {worst:.2e}"
    P = np.array([[0.5, 0.25, 0.25], [0.125, 0.75, 0.125], [0.25, 0.25, 0.5]])
    m, checks = erg.schrodinger_effective(P)
    if not checks["semigroup_exact"]:
        return False, "semigroup law fails"
    Y = FiniteSpace(3)
    T_inf = Transfer(erg.effective_operator(Transfer(EntropicOperator(P), Y, Y)), Y, Y)
    eff = 0.0
    for _ in range(5):
        mu = Measure(Y, rng.dirichlet(np.ones(3)))
        nu = Measure(Y, rng.dirichlet(np.ones(3)))
        eff = max(eff, abs(dual_ascent(T_inf, mu, nu).value - kl_divergence(nu, Measure(Y, m))))
    if eff > 1e-6:
        return False, f"effective entropic transfer off by {eff:.2e}"
    Z = FiniteSpace(6)
    H = Transfer(MarkovOperator(heat_kernel(6)), Z, Z, kind="heat")
    c = erg.mane_iterative(H, n=200).value
    f = rng.normal(size=6)
    mean_err = float(np.max(np.abs(erg.effective_operator(H)(f) - f.mean())))
    ok = c == 0 and mean_err <= 1e-12
    return ok, (f"Gibbs {worst:.1e}; semigroup exact; effective {eff:.1e}; "
                f"heat c = {float(c) + 0.0}, |T_inf f - mean| {mean_err:.1e}")


def random_chains(count: int = 20, seed: int = 9) -> list:
    rng = _rng(seed)
    out = []
    for k in range(count):
        N = int(rng.integers(2, 13))
        ctrl = sorted(rng.choice([-2, -1, 0, 1, 2], size=int(rng.integers(1, 5)), replace=False).tolist())
        out.append(ControlledChain.lazy(N, ctrl, rng.uniform(0, 2, N)))
    return out


def criterion_7() -> tuple:
    """RVI vs occupation LP, invariance, domination bisection."""
    gap = inv = dom = 0.0
    for ch in random_chains():
        rvi = relative_value_iteration(ch)
        occ = occupation_lp(ch)
        gap = max(gap, abs(rvi.c - occ.c))
        inv = max(inv, occ.invariance_residual)
        dom = max(dom, abs(domination_sup(ch, rvi.u) - rvi.c))
    ok = gap <= 1e-7 and inv <= 1e-9 and dom <= 1e-6
    return ok, f"|c_RVI - c_LP| {gap:.1e}; invariance {inv:.1e}; bisection {dom:.1e}"


def criterion_8() -> tuple:
    """Regularisation: ``T_eps <= T``, monotone ``c(T_eps)``, equality cases."""
    X = FiniteSpace.line([0.0, 1.0, 2.0])
    from .duality import simplex_grid

    probes = [Measure(X, w) for w in simplex_grid(3, 0.25)]
    bases = {"cycle3": cost_transfer(cycle3(), X, X),
             "mixed": cost_transfer(np.array([[3.0, 1, 4], [1, 5, 9], [2, 6, 5]]), X, X),
             "metric": metric_transfer(X)}
    for name, T in bases.items():
        for eps in (1.0, 0.5, 0.1):
            Te = regularize(T, eps)
            for mu in probes:
                for nu in probes:
                    if Te(mu, nu) > T(mu, nu) + 1e-9:
                        return False, f"{name}: T_eps > T at eps={eps}"
        curve = c_epsilon_curve(T)
        if any(v != erg.mane_min_mean_cycle(T.cost) for v in curve):
            return False, f"{name}: c(T_eps) != c(T) although inf-diagonal = inf"
    L = FiniteSpace.line([0.0, 1.0])
    strict = cost_transfer(np.array([[2.0, 0.0], [3.0, 2.0]]), L, L)
    curve = [float(v) for v in c_epsilon_curve(strict)]
    if not curve[0] < curve[-1] == 1.5:
        return False, f"strict instance curve {curve}"
    mu, nu = Measure(X, [1, 0, 0]), Measure(X, [0, 0, 1])
    T = bases["mixed"]
    fine = regularize(T, default_ladder()[-1])(mu, nu)
    lip = max(lipschitz_defect(g, X.metric, 0.5) for g in _rng(10).normal(size=(50, 3)))
    ok = abs(fine - T(mu, nu)) <= 1e-6 and lip <= 1e-12
    return ok, (f"T_eps <= T on {len(probes) ** 2} pairs x 3 eps x 3 bases; "
                f"strict curve {curve[0]} -> {curve[-1]}; finest-eps gap {abs(fine - T(mu, nu)):.1e}")


def axiom_defect(op, probes: int = 200, seed: int = 11, scale: float = 3.0) -> float:
    """Largest violation of monotonicity, convexity and constant translation."""
    rng = _rng(seed)
    worst = 0.0
    for _ in range(probes):
        f = rng.normal(scale=scale, size=op.n_in)
        h = rng.normal(scale=scale, size=op.n_in)
        g = f + np.abs(rng.normal(size=op.n_in))
        k = float(rng.normal(scale=scale))
        t = float(rng.uniform())
        Tf, Tg, Th = op(f), op(g), op(h)
        worst = max(worst, float(np.max(Tf - Tg)))
        worst = max(worst, float(np.max(op(t * f + (1 - t) * h) - t * Tf - (1 - t) * Th)))
        worst = max(worst, float(np.max(np.abs(op(f + k) - Tf - k))))
    return worst


def operator_zoo() -> list:
    X = FiniteSpace.line([0.0, 1.0, 2.0])
    ops = [(name, T.operator) for name, T in _weak_gallery()]
    ops.append(("metric", metric_transfer(X).operator))
    ops.append(("cost", cost_transfer(cycle3(), X, X).operator))
    gal = dict(_weak_gallery())
    ops.append(("composite", convolve(gal["markov"], gal["balayage_1d"]).operator))
    ops.append(("composite-marton", convolve(gal["marton"], gal["entropic"]).operator))
    ops.append(("regularized", regularize(cost_transfer(cycle3(), X, X), 0.5).operator))
    ops.append(("regularized-markov", regularize(gal["markov"], 0.5).operator))
    ops.append(("bellman", bellman_operator(ControlledChain.lazy(5, potential=[0, 1, 0, 2, 1]))))
    ops.append(("effective-cost", erg.effective_operator(cost_transfer(cycle3(), X, X))))
    ops.append(("effective-entropic", erg.effective_operator(gal["entropic"])))
    ops.append(("effective-markov", erg.effective_operator(gal["heat"])))
    return ops


def criterion_9() -> tuple:
    """Kantorovich axioms on every operator family; exact idempotency."""
    worst = 0.0
    for name, op in operator_zoo():
        d = axiom_defect(op)
        worst = max(worst, d)
        if d > 1e-9:
            return False, f"{name}: axiom defect {d:.2e}"
    rng = _rng(12)
    for C in random_int_costs(10, 5, seed=13):
        pe = erg.peierls_barrier(C)
        S = pe.scaled
        if not np.array_equal(minplus(S, S), S):
            return False, "effective kernel is not idempotent"
        Top = CostOperator(S)
        for _ in range(20):
            f = rng.integers(-20, 21, 5).astype(float)
            if not np.array_equal(Top(Top(f)), Top(f)):
                return False, "T_inf o T_inf != T_inf"
    grid = FiniteSpace.line(np.arange(7.0))
    D = grid.metric
    M = metric_transfer(grid).operator
    if not np.array_equal(minplus(D, D), D):
        return False, "metric cost is not idempotent"
    for _ in range(50):
        f = rng.integers(-20, 21, 7).astype(float)
        if not np.array_equal(M(M(f)), M(f)):
            return False, "metric operator is not idempotent"
    return True, f"{len(operator_zoo())} operators, max defect {worst:.1e}; idempotency exact"


def criterion_10() -> tuple:
    """Dual implies primal on the shipped inequality instances; Pinsker pair."""
    verdicts = {}
    for spec in shipped_instances():
        d = maurey_dual_check(spec)
        p = primal_inequality_scan(spec)
        verdicts[spec.name] = (d, p)
        if d.passes and not p.passes:
            return False, f"{spec.name}: dual passes but primal violated by {p.max_violation}"
        if not d.passes and p.passes:
            return False, f"{spec.name}: dual witness product {d.worst_product} without a primal violation"
    dp, pp = verdicts["pinsker-pass"]
    df, pf = verdicts["pinsker-fail"]
    if not (dp.passes and pp.passes and not df.passes and not pf.passes):
        return False, "Pinsker pair does not split into pass / fail"
    consistent = abs(df.worst_log_product - pf.max_violation) <= 1e-3
    return consistent, (f"{len(verdicts)} instances consistent; Pinsker fail witness "
                        f"log-product {df.worst_log_product:.4f} vs primal {pf.max_violation:.4f}")


CRITERIA: list = [
    (1, "Mane three-route agreement", criterion_1),
    (2, "weak KAM residual and level uniqueness", criterion_2),
    (3, "Peierls oracle equivalence", criterion_3),
    (4, "power cost closed form", criterion_4),
    (5, "LP and weak duality", criterion_5),
    (6, "entropic and Schroedinger limits", criterion_6),
    (7, "stochastic RVI / occupation LP", criterion_7),
    (8, "regularisation laws", criterion_8),
    (9, "operator axiom suite", criterion_9),
    (10, "inequality implication and selftest budget", criterion_10),
]


def run_criterion(number: int, name: str, fn: Callable) -> CriterionResult:
    t0 = time.perf_counter()
    try:
        ok, detail = fn()
    except Exception as exc:  # a crash is a failure, reported not raised
        ok, detail = False, f"{type(exc).__name__}: {exc}"
    return CriterionResult(number, name, bool(ok), detail, time.perf_counter() - t0)


def run_all(echo: Callable[[str], None] | None = None) -> list:
    """Run every criterion; the last also enforces the total time budget."""
    t0 = time.perf_counter()
    results = []
    for number, name, fn in CRITERIA:
        res = run_criterion(number, name, fn)
        if number == CRITERIA[-1][0]:
            total = time.perf_counter() - t0
            if total >= SELFTEST_BUDGET:
                res.passed = False
            res.detail += f"; suite total {total:.1f}s (budget {SELFTEST_BUDGET:.0f}s)"
        results.append(res)
        if echo:
            echo(res.line())
    return results
