import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings

from lintransfer import ergodic as erg
from lintransfer.acceptance import axiom_defect
from lintransfer.duality import dual_ascent, primal_ot
from lintransfer.gallery import GallerySpec, make_transfer
from lintransfer.operators import EntropicOperator, minplus
from lintransfer.space import FiniteSpace, Measure, kl_divergence, marginals
from lintransfer.transfer import Transfer, cost_transfer

from .conftest import CYCLE3
from .strategies import int_costs, measures

P2 = np.array([[0.75, 0.25], [0.5, 0.5]])


# --- Mane constant ---------------------------------------------------------

def test_min_mean_cycle_examples():
    assert erg.mane_min_mean_cycle(CYCLE3) == 0
    assert erg.mane_min_mean_cycle(CYCLE3 + 1) == 1
    assert erg.mane_min_mean_cycle(np.array([[3.0]])) == 3
    assert isinstance(erg.mane_min_mean_cycle(CYCLE3), Fraction)


def test_min_mean_cycle_without_cycles_is_inf():
    C = np.array([[np.inf, 0.0], [np.inf, np.inf]])
    assert erg.mane_min_mean_cycle(C) == math.inf


def test_min_mean_cycle_rational_value():
    C = np.array([[np.inf, 1.0], [2.0, np.inf]])
    assert erg.mane_min_mean_cycle(C) == Fraction(3, 2)


def test_diag_lp_examples():
    assert erg.mane_diag_lp(CYCLE3) == 0
    assert erg.mane_diag_lp(CYCLE3 + 1) == 1
    assert erg.mane_diag_lp(np.zeros((3, 3))) == 0


def test_iterative_examples():
    for shift in (0, 1):
        est = erg.mane_iterative(cost_transfer(CYCLE3 + shift), n=100)
        assert abs(est.value - shift) <= 0.06
        assert abs(est.value - shift) <= est.bound
    P = make_transfer(GallerySpec("markov", FiniteSpace(2), {"kernel": [[0.5, 0.5], [0.5, 0.5]]}))
    for n in (1, 10, 100):
        assert erg.mane_iterative(P, n=n).value == 0


@settings(max_examples=40, deadline=None)
@given(int_costs(5))
def test_three_routes_agree(C):
    c = erg.mane_min_mean_cycle(C)
    assert c == erg.mane_diag_lp(C)
    est = erg.mane_iterative(cost_transfer(C), n=200)
    assert abs(est.value - float(c)) <= est.bound + 1e-12


# --- weak KAM --------------------------------------------------------------

def test_weak_kam_examples():
    wk = erg.weak_kam_solve(cost_transfer(CYCLE3), 0)
    np.testing.assert_array_equal(wk.u, [0, 0, 0])
    assert wk.residual == 0
    wk = erg.weak_kam_solve(cost_transfer(CYCLE3 + 1), 1)
    np.testing.assert_array_equal(wk.u, [0, 0, 0])
    P = make_transfer(GallerySpec("markov", FiniteSpace(3),
                                  {"kernel": [[0.5, 0.25, 0.25], [0.25, 0.5, 0.25], [0.25, 0.25, 0.5]]}))
    u = erg.weak_kam_solve(P, 0).u
    np.testing.assert_allclose(u, u[0], atol=1e-9)


@settings(max_examples=40, deadline=None)
@given(int_costs(4))
def test_weak_kam_residual(C):
    T = cost_transfer(C)
    c = erg.mane_min_mean_cycle(C)
    wk = erg.weak_kam_solve(T, c)
    assert wk.residual <= 1e-9
    assert wk.u[0] == 0
    assert erg.residual(T, wk.u, c) <= 1e-9


def test_level_slope_separates_wrong_levels():
    rng = np.random.default_rng(0)
    for _ in range(5):
        C = rng.integers(0, 10, (4, 4)).astype(float)
        T = cost_transfer(C)
        c = float(erg.mane_min_mean_cycle(C))
        assert erg.level_slope(T, c + 0.1) > 0
        assert erg.level_slope(T, c - 0.1) < 0


# --- Peierls barrier -------------------------------------------------------

def test_peierls_examples():
    pe = erg.peierls_barrier(CYCLE3)
    np.testing.assert_array_equal(pe.table, np.zeros((3, 3)))
    pe = erg.peierls_barrier(np.array([[0.0, 1.0], [1.0, 0.0]]))
    np.testing.assert_array_equal(pe.table, [[0, 1], [1, 0]])
    pe = erg.peierls_barrier(np.array([[3.0]]))
    np.testing.assert_array_equal(pe.table, [[0]])
    assert erg.aubry_set(pe) == [0]


def test_peierls_rational_level_is_exact():
    C = np.array([[np.inf, 1.0, 4.0], [2.0, np.inf, 0.0], [0.0, 3.0, np.inf]])
    c = erg.mane_min_mean_cycle(C)
    pe = erg.peierls_barrier(C, c)
    assert pe.exact and pe.scale == c.denominator
    ref, q = erg.peierls_bruteforce(C, c)
    np.testing.assert_array_equal(pe.scaled, ref)


@settings(max_examples=60, deadline=None)
@given(int_costs(4, hi=6))
def test_peierls_matches_bruteforce(C):
    c = erg.mane_min_mean_cycle(C)
    pe = erg.peierls_barrier(C, c)
    ref, q = erg.peierls_bruteforce(C, c)
    assert q == pe.scale
    np.testing.assert_array_equal(pe.scaled, ref)


@settings(max_examples=60, deadline=None)
@given(int_costs(5, allow_inf=True).filter(lambda C: math.isfinite(erg.mane_min_mean_cycle(C))))
def test_peierls_triangle_and_aubry_factorisation(C):
    pe = erg.peierls_barrier(C)
    S = pe.scaled
    assert np.all(S <= np.min(S[:, :, None] + S[None, :, :], axis=1))
    A = erg.aubry_set(pe)
    assert A
    via = np.min(S[:, A][:, :, None] + S[A, :][None, :, :], axis=1)
    np.testing.assert_array_equal(S, via)


def test_oracle_horizon_counterexample_needs_long_walks():
    # the critical cycle is far from the other nodes: short walks miss it
    C = np.array([[0.0, 9.0, 9.0], [9.0, 1.0, 0.0], [9.0, 0.0, 1.0]])
    c = erg.mane_min_mean_cycle(C)
    pe = erg.peierls_barrier(C, c)
    ref, _ = erg.peierls_bruteforce(C, c)
    np.testing.assert_array_equal(pe.scaled, ref)


# --- effective operator, Mather measures -----------------------------------

def test_effective_cost_operator():
    op = erg.effective_operator(cost_transfer(CYCLE3))
    f = np.array([0.5, -1.0, 3.0])
    np.testing.assert_array_equal(op(f), np.full(3, 3.0))


def test_effective_entropic_operator():
    T = make_transfer(GallerySpec("entropic", FiniteSpace(2), {"kernel": P2}))
    op = erg.effective_operator(T)
    f = np.array([0.4, -1.2])
    np.testing.assert_allclose(op(f), np.log(2 / 3 * np.exp(f[0]) + 1 / 3 * np.exp(f[1])), atol=1e-12)


@pytest.mark.parametrize("which", ["cost", "entropic", "markov"])
def test_effective_idempotent(which):
    X = FiniteSpace(3)
    if which == "cost":
        T = cost_transfer(np.array([[2.0, 0.0, 5.0], [3.0, 4.0, 1.0], [0.0, 6.0, 3.0]]))
    else:
        P = np.array([[0.5, 0.3, 0.2], [0.1, 0.6, 0.3], [0.4, 0.4, 0.2]])
        T = make_transfer(GallerySpec(which, X, {"kernel": P}))
    op = erg.effective_operator(T)
    rng = np.random.default_rng(0)
    for _ in range(100):
        f = rng.normal(scale=3, size=3)
        np.testing.assert_allclose(op(op(f)), op(f), atol=1e-10)
    assert axiom_defect(op, probes=50) <= 1e-10


@settings(max_examples=40, deadline=None)
@given(int_costs(4))
def test_effective_fixed_point_law(C):
    T = cost_transfer(C)
    c = float(erg.mane_min_mean_cycle(C))
    op = erg.effective_operator(T)
    rng = np.random.default_rng(1)
    for _ in range(5):
        f = rng.normal(scale=3, size=4)
        np.testing.assert_allclose(T.apply(op(f)) + c, op(f), atol=1e-10)


def test_mather_examples():
    pi = erg.mather_measure(cost_transfer(CYCLE3))
    expect = np.zeros((3, 3))
    expect[0, 1] = expect[1, 2] = expect[2, 0] = 1 / 3
    np.testing.assert_allclose(pi.weights, expect)
    assert pi.cost(CYCLE3) == pytest.approx(0)
    pi1 = erg.mather_measure(cost_transfer(CYCLE3 + 1))
    assert pi1.support() == pi.support()
    assert pi1.cost(CYCLE3 + 1) == pytest.approx(1)
    single = erg.mather_measure(cost_transfer(np.array([[3.0]])))
    assert single.support() == [(0, 0)] and single.cost(np.array([[3.0]])) == 3


@settings(max_examples=40, deadline=None)
@given(int_costs(5))
def test_mather_marginals_and_value(C):
    pi = erg.mather_measure(cost_transfer(C))
    a, b = marginals(pi)
    np.testing.assert_allclose(a.weights, b.weights, atol=1e-12)
    assert pi.cost(C) == pytest.approx(float(erg.mane_min_mean_cycle(C)), abs=1e-12)
    A = set(erg.aubry_set(erg.peierls_barrier(C)))
    assert {i for i, _ in pi.support()} <= A


# --- Schroedinger ----------------------------------------------------------

def test_schrodinger_examples():
    m, checks = erg.schrodinger_effective(P2)
    np.testing.assert_allclose(m, [2 / 3, 1 / 3], atol=1e-12)
    assert checks["semigroup_exact"] and checks["limit_error"] <= 1e-10
    R = np.tile([0.2, 0.8], (2, 1))
    m, checks = erg.schrodinger_effective(R)
    assert checks["iterations"] == 1
    np.testing.assert_allclose(m, [0.2, 0.8])


def test_effective_entropic_value_is_kl():
    X = FiniteSpace(2)
    m, _ = erg.schrodinger_effective(P2)
    Tinf = Transfer(EntropicOperator(np.tile(m, (2, 1))), X, X, kind="entropic")
    mu = Measure(X, [0.3, 0.7])
    assert dual_ascent(Tinf, mu, Measure.dirac(X, 0)).value == pytest.approx(-math.log(2 / 3), abs=1e-6)
    nu = Measure(X, [0.1, 0.9])
    assert dual_ascent(Tinf, mu, nu).value == pytest.approx(kl_divergence(nu, Measure(X, m)), abs=1e-6)


def test_schrodinger_periodic_kernel_fails():
    with pytest.raises(erg.PeriodicityError):
        erg.schrodinger_effective(np.array([[0.0, 1.0], [1.0, 0.0]]), max_iters=100)


def test_heat_effective_is_mean():
    P = np.array([[0.5, 0.25, 0.25], [0.25, 0.5, 0.25], [0.25, 0.25, 0.5]])
    T = make_transfer(GallerySpec("heat", FiniteSpace(3), {"kernel": P}))
    assert erg.mane_iterative(T, n=50).value == pytest.approx(0, abs=1e-12)
    f = np.array([1.0, 2.0, 6.0])
    np.testing.assert_allclose(erg.effective_operator(T)(f), np.full(3, 3.0), atol=1e-12)


# --- bounded oscillation, summary ------------------------------------------

@settings(max_examples=15, deadline=None)
@given(int_costs(3), measures(3), measures(3))
def test_bounded_oscillation(C, mu, nu):
    c = float(erg.mane_min_mean_cycle(C))
    u = erg.weak_kam_solve(cost_transfer(C), c).u
    B = C - c
    lower = -float(np.ptp(u))
    upper = 3 * 3 * float(np.max(np.abs(B)))
    Cn = C.copy()
    for n in range(1, 31):
        if n > 1:
            Cn = minplus(Cn, C)
        dev = primal_ot(Cn, mu, nu)[0] - n * c
        assert lower - 1e-9 <= dev <= upper + 1e-9


def test_summary_json():
    s = erg.summarize(cost_transfer(CYCLE3 + 1))
    out = s.to_json()
    assert out["c"] == 1.0 and out["c_exact"] == "1"
    assert out["aubry"] == [0, 1, 2]
    assert out["residual"] == 0
