import numpy as np
import pytest
from hypothesis import given, settings

from lintransfer.acceptance import axiom_defect
from lintransfer.gallery import GallerySpec, make_transfer
from lintransfer.regularize import (
    c_epsilon_curve,
    default_ladder,
    lipschitz_defect,
    regularize,
    smoother,
)
from lintransfer.space import FiniteSpace, Measure, ValidationError
from lintransfer.transfer import cost_transfer, metric_transfer

from .conftest import CYCLE3
from .strategies import int_costs, measures, potentials

LINE3 = FiniteSpace.line([0.0, 1.0, 2.0])


def probe_measures(n, count, seed):
    rng = np.random.default_rng(seed)
    X = FiniteSpace.line(np.arange(float(n)))
    return [Measure(X, w) for w in rng.dirichlet(np.ones(n), size=count)]


def test_default_ladder():
    lad = default_ladder()
    assert lad[0] == 1.0 and lad[-1] == 2.0 ** -10 and len(lad) == 11


def test_requires_metric():
    with pytest.raises(ValidationError):
        regularize(cost_transfer(CYCLE3), 0.5)
    with pytest.raises(ValidationError):
        smoother(LINE3.metric, 0.0)


def test_small_eps_is_identity_on_lipschitz_instances():
    T = cost_transfer(CYCLE3, LINE3, LINE3)
    R = regularize(T, 1 / 16)
    np.testing.assert_array_equal(R.cost, T.cost)
    rng = np.random.default_rng(0)
    for _ in range(50):
        f = rng.uniform(-3, 3, size=3)
        np.testing.assert_allclose(R.operator(f), T.apply(f), atol=1e-12)


def test_large_eps_reaches_global_inf():
    C = np.array([[4.0, 2.0, 7.0], [3.0, 5.0, 1.5], [6.0, 2.5, 3.0]])
    T = cost_transfer(C, LINE3, LINE3)
    R = regularize(T, 1e6)
    for mu in probe_measures(3, 5, 1):
        for nu in probe_measures(3, 5, 2):
            mu_, nu_ = Measure(LINE3, mu.weights), Measure(LINE3, nu.weights)
            assert R(mu_, nu_) == pytest.approx(C.min(), abs=1e-5)


@settings(max_examples=20, deadline=None)
@given(int_costs(3), measures(3, space=LINE3), measures(3, space=LINE3))
def test_regularized_below_base(C, mu, nu):
    T = cost_transfer(C, LINE3, LINE3)
    vals = [regularize(T, e)(mu, nu) for e in (1.0, 0.5, 0.25, 0.125)]
    assert all(v <= T(mu, nu) + 1e-9 for v in vals)
    assert all(b >= a - 1e-9 for a, b in zip(vals, vals[1:]))


def test_regularized_markov_below_base():
    P = make_transfer(GallerySpec("markov", LINE3, {"kernel": [[0.5, 0.5, 0], [0, 0.5, 0.5], [0.5, 0, 0.5]]}))
    R = regularize(P, 0.5)
    rng = np.random.default_rng(3)
    for _ in range(50):
        f = rng.normal(scale=3, size=3)
        assert np.all(R.operator(f) >= P.apply(f) - 1e-12)   # T_eps g >= T g, so T_eps <= T
    assert axiom_defect(R.operator, probes=50) <= 1e-10


def test_gamma_limit_on_ladder():
    C = np.array([[0.0, 1.0, 2.5], [1.0, 0.0, 1.0], [2.0, 1.0, 0.0]])
    T = cost_transfer(C, LINE3, LINE3)
    mu, nu = Measure(LINE3, [0.6, 0.3, 0.1]), Measure(LINE3, [0.1, 0.2, 0.7])
    vals = [regularize(T, e)(mu, nu) for e in default_ladder()]
    assert all(b >= a - 1e-12 for a, b in zip(vals, vals[1:]))
    assert vals[-1] == pytest.approx(T(mu, nu), abs=1e-6)


def test_c_epsilon_examples():
    T = cost_transfer(CYCLE3, LINE3, LINE3)
    assert [float(v) for v in c_epsilon_curve(T)] == [0.0] * 11
    curve = [float(v) for v in c_epsilon_curve(cost_transfer(CYCLE3 + 1, LINE3, LINE3), [1, 0.5, 0.1])]
    assert curve == sorted(curve)
    assert all(float(v) == 0 for v in c_epsilon_curve(metric_transfer(LINE3)))


def test_c_epsilon_strictly_increasing_instance():
    C = np.array([[3.0, 0.0, 9.0], [9.0, 3.0, 9.0], [9.0, 9.0, 3.0]])
    curve = [float(v) for v in c_epsilon_curve(cost_transfer(C, LINE3, LINE3), [4.0, 1.0, 0.25])]
    assert curve[0] < curve[-1] <= 3.0
    assert curve == sorted(curve)


@settings(max_examples=40, deadline=None)
@given(potentials(3))
def test_smoother_idempotent_and_lipschitz(g):
    for eps in (2.0, 0.5, 0.1):
        S = smoother(LINE3.metric, eps)
        np.testing.assert_array_equal(S(S(g)), S(g))
        assert lipschitz_defect(g, LINE3.metric, eps) <= 1e-12
