import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lintransfer.space import (
    Coupling,
    FiniteSpace,
    IndeterminateFormError,
    Measure,
    Potential,
    ValidationError,
    ext_add,
    ext_sub,
    kl_divergence,
    marginals,
    wasserstein1,
    wasserstein1_dual,
)

from .strategies import measures


def test_space_rejects_bad_metric():
    with pytest.raises(ValidationError):
        FiniteSpace(2, metric=[[0, 1], [2, 0]])
    with pytest.raises(ValidationError):
        FiniteSpace(3, metric=[[0, 1, 5], [1, 0, 1], [5, 1, 0]])   # triangle
    with pytest.raises(ValidationError):
        FiniteSpace(0)


def test_measure_rejects_unnormalised():
    X = FiniteSpace(2)
    with pytest.raises(ValidationError):
        Measure(X, [0.5, 0.6])
    with pytest.raises(ValidationError):
        Measure(X, [1.5, -0.5])


def test_extended_arithmetic_guards_indeterminate_forms():
    assert ext_add(np.inf, 3.0) == np.inf
    assert ext_sub(-np.inf, np.inf) == -np.inf
    with pytest.raises(IndeterminateFormError):
        ext_sub(np.inf, np.inf)
    with pytest.raises(IndeterminateFormError):
        ext_add(np.inf, -np.inf)


def test_potential_accepts_sentinels():
    X = FiniteSpace(3)
    p = Potential(X, [0.0, np.inf, -np.inf])
    assert p.values[1] == np.inf


def test_marginals_of_product_and_cycle():
    X = FiniteSpace(3)
    mu = Measure(X, [0.2, 0.3, 0.5])
    nu = Measure(X, [0.6, 0.4, 0.0])
    a, b = marginals(mu.product(nu))
    np.testing.assert_allclose(a.weights, mu.weights)
    np.testing.assert_allclose(b.weights, nu.weights)

    plan = np.zeros((3, 3))
    plan[0, 1] = plan[1, 2] = plan[2, 0] = 1 / 3
    a, b = marginals(Coupling(X, X, plan))
    np.testing.assert_allclose(a.weights, np.full(3, 1 / 3))
    np.testing.assert_allclose(b.weights, np.full(3, 1 / 3))


@given(measures(4))
def test_diag_marginals(mu):
    a, b = marginals(mu.diag())
    np.testing.assert_allclose(a.weights, mu.weights, atol=1e-15)
    np.testing.assert_allclose(b.weights, mu.weights, atol=1e-15)


def test_kl_examples():
    X = FiniteSpace(2)
    half = Measure(X, [0.5, 0.5])
    point = Measure(X, [1.0, 0.0])
    assert kl_divergence(half, half) == 0.0
    assert kl_divergence(point, half) == pytest.approx(math.log(2), abs=1e-15)
    assert kl_divergence(half, point) == math.inf


@given(measures(3), measures(3))
def test_kl_nonnegative_and_zero_iff_equal(nu, mu):
    k = kl_divergence(nu, mu)
    assert k >= -1e-12
    if np.allclose(nu.weights, mu.weights, atol=1e-9):
        assert k <= 1e-12
    else:
        assert k > 0


def test_wasserstein_examples():
    X = FiniteSpace.line([0.0, 1.0, 2.0])
    d0, d2 = Measure.dirac(X, 0), Measure.dirac(X, 2)
    assert wasserstein1(d0, d0) == 0
    assert wasserstein1(d0, d2) == pytest.approx(2)
    assert wasserstein1(Measure(X, [0.5, 0.5, 0]), Measure(X, [0, 0.5, 0.5])) == pytest.approx(1)


def test_wasserstein_needs_metric():
    X = FiniteSpace(2)
    with pytest.raises(ValidationError):
        wasserstein1(Measure.uniform(X), Measure.uniform(X))


@settings(max_examples=30, deadline=None)
@given(measures(3, space=FiniteSpace.line([0.0, 1.0, 3.0])),
       measures(3, space=FiniteSpace.line([0.0, 1.0, 3.0])),
       measures(3, space=FiniteSpace.line([0.0, 1.0, 3.0])))
def test_wasserstein_metric_axioms(a, b, c):
    ab, ba = wasserstein1(a, b), wasserstein1(b, a)
    assert ab == pytest.approx(ba, abs=1e-8)
    assert ab <= wasserstein1(a, c) + wasserstein1(c, b) + 1e-8
    assert ab == pytest.approx(wasserstein1_dual(a, b), abs=1e-8)
