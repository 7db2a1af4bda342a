import numpy as np
import pytest

from lintransfer.entropy import LogEntropy
from lintransfer.inequalities import (
    GridBudgetExceeded,
    InequalitySpec,
    entropic_conv_dual,
    entropic_conv_primal_grid,
    log_product,
    maurey_dual_check,
    pinsker_cost,
    pinsker_threshold,
    potential_grid,
    primal_inequality_scan,
    shipped_instances,
)
from lintransfer.space import FiniteSpace, Measure, ValidationError, kl_divergence
from lintransfer.transfer import UnsupportedRepresentation, cost_transfer, identity_transfer

X2 = FiniteSpace.line([0.0, 1.0])
W1 = np.array([[0.0, 1.0], [1.0, 0.0]])


def test_potential_grid_shape_and_budget():
    G = potential_grid(3, 1.0, steps=2)
    assert G.shape == (25, 3) and np.all(G[:, 0] == 0)
    with pytest.raises(GridBudgetExceeded):
        potential_grid(6, 1.0)


def test_conv_dual_identity_is_minus_kl():
    rng = np.random.default_rng(0)
    X = FiniteSpace(3)
    E = LogEntropy.identity(X)
    I = identity_transfer(X)
    for _ in range(20):
        mu = Measure(X, rng.dirichlet(np.ones(3)))
        nu = Measure(X, rng.dirichlet(np.ones(3)))
        value, _ = entropic_conv_dual(E, I, mu, nu)
        assert value == pytest.approx(-kl_divergence(nu, mu), abs=1e-4)
    mu = Measure(X, [0.2, 0.5, 0.3])
    assert entropic_conv_dual(E, I, mu, mu)[0] == pytest.approx(0, abs=1e-8)


def test_conv_dual_matches_sigma_grid():
    E = LogEntropy.identity(X2)
    F = cost_transfer(np.array([[0.0, 0.7], [0.2, 0.0]]), X2, X2)
    for mu_w, nu_w in (([0.5, 0.5], [0.2, 0.8]), ([0.9, 0.1], [0.6, 0.4])):
        mu, nu = Measure(X2, mu_w), Measure(X2, nu_w)
        v, _ = entropic_conv_dual(E, F, mu, nu)
        assert v == pytest.approx(entropic_conv_primal_grid(E, F, mu, nu), abs=1e-3)


def test_conv_dual_space_mismatch():
    with pytest.raises(ValidationError):
        entropic_conv_dual(LogEntropy.identity(FiniteSpace(3)), cost_transfer(W1, X2, X2),
                           Measure.uniform(FiniteSpace(3)), Measure.uniform(X2))


def test_maurey_g_zero_is_normalisation():
    u = Measure.uniform(X2)
    spec = InequalitySpec(cost_transfer(W1, X2, X2), u, u, 1.0, 1.0)
    assert log_product(spec, np.zeros(2)) == pytest.approx(0, abs=1e-15)


def test_maurey_large_and_tiny_weights():
    u = Measure.uniform(X2)
    F = cost_transfer(pinsker_cost(), X2, X2)
    assert maurey_dual_check(InequalitySpec(F, u, u, 1e3, 1e3)).passes
    rep = maurey_dual_check(InequalitySpec(F, u, u, 0.05, 0.05))
    assert not rep.passes
    assert log_product(InequalitySpec(F, u, u, 0.05, 0.05), rep.witness) > 0


def test_spec_validation():
    u = Measure.uniform(X2)
    with pytest.raises(ValidationError):
        InequalitySpec(cost_transfer(W1, X2, X2), u, u, 0.0, 1.0)


def test_primal_scan_examples():
    u = Measure.uniform(X2)
    assert primal_inequality_scan(InequalitySpec(cost_transfer(pinsker_cost(), X2, X2), u, u, 1e3, 1e3)).passes
    # plain W1 grows linearly away from u while KL grows quadratically
    for lam in (0.5, 5.0):
        assert not primal_inequality_scan(InequalitySpec(cost_transfer(W1, X2, X2), u, u, lam, lam)).passes


def test_primal_scan_three_points_uses_lp():
    X = FiniteSpace(3)
    u = Measure.uniform(X)
    C = np.ones((3, 3)) - np.eye(3) - 0.2
    rep = primal_inequality_scan(InequalitySpec(cost_transfer(C, X, X), u, u, 5.0, 5.0, sigma_step=0.1))
    assert rep.passes and rep.pairs == 66 * 66


def test_pinsker_threshold_pair():
    lam = pinsker_threshold()
    assert 0.9 < lam < 1.0
    u = Measure.uniform(X2)
    F = cost_transfer(pinsker_cost(), X2, X2)
    ok = InequalitySpec(F, u, u, 2 * lam, 2 * lam)
    bad = InequalitySpec(F, u, u, 0.5 * lam, 0.5 * lam)
    assert maurey_dual_check(ok).passes and primal_inequality_scan(ok).passes
    rep = maurey_dual_check(bad)
    assert not rep.passes and rep.worst_product > 1
    assert not primal_inequality_scan(bad).passes


@pytest.mark.parametrize("spec", shipped_instances(), ids=lambda s: s.name)
def test_dual_implies_primal_on_shipped(spec):
    d = maurey_dual_check(spec)
    p = primal_inequality_scan(spec)
    assert (not d.passes) or p.passes
    assert d.passes == p.passes


def test_dual_implies_primal_random():
    rng = np.random.default_rng(7)
    for _ in range(10):
        C = rng.uniform(-0.5, 1.5, (2, 2))
        mu = Measure(X2, rng.dirichlet(np.ones(2)))
        nu = Measure(X2, rng.dirichlet(np.ones(2)))
        l1, l2 = rng.uniform(0.1, 3.0, 2)
        spec = InequalitySpec(cost_transfer(C, X2, X2), mu, nu, l1, l2)
        if maurey_dual_check(spec).passes:
            assert primal_inequality_scan(spec).passes


def test_primal_scan_rejects_forward_operators():
    u = Measure.uniform(X2)
    F = cost_transfer(W1, X2, X2)
    spec = InequalitySpec(F, u, u, 1.0, 1.0, T1=F.forward)
    with pytest.raises(UnsupportedRepresentation):
        primal_inequality_scan(spec)
    assert np.isfinite(maurey_dual_check(spec).worst_log_product)
