import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from eotlab import gaussian as oracle
from eotlab.costs import cosh_cost, quadratic_cost
from eotlab.instances import make_instance, two_point_solution
from eotlab.measures import entropy_lebesgue, from_weights, make_uniform_grid
from eotlab.quantities import (QuantityError, cost_term, duality_gap_field, envelope_residual,
                               mean_entropy, ot_value, plan_entropy_lebesgue, schrodinger_value,
                               suboptimality)
from eotlab.solvers import Plan, Potentials, exact_ot_1d, kantorovich_potentials, sinkhorn

Q1 = quadratic_cost(1)


def product(mu0, mu1):
    return Plan(np.outer(mu0.weights, mu1.weights), mu0, mu1)


@pytest.fixture(scope="module")
def gaussian_setup(std_normal_512):
    mu = std_normal_512
    plan0, _ = exact_ot_1d(mu, mu, Q1)
    pot = kantorovich_potentials(mu, mu, Q1, method="monotone")
    E = duality_gap_field(Q1, pot, mu, mu)
    plan_eps, _ = sinkhorn(mu, mu, Q1, 0.1, marginal_tol=1e-11)
    return mu, plan0, E, plan_eps


def test_cost_of_diagonal_plan_is_zero(std_normal_512):
    plan, _ = exact_ot_1d(std_normal_512, std_normal_512, Q1)
    assert cost_term(plan, Q1) == 0.0


def test_cost_of_product_gaussians(std_normal_512):
    assert cost_term(product(std_normal_512, std_normal_512), Q1) == pytest.approx(1.0, abs=2e-3)


def test_cost_of_entropic_gaussian_plan(gaussian_setup):
    *_, plan_eps = gaussian_setup
    assert cost_term(plan_eps, Q1) == pytest.approx(0.04875, abs=2e-3)


def test_product_of_unit_uniforms_has_zero_entropy():
    u = make_uniform_grid(0.0, 1.0, 64)
    assert plan_entropy_lebesgue(product(u, u)) == pytest.approx(0.0, abs=1e-9)


@given(st.integers(0, 10_000))
def test_product_entropy_is_additive(seed):
    rng = np.random.default_rng(seed)
    a = from_weights([np.linspace(0, 3, 12)], rng.dirichlet(np.ones(12)))
    b = from_weights([np.linspace(-1, 1, 9)], rng.dirichlet(np.ones(9)))
    expected = entropy_lebesgue(a) + entropy_lebesgue(b)
    assert plan_entropy_lebesgue(product(a, b)) == pytest.approx(expected, abs=1e-9)


def test_entropic_plan_entropy_matches_gaussian_oracle(gaussian_setup):
    *_, plan_eps = gaussian_setup
    # analytic value −ln(2πe) − ½ln(1 − C²) with C = √(1 + ε²/4) − ε/2
    assert oracle.plan_entropy(0.1) == pytest.approx(-1.66160, abs=1e-5)
    assert plan_entropy_lebesgue(plan_eps) == pytest.approx(oracle.plan_entropy(0.1), abs=0.02)


@given(st.integers(0, 10_000), st.floats(0.01, 2.0))
def test_schrodinger_identity_for_any_plan(seed, eps):
    rng = np.random.default_rng(seed)
    a = from_weights([np.linspace(-1, 1, 8)], rng.dirichlet(np.ones(8)))
    g = rng.dirichlet(np.ones(64)).reshape(8, 8)
    p = Plan(g, a, from_weights([np.linspace(-1, 1, 8)], g.sum(0)))
    lhs = eps * schrodinger_value(p, cosh_cost(), eps) - 0.5 * eps * math.log(2 * math.pi * eps)
    assert lhs == pytest.approx(ot_value(p, cosh_cost(), eps), abs=1e-9)


def test_product_plan_has_larger_schrodinger_value(gaussian_setup):
    mu, *_, plan_eps = gaussian_setup
    assert schrodinger_value(product(mu, mu), Q1, 0.1) > schrodinger_value(plan_eps, Q1, 0.1)


def test_schrodinger_value_matches_gaussian_oracle(gaussian_setup):
    *_, plan_eps = gaussian_setup
    eps = 0.1
    expected = (oracle.ot_eps(eps) + 0.5 * eps * math.log(2 * math.pi * eps)) / eps
    assert schrodinger_value(plan_eps, Q1, eps) == pytest.approx(expected, abs=0.05)


def test_gap_field_is_half_squared_distance_for_equal_marginals(gaussian_setup):
    mu, *_ = gaussian_setup
    x = mu.nodes[:, 0]
    zero = Potentials(np.zeros(mu.size), np.zeros(mu.size), 0.0)
    E = duality_gap_field(Q1, zero, mu, mu)
    assert np.array_equal(E, 0.5 * np.subtract.outer(x, x) ** 2)
    assert np.all(np.diag(E) == 0.0)


def test_gap_vanishes_on_optimal_plan(gaussian_setup):
    _, plan0, E, _ = gaussian_setup
    assert abs(suboptimality(plan0, E)) <= 1e-8


def test_gap_against_product_plan(gaussian_setup):
    mu, _, E, _ = gaussian_setup
    assert suboptimality(product(mu, mu), E) == pytest.approx(1.0, abs=2e-3)


def test_suboptimality_of_entropic_plan(gaussian_setup):
    *_, E, plan_eps = gaussian_setup
    assert suboptimality(plan_eps, E) == pytest.approx(0.04875, abs=2e-3)
    assert suboptimality(plan_eps, E) == pytest.approx(oracle.suboptimality(0.1), abs=2e-3)


def test_suboptimality_shape_mismatch(gaussian_setup):
    _, plan0, E, _ = gaussian_setup
    with pytest.raises(QuantityError):
        suboptimality(plan0, E[:-1])


def test_gap_field_is_nonnegative_for_cosh(rng):
    a = from_weights([np.linspace(-1, 1, 40)], rng.dirichlet(np.ones(40)))
    b = from_weights([np.linspace(-1, 1, 30)], rng.dirichlet(np.ones(30)))
    pot = kantorovich_potentials(a, b, cosh_cost(), method="lp")
    assert duality_gap_field(cosh_cost(), pot, a, b).min() >= -1e-15


def test_mean_entropy():
    u1, u2 = make_uniform_grid(0.0, 1.0, 50), make_uniform_grid(0.0, 2.0, 50)
    assert mean_entropy(u1, u2) == pytest.approx(-0.5 * math.log(2), abs=1e-12)


def test_envelope_residual_gaussian():
    inst = make_instance("gaussian1d")
    plan, _ = sinkhorn(inst.mu0, inst.mu1, Q1, 0.2)
    rel = envelope_residual(inst, 0.2, 0.01) / abs(plan_entropy_lebesgue(plan))
    assert rel < 0.01


def test_envelope_residual_two_point():
    assert envelope_residual(make_instance("discrete2x2"), 0.5, 0.01) < 1e-3


def test_envelope_residual_is_second_order():
    inst = make_instance("discrete2x2")
    ratio = envelope_residual(inst, 0.5, 0.02) / envelope_residual(inst, 0.5, 0.01)
    assert ratio == pytest.approx(4.0, rel=0.05)


def test_envelope_residual_rejects_large_step():
    with pytest.raises(QuantityError):
        envelope_residual(make_instance("discrete2x2"), 0.5, 0.2)


@given(st.floats(0.05, 3.0))
def test_two_point_closed_form_is_consistent(eps):
    sol = two_point_solution(eps)
    p, q = sol["diagonal"], 0.5 - sol["diagonal"]
    # stationarity of the symmetric objective: ln(p/q) = 1/(2ε)
    assert math.log(p / q) == pytest.approx(1 / (2 * eps), rel=1e-9)
    assert sol["ot_eps"] == pytest.approx(q + eps * sol["plan_entropy"], abs=1e-15)
