import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from scipy.optimize import linprog

from eotlab.costs import cosh_cost, quadratic_cost
from eotlab.geometry import (CONJ_TOL, GeometryError, build_charts, check_chart_lipschitz_graph,
                             check_local_detachment, check_minty_trick, detachment_constant,
                             entropy_lower_bound_local, entropy_lower_bound_quadratic,
                             estimate_contact_set, global_kappa, graph_plan_atoms,
                             lipschitz_graph_w2_bound, map_gap_bounds, minty_inverse,
                             minty_transform, tol_disc, w2_atoms, w2_between_plans)
from eotlab.measures import from_weights, make_gaussian_grid, make_uniform_grid
from eotlab.quantities import duality_gap_field
from eotlab.solvers import (AffineMap, Plan, Potentials, exact_ot_1d, exact_ot_lp,
                            kantorovich_potentials, sinkhorn)

Q1 = quadratic_cost(1)
IDENTITY = AffineMap(np.zeros(1), np.zeros(1), np.eye(1))


def half_square_gap(mu):
    return duality_gap_field(Q1, Potentials(np.zeros(mu.size), np.zeros(mu.size), 0.0), mu, mu)


def cosh_gap(inst):
    pot = kantorovich_potentials(inst.mu0, inst.mu1, inst.cost, method="monotone")
    return duality_gap_field(inst.cost, pot, inst.mu0, inst.mu1)


def lp_w2_sq(za, wa, zb, wb):
    M = ((za[:, None, :] - zb[None, :, :]) ** 2).sum(-1)
    n, m = M.shape
    A = np.vstack([np.kron(np.eye(n), np.ones(m)), np.kron(np.ones(n), np.eye(m))])
    res = linprog(M.ravel(), A_eq=A, b_eq=np.concatenate([wa, wb]), bounds=(0, None),
                  method="highs")
    return res.fun


class TestMinty:
    def test_reference_points(self):
        assert np.allclose(minty_transform([1.0, 1.0]), [[math.sqrt(2), 0.0]], atol=1e-15)
        assert np.allclose(minty_transform([1.0, -1.0]), [[0.0, math.sqrt(2)]], atol=1e-15)

    @given(arrays(float, (7, 4), elements=st.floats(-1e3, 1e3)))
    def test_isometry_and_involution(self, z):
        w = minty_transform(z)
        assert np.allclose(np.linalg.norm(w, axis=1), np.linalg.norm(z, axis=1), rtol=1e-12, atol=1e-12)
        assert np.allclose(minty_inverse(w), z, rtol=1e-12, atol=1e-9)

    def test_odd_width_rejected(self):
        with pytest.raises(GeometryError):
            minty_transform(np.zeros((2, 3)))

    def test_trick_holds_for_half_square_gap(self):
        mu = make_gaussian_grid(0.0, 1.0, 6.0, 128)
        rep = check_minty_trick(half_square_gap(mu), mu, mu, n_pairs=10_000, seed=3)
        assert rep.checked == 10_000
        assert rep.passed(CONJ_TOL)

    @given(st.floats(0.0, 10.0))
    def test_identical_pair_reads_two_e_nonnegative(self, e):
        atom = from_weights([[0.4]], [1.0])
        rep = check_minty_trick(np.array([[e]]), atom, atom, n_pairs=10)
        assert rep.max_violation == pytest.approx(-2 * e)

    def test_corrupted_potential_is_detected(self):
        mu = make_uniform_grid(-1.0, 1.0, 16)
        bump = 0.5
        E = half_square_gap(mu)
        E[:, 8] -= bump            # ψ raised by the bump on one column
        rep = check_minty_trick(E, mu, mu, n_pairs=20_000, seed=0)
        assert rep.max_violation >= bump / 2
        assert 8 in (rep.argmax_pair[0][1], rep.argmax_pair[1][1])

    def test_report_is_reproducible(self):
        mu = make_gaussian_grid(0.0, 1.0, 6.0, 64)
        E = half_square_gap(mu)
        assert check_minty_trick(E, mu, mu, seed=5).to_json() == check_minty_trick(E, mu, mu, seed=5).to_json()


class TestGlobalBound:
    def test_detachment_constant_1d(self):
        assert detachment_constant(1) == pytest.approx(-1.76551, abs=1e-5)

    @pytest.mark.parametrize("sd, n", [(0.5, 256), (1.0, 256), (2.0, 512)])
    def test_isotropic_gaussian_equality_case(self, sd, n):
        mu = make_gaussian_grid(0.0, sd ** 2, 6.0, n)
        plan = Plan(np.outer(mu.weights, mu.weights), mu, mu)
        x = mu.nodes[:, 0]
        E = 0.25 * np.subtract.outer(x, x) ** 2   # ½v² in Minty coordinates
        out = entropy_lower_bound_quadratic(plan, E)
        assert out["bound_E"] == pytest.approx(-math.log(2 * math.pi * math.e * sd ** 2), abs=tol_disc(n))
        assert abs(out["slack_E"]) <= tol_disc(n)

    def test_bounds_hold_along_gaussian_sweep(self, gaussian1d_run):
        for dg in gaussian1d_run.sweep.diagnostics:
            assert dg["slack_E"] >= -0.02

    def test_bounds_hold_along_lipschitz_sweep(self, lipschitz_run):
        for dg in lipschitz_run.sweep.diagnostics:
            assert dg["slack_E"] >= -0.02 and dg["slack_W"] >= -0.02

    def test_entropy_power_links(self, gaussian1d_run):
        for dg in gaussian1d_run.sweep.diagnostics:
            assert dg["entropy_power_link"] <= 1e-9
            assert dg["chained_link"] <= 1e-9

    def test_w2_variant_from_reference_plan(self):
        mu = make_gaussian_grid(0.0, 1.0, 6.0, 96)
        plan0, _ = exact_ot_1d(mu, mu, Q1)
        plan, _ = sinkhorn(mu, mu, Q1, 0.2)
        out = entropy_lower_bound_quadratic(plan, half_square_gap(mu), gamma0=plan0)
        assert out["w2_sq"] > 0 and out["slack_W"] >= -0.02


class TestCharts:
    def test_kappa_quadratic(self):
        assert global_kappa(quadratic_cost(2), [[-1, 1]] * 4) == 0.25

    def test_kappa_cosh(self):
        assert global_kappa(cosh_cost(), [[-1, 1], [-1, 1]]) == pytest.approx(0.25, abs=1e-6)

    def test_cover_property(self, cosh_run):
        inst = cosh_run.instance
        plan0, _, _ = exact_ot_lp(inst.mu0, inst.mu1, inst.cost)
        E = cosh_gap(inst)
        sigma = estimate_contact_set(E, inst.mu0, inst.mu1, gamma0=plan0)
        r = 0.125
        charts = build_charts(inst.cost, sigma, r, box=inst.working_box())
        centres = np.array([ch.center for ch in charts])
        dist = np.linalg.norm(sigma.coords[:, None, :] - centres[None], axis=2).min(1)
        assert dist.max() <= r
        assert all(ch.tau <= 0.5 and ch.kappa == pytest.approx(0.25, abs=1e-6) for ch in charts)

    def test_radius_with_large_tau_is_rejected(self, cosh_run):
        inst = cosh_run.instance
        E = cosh_gap(inst)
        sigma = estimate_contact_set(E, inst.mu0, inst.mu1)
        with pytest.raises(GeometryError):
            build_charts(inst.cost, sigma, 2.0, box=[[-1, 1], [-1, 1]])

    def test_contact_set_leak_is_reported(self, std_normal_512):
        mu = std_normal_512
        plan0, _ = exact_ot_1d(mu, mu, Q1)
        E = half_square_gap(mu) + 1.0
        with pytest.raises(GeometryError):
            estimate_contact_set(E, mu, mu, gamma0=plan0)

    def test_quadratic_local_detachment(self):
        mu = make_gaussian_grid(0.0, 1.0, 6.0, 128)
        E = half_square_gap(mu)
        sigma = estimate_contact_set(E, mu, mu)
        charts = build_charts(Q1, sigma, 1.0)
        rep = check_local_detachment(E, charts, mu, mu, n_pairs=10_000, seed=1)
        assert rep["mixed"].passed(1e-9) and rep["fiber"].passed(1e-9)

    def test_single_point_pair_reads_two_e(self):
        mu = from_weights([[0.0]], [1.0])
        E = np.array([[0.3]])
        sigma = estimate_contact_set(np.zeros((1, 1)), mu, mu)
        rep = check_local_detachment(E, build_charts(Q1, sigma, 1.0), mu, mu, n_pairs=5)
        assert rep["mixed"].max_violation == pytest.approx(-0.6)

    def test_cosh_local_detachment(self, cosh_run):
        geo = cosh_run.sweep.geometry
        assert geo["mixed"].max_violation <= 1e-6
        assert geo["fiber"].max_violation <= 1e-6
        assert geo["chart_graph"].max_violation <= 1e-9


class TestLocalBound:
    def test_cosh_sweep_slack(self, cosh_run):
        for dg in cosh_run.sweep.diagnostics:
            assert dg["slack_local"] >= -0.05

    def test_gaussian_sweep_slack(self):
        mu = make_gaussian_grid(0.0, 1.0, 6.0, 256)
        E = half_square_gap(mu)
        charts = build_charts(Q1, estimate_contact_set(E, mu, mu), 1.0)
        for eps in (0.4, 0.2, 0.1, 0.05, 0.025):
            plan, _ = sinkhorn(mu, mu, Q1, eps)
            assert entropy_lower_bound_local(plan, E, charts)["slack"] >= -0.05

    def test_single_chart_matches_global_dependence(self):
        mu = make_gaussian_grid(0.0, 1.0, 6.0, 128)
        E = half_square_gap(mu)
        charts = build_charts(Q1, estimate_contact_set(E, mu, mu), 20.0)
        assert len(charts) == 1
        offsets = []
        for eps in (0.4, 0.1, 0.025):
            plan, _ = sinkhorn(mu, mu, Q1, eps)
            loc = entropy_lower_bound_local(plan, E, charts)
            glob = entropy_lower_bound_quadratic(plan, E)
            assert loc["E0"] == 1.0
            offsets.append(loc["bound"] - (glob["bound_E"] - glob["h_hat"]))
        assert np.ptp(offsets) < 1e-12


class TestWasserstein:
    def test_identical_plans(self, rng):
        mu = from_weights([np.linspace(0, 1, 10)], rng.dirichlet(np.ones(10)))
        p = Plan(np.diag(mu.weights), mu, mu)
        assert w2_between_plans(p, p) == pytest.approx(0.0, abs=1e-9)

    def test_diracs(self):
        a = (np.array([[0.0, 1.0]]), np.array([1.0]))
        b = (np.array([[3.0, -3.0]]), np.array([1.0]))
        assert w2_between_plans(a, b) == pytest.approx(5.0, abs=1e-12)

    @pytest.mark.parametrize("seed", range(3))
    def test_matches_untruncated_lp(self, seed):
        rng = np.random.default_rng(seed)
        za, zb = rng.normal(size=(100, 2)), rng.normal(1.0, 2.0, size=(100, 2))
        wa, wb = rng.dirichlet(np.ones(100)), rng.dirichlet(np.ones(100))
        est = w2_atoms((za, wa), (zb, wb), atom_budget=100)
        assert est.truncated_mass == 0.0
        assert est.value ** 2 == pytest.approx(lp_w2_sq(za, wa, zb, wb), abs=1e-9)

    @given(st.integers(0, 2 ** 20))
    def test_triangle_inequality(self, seed):
        rng = np.random.default_rng(seed)
        ms = [(rng.normal(size=(12, 2)), rng.dirichlet(np.ones(12))) for _ in range(3)]
        ab, bc, ac = (w2_between_plans(ms[i], ms[j]) for i, j in ((0, 1), (1, 2), (0, 2)))
        assert ac <= ab + bc + 1e-9

    def test_truncation_guard(self, rng):
        z, w = rng.normal(size=(50, 2)), np.full(50, 0.02)
        with pytest.raises(GeometryError):
            w2_atoms((z, w), (z, w), atom_budget=10)


def _atoms_on_columns(rng, n_x=5, per_x=10, y_scale=1.0):
    xs = np.linspace(-1, 1, n_x)
    x = np.repeat(xs, per_x)
    y = rng.normal(scale=y_scale, size=x.size)
    return np.column_stack([x, y]), rng.dirichlet(np.ones(x.size))


class TestLipschitzGraph:
    def test_graph_measure_against_itself(self):
        mu = make_gaussian_grid(0.0, 1.0, 5.0, 64)
        g = graph_plan_atoms(mu, np.sin)
        out = lipschitz_graph_w2_bound(g, g, 1.0)
        assert out["lhs"] == pytest.approx(0.0, abs=1e-12) and out["rhs"] == pytest.approx(0.0, abs=1e-12)

    def test_flat_graph_against_product(self):
        mu0 = make_uniform_grid(-1.0, 1.0, 20)
        mu1 = make_gaussian_grid(0.5, 0.3, 4.0, 30)
        product = Plan(np.outer(mu0.weights, mu1.weights), mu0, mu1)
        flat = graph_plan_atoms(mu0, lambda x: np.zeros_like(x))
        out = lipschitz_graph_w2_bound(product, flat, 0.0)
        # every fibre of the product is μ₁
        assert out["rhs"] == pytest.approx(mu1.variance(), abs=1e-12)
        assert out["lhs"] >= out["rhs"]

    @pytest.mark.parametrize("seed", range(100))
    def test_random_unit_lipschitz_instances(self, seed):
        rng = np.random.default_rng(seed)
        z, w = _atoms_on_columns(rng)
        slope = rng.uniform(-1, 1)
        graph_x = rng.uniform(-1, 1, 50)
        graph = (np.column_stack([graph_x, slope * np.abs(graph_x)]), rng.dirichlet(np.ones(50)))
        out = lipschitz_graph_w2_bound((z, w), graph, 1.0)
        assert out["lhs"] >= out["rhs"] - 1e-12


class TestMapGap:
    @pytest.fixture(scope="class")
    @staticmethod
    def gaussian():
        mu = make_gaussian_grid(0.0, 1.0, 6.0, 128)
        return mu, half_square_gap(mu)

    def test_identity_map_chain_is_tight(self, gaussian):
        mu, E = gaussian
        plan, _ = sinkhorn(mu, mu, Q1, 0.1)
        out = map_gap_bounds(plan, IDENTITY, 1.0, E)
        assert out["map_integral"] == pytest.approx(out["twoLE"], rel=1e-12)
        assert out["w2_sq_upper"] <= out["map_integral"] + 1e-9

    def test_large_eps_barycentre_collapses(self, gaussian):
        mu, E = gaussian
        plan, _ = sinkhorn(mu, mu, Q1, 1e4)
        out = map_gap_bounds(plan, IDENTITY, 1.0, E, compute_w2=False)
        assert out["barycentric_sq"] == pytest.approx(mu.variance(), rel=1e-3)

    def test_optimal_plan_has_zero_gaps(self, gaussian):
        mu, E = gaussian
        plan0, _ = exact_ot_1d(mu, mu, Q1)
        out = map_gap_bounds(plan0, IDENTITY, 1.0, E)
        assert out["w2_sq_upper"] == pytest.approx(0.0, abs=1e-12)
        assert out["map_integral"] == 0.0 and out["twoLE"] == 0.0

    def test_lipschitz_sweep_chain(self, lipschitz_run):
        for dg in lipschitz_run.sweep.diagnostics:
            assert dg["chain_slack"] >= -1e-6
