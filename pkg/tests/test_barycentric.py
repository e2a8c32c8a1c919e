import numpy as np
import pytest

from _gen import mps_pair, random_measure, random_pair
from wot.barycentric import (ConsistencyError, bt_dual_transform, bt_solve,
                             convex_order_margin, convex_order_projection,
                             gangbo_mccann_checks, kr_dual, strassen_lp,
                             superhedge_lp)
from wot.classical import ot_solve
from wot.convexkit import Polytope, SampledFunction, is_convex_1d
from wot.measures import DiscreteMeasure
from wot.thetas import theta_abs, theta_pplus, theta_sq, theta_support


def test_bt_single_row_forces_nu():
    rng = np.random.default_rng(0)
    nu = random_measure(rng, 4, 1)
    mu = DiscreteMeasure([[0.0]], [1.0])
    sol = bt_solve(mu, nu, theta_sq(1.0))
    target = float(np.sum((0.0 - nu.mean()) ** 2))
    assert abs(sol.value - target) < 1e-10


def test_bt_convex_order_value_zero():
    rng = np.random.default_rng(1)
    mu, nu = mps_pair(rng, 3)
    assert bt_solve(mu, nu, theta_abs(1)).value <= 1e-9


def test_bt_forced_coupling():
    mu = DiscreteMeasure([[0.0], [2.0]], [0.5, 0.5])
    nu = DiscreteMeasure([[1.0]], [1.0])
    sol = bt_solve(mu, nu, theta_sq(1.0))
    assert abs(sol.value - 1.0) < 1e-12


def test_strassen_examples():
    nu = DiscreteMeasure([[-1.0], [1.0]], [0.5, 0.5])
    ok, kappa, _ = strassen_lp(DiscreteMeasure([[0.0]], [1.0]), nu)
    assert ok and np.allclose(kappa.matrix, [[0.5, 0.5]], atol=1e-9)
    ok2, _, wit = strassen_lp(DiscreteMeasure([[-2.0], [2.0]], [0.5, 0.5]), nu)
    assert not ok2
    # the witness separates: eta(psi) > nu(psi), convex by construction
    assert wit["gap"] > 1e-8
    assert wit["convex_certified"]
    assert is_convex_1d(SampledFunction(wit["support"], wit["values"]))
    ok3, kappa3, _ = strassen_lp(nu, nu)
    assert ok3


def test_strassen_equivalence_with_bt_abs():
    rng = np.random.default_rng(2)
    theta = theta_abs(1)
    for _ in range(60):
        eta, nu = random_pair(rng, nmax=5)
        feasible, _, _ = strassen_lp(eta, nu)
        btv = bt_solve(eta, nu, theta).value
        assert feasible == (btv <= 1e-6)


def test_projection_identity_and_consistency():
    rng = np.random.default_rng(3)
    for _ in range(6):
        mu, nu = random_pair(rng, nmax=4)
        eta, xi, sol = convex_order_projection(mu, nu, theta_sq(1.0))
        # projection identity: the classical cost from mu to eta equals the value
        t_val = ot_solve(mu, eta, lambda x, y: theta_sq(1.0).evaluate(x - y)).value
        assert abs(t_val - sol.value) <= 1e-6
        assert convex_order_margin(eta, nu) <= 1e-7
        # xi is Monge: one positive entry per row
        assert all((xi.matrix[i] > 1e-12).sum() == 1 for i in range(mu.n))


def test_projection_of_ordered_pair_is_identity():
    rng = np.random.default_rng(4)
    mu, nu = mps_pair(rng, 3)
    eta, xi, sol = convex_order_projection(mu, nu, theta_sq(1.0))
    assert eta.almost_equal(mu, tol=1e-5)
    assert sol.value <= 1e-9


def test_projection_onto_dirac():
    rng = np.random.default_rng(5)
    mu = random_measure(rng, 3, 1)
    nu = DiscreteMeasure([[0.3]], [1.0])
    eta, xi, sol = convex_order_projection(mu, nu, theta_sq(1.0))
    assert eta.n == 1 and abs(eta.points[0, 0] - 0.3) < 1e-9
    target = float(sum(mu.weights[i] * (mu.points[i, 0] - 0.3) ** 2 for i in range(3)))
    assert abs(sol.value - target) < 1e-9


def test_kr_dual_examples_and_duality():
    mu = DiscreteMeasure([[1.0]], [1.0])
    nu = DiscreteMeasure([[0.0]], [1.0])
    val, phi, grads, sup = kr_dual(mu, nu, theta_abs(1))
    assert abs(val - 1.0) < 1e-10
    rng = np.random.default_rng(6)
    same = random_measure(rng, 3, 1)
    v0, *_ = kr_dual(same, same, theta_abs(1))
    assert abs(v0) < 1e-9
    for _ in range(20):
        mu, nu = random_pair(rng, nmax=5)
        v_abs, phi, grads, sup = kr_dual(mu, nu, theta_abs(1))
        assert abs(v_abs - bt_solve(mu, nu, theta_abs(1)).value) <= 1e-6
        v_pp, phi_pp, grads_pp, sup_pp = kr_dual(mu, nu, theta_pplus())
        assert abs(v_pp - bt_solve(mu, nu, theta_pplus()).value) <= 1e-6
        # increasing variant: the optimal phi is nondecreasing
        order = np.argsort(sup_pp[:, 0])
        zs = sup_pp[order, 0]
        pv = phi_pp[order]
        if len(zs) > 1:
            slopes = np.diff(pv) / np.diff(zs)
            assert slopes.min() >= -1e-9


def test_kr_dual_d2_ball_approximation_is_lower_bound():
    rng = np.random.default_rng(7)
    mu = random_measure(rng, 3, 2)
    nu = random_measure(rng, 3, 2)
    ball = Polytope.regular_ball(1.0, 32)
    val, phi, grads, sup = kr_dual(mu, nu, theta_abs(2), k=ball)
    # inner polytope => lower bound on the Euclidean-norm BT value
    bt = bt_solve(mu, nu, theta_support(ball)).value
    assert val <= bt + 1e-8
    # gradients respect the facets of K
    a, b = ball.facet_inequalities()
    assert max(float((a @ g - b).max()) for g in grads) <= 1e-8


def test_superhedge_examples_and_equality():
    k = Polytope.interval(-1, 1)
    nu = DiscreteMeasure([[-1.0], [1.0]], [0.5, 0.5])
    w, *_ = superhedge_lp(DiscreteMeasure([[0.0]], [1.0]), nu, k)
    assert abs(w) < 1e-10  # martingale-feasible: no arbitrage
    w2, f1, f2, delta = superhedge_lp(DiscreteMeasure([[0.0]], [1.0]),
                                      DiscreteMeasure([[0.7]], [1.0]), k)
    assert abs(w2 - 0.7) < 1e-10 and abs(delta[0, 0] - 1.0) < 1e-9
    w3, *_ = superhedge_lp(DiscreteMeasure([[0.0]], [1.0]),
                           DiscreteMeasure([[-1.0]], [1.0]), Polytope.interval(0, 1))
    assert abs(w3) < 1e-10  # short-selling ban blocks downward arbitrage
    rng = np.random.default_rng(8)
    for _ in range(10):
        mu, nu = random_pair(rng, nmax=4)
        lo, hi = np.sort(rng.uniform(-1, 1, 2))
        k2 = Polytope.interval(lo, hi)
        w, *_ = superhedge_lp(mu, nu, k2)
        bt = bt_solve(mu, nu, theta_support(k2.reflected())).value
        assert abs(w - bt) <= 1e-6


def test_gangbo_mccann_structure_checks():
    rng = np.random.default_rng(9)
    # ordered pair: T = id
    mu, nu = mps_pair(rng, 3)
    sol = bt_solve(mu, nu, theta_sq(1.0))
    assert np.abs(sol.means - mu.points).max() <= 1e-5
    rep = gangbo_mccann_checks(sol, theta_sq(1.0), mu, nu)
    assert rep["subdiff_residual"] <= 1e-6
    assert rep["lipschitz_excess"] <= 1e-6
    assert rep["monotonicity_defect"] <= 1e-6
    # nu Dirac: T constant
    nud = DiscreteMeasure([[0.4]], [1.0])
    sol2 = bt_solve(mu, nud, theta_sq(1.0))
    assert np.abs(sol2.means - 0.4).max() <= 1e-10
    # random d=2 instance
    mu3 = random_measure(rng, 4, 2)
    nu3 = random_measure(rng, 4, 2)
    sol3 = bt_solve(mu3, nu3, theta_sq(1.0))
    rep3 = gangbo_mccann_checks(sol3, theta_sq(1.0), mu3, nu3)
    assert rep3["lipschitz_excess"] <= 1e-6
    assert rep3["monotonicity_defect"] <= 1e-6
    assert rep3["multistart_mean_discrepancy"] <= 1e-5


def test_map_formula_with_finite_differences():
    # map identity for theta = 0.5|.|^2: m_i = x_i - grad phi(x_i)
    rng = np.random.default_rng(10)
    mu, nu = random_pair(rng, nmax=4)
    theta = theta_sq(0.5)
    sol = bt_solve(mu, nu, theta)
    from wot.oracles import barycentric_oracle
    from wot.weak import c_transform, warm_dual_g

    oracle = barycentric_oracle(nu, theta)
    g = warm_dual_g(mu, nu, oracle, sol.coupling)
    h = 1e-5
    for i in range(mu.n):
        x = mu.points[i]
        hi, _ = c_transform(g, x + h, oracle, nu)
        lo, _ = c_transform(g, x - h, oracle, nu)
        grad_phi = (hi - lo) / (2 * h)
        # grad theta* = identity for theta = |.|^2/2
        assert abs(sol.means[i, 0] - (x[0] - grad_phi)) <= 1e-4


def test_bt_dual_transform_examples():
    theta = theta_sq(0.5)
    # psi = chi_{0}: phi = theta
    psi = SampledFunction([[0.0]], [0.0])
    queries = np.linspace(-2, 2, 9)[:, None]
    phi, _ = bt_dual_transform(psi, theta, queries)
    assert np.allclose(phi.values, 0.5 * queries[:, 0] ** 2, atol=1e-12)
    # psi affine a y + c on a grid covering the minimizers: phi = a x + c - theta*(a)
    a, c = 0.8, 0.3
    sites = np.linspace(-4, 4, 33)[:, None]
    psi2 = SampledFunction(sites, a * sites[:, 0] + c)
    queries = np.linspace(-1, 1, 5)[:, None]
    phi2, _ = bt_dual_transform(psi2, theta, queries)
    # theta* for |.|^2/2 is |.|^2/2; grid step bounds the error
    target = a * queries[:, 0] + c - 0.5 * a * a
    assert np.abs(phi2.values - target).max() <= 2e-2
    # psi = |y| with theta = |.|: phi = |.| (box idempotence on the grid)
    th_abs = theta_abs(1)
    sites3 = np.linspace(-2, 2, 17)[:, None]
    psi3 = SampledFunction(sites3, np.abs(sites3[:, 0]))
    queries3 = sites3
    phi3, _ = bt_dual_transform(psi3, th_abs, queries3)
    assert np.abs(phi3.values - np.abs(queries3[:, 0])).max() <= 1e-10


def test_convex_order_margin_quantifies_violation():
    nu = DiscreteMeasure([[-1.0], [1.0]], [0.5, 0.5])
    inside = DiscreteMeasure([[0.0]], [1.0])
    assert convex_order_margin(inside, nu) <= 1e-10
    outside = DiscreteMeasure([[-2.0], [2.0]], [0.5, 0.5])
    assert convex_order_margin(outside, nu) >= 0.5
