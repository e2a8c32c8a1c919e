import math

import numpy as np

from _gen import random_measure, random_pair
from wot.classical import cost_matrix, ot_solve
from wot.measures import DiscreteMeasure
from wot.optim import frank_wolfe
from wot.regularized import (entropy_regularizer, eot_certify, h_regularized_solve,
                             quadratic_regularizer, sinkhorn, support_spread_check)


def fw_entropic_reference(mu, nu, c, eps, tol=3e-7):
    """Brute-force minimization of <c, pi> + eps H(pi | mu x nu) by the
    Frank-Wolfe engine over the transport polytope (vectorized oracle)."""
    from wot.classical import transport_lp

    n, m = mu.n, nu.n
    ref = np.outer(mu.weights, nu.weights)

    def oracle(flat):
        pi = flat.reshape(n, m)
        safe = np.maximum(pi, 1e-300)
        ent = float(np.sum(np.where(pi > 0, pi * np.log(safe / ref), 0.0)))
        val = float((c * pi).sum()) + eps * ent
        grad = c + eps * (np.log(safe / ref) + 1.0)
        return val, grad.ravel()

    def lmo(grad):
        mat, _, _, _ = transport_lp(mu.weights, nu.weights, grad.reshape(n, m))
        return mat.ravel()

    flat, rep = frank_wolfe(oracle, lmo, ref.ravel(), tol=tol, max_iters=6000,
                            away_steps=True, line_search="brent")
    return rep.value


def test_sinkhorn_zero_cost_gives_product():
    rng = np.random.default_rng(0)
    mu = random_measure(rng, 3, 1)
    nu = random_measure(rng, 4, 1)
    sol = sinkhorn(mu, nu, lambda x, y: 0.0, eps=0.7)
    assert sol.converged
    assert abs(sol.value) < 1e-12
    assert np.abs(sol.coupling.matrix - np.outer(mu.weights, nu.weights)).max() < 1e-12
    assert np.abs(sol.f).max() < 1e-12 and np.abs(sol.g).max() < 1e-12


def test_sinkhorn_single_atoms_forced():
    mu = DiscreteMeasure([[0.25]], [1.0])
    nu = DiscreteMeasure([[0.75]], [1.0])
    sol = sinkhorn(mu, nu, "sqeuclidean", eps=0.5)
    assert abs(sol.value - 0.25) < 1e-12  # forced coupling, H = 0


def test_sinkhorn_matches_fw_brute_force():
    rng = np.random.default_rng(1)
    for _ in range(4):
        mu, nu = random_pair(rng, nmax=4)
        c = cost_matrix(mu, nu, "sqeuclidean")
        sol = sinkhorn(mu, nu, c, eps=0.5, tol=1e-12)
        ref = fw_entropic_reference(mu, nu, c, 0.5)
        assert abs(sol.value - ref) <= 1e-6


def test_entropy_sandwich_and_monotonicity():
    rng = np.random.default_rng(2)
    for _ in range(6):
        mu, nu = random_pair(rng, nmax=5)
        c = cost_matrix(mu, nu, "euclidean")
        lp = ot_solve(mu, nu, c).value
        values = []
        for eps in (0.1, 0.5, 1.0, 2.0):
            sol = sinkhorn(mu, nu, c, eps=eps, tol=1e-12)
            values.append(sol.value)
            assert lp - 1e-8 <= sol.value <= lp + eps * math.log(min(mu.n, nu.n)) + 1e-8
        assert all(values[i] <= values[i + 1] + 1e-10 for i in range(len(values) - 1))


def test_eot_certificate_and_gibbs():
    rng = np.random.default_rng(3)
    mu, nu = random_pair(rng, nmax=4)
    sol = sinkhorn(mu, nu, "sqeuclidean", eps=0.5, tol=1e-12)
    cert = eot_certify(sol)
    assert cert.slackness_residuals.max() <= 1e-10
    assert abs(cert.gap) <= 1e-10
    assert sol.gibbs_residual <= 1e-12
    # a Gibbs-assembled coupling from admissible (f, g) with matching
    # marginals certifies near-zero gap (both directions of the structure
    # theorem at desk scale)
    sol2 = sinkhorn(mu, nu, "sqeuclidean", eps=0.5, tol=1e-9)
    cert2 = eot_certify(sol2)
    assert cert2.gap <= 10 * 1e-9 * (1 + abs(cert2.primal_value))
    # perturbed g must be detected
    bad = sol.g.copy()
    bad[0] += 0.2
    from dataclasses import replace

    cert3 = eot_certify(replace(sol, g=bad))
    assert cert3.slackness_residuals.max() >= 0.2 / 2 * sol.coupling.row_array()[:, 0].min() or \
        cert3.slackness_residuals.max() >= 0.01


def test_h_entropy_reproduces_sinkhorn():
    rng = np.random.default_rng(4)
    for _ in range(3):
        mu, nu = random_pair(rng, nmax=3)
        eps = 0.8
        s = sinkhorn(mu, nu, "euclidean", eps=eps, tol=1e-13)
        h = h_regularized_solve(mu, nu, "euclidean", entropy_regularizer(eps), tol=1e-11)
        assert abs(s.value - h.value) <= 1e-6
        assert np.abs(s.coupling.matrix - h.coupling.matrix).max() <= 1e-5
        assert support_spread_check(h, entropy_regularizer(eps)) is True


def test_h_quadratic_zero_cost_density_one():
    mu = DiscreteMeasure([[0.0], [1.0]], [0.5, 0.5])
    nu = DiscreteMeasure([[0.0], [1.0]], [0.3, 0.7])
    q = quadratic_regularizer(1.0)
    sol = h_regularized_solve(mu, nu, lambda x, y: 0.0, q)
    assert np.abs(sol.coupling.matrix - np.outer(mu.weights, nu.weights)).max() <= 1e-10
    # alpha_i + g_j = eps * density = 1 everywhere
    assert np.abs(sol.f[:, None] + sol.g[None, :] - 1.0).max() <= 1e-9
    assert support_spread_check(sol, q) is None  # flag gate: not applicable


def test_h_quadratic_matches_fw_brute_force():
    rng = np.random.default_rng(5)
    from wot.classical import transport_lp

    for _ in range(3):
        mu, nu = random_pair(rng, nmax=3)
        c = cost_matrix(mu, nu, "euclidean")
        h = h_regularized_solve(mu, nu, c, quadratic_regularizer(1.0), tol=1e-11)
        ref = np.outer(mu.weights, nu.weights)
        n, m = mu.n, nu.n

        def oracle(flat):
            pi = flat.reshape(n, m)
            val = float((c * pi).sum()) + 0.5 * float(np.sum(pi * pi / ref))
            grad = c + pi / ref
            return val, grad.ravel()

        def lmo(grad):
            mat, _, _, _ = transport_lp(mu.weights, nu.weights, grad.reshape(n, m))
            return mat.ravel()

        flat, rep = frank_wolfe(oracle, lmo, ref.ravel(), tol=1e-9, max_iters=6000,
                                away_steps=True, line_search="quadratic")
        assert abs(h.value - rep.value) <= 1e-6


def test_regularizer_validation():
    entropy_regularizer(0.5).validate()
    quadratic_regularizer(2.0).validate()


def test_literature_dual_field_matches_value_at_optimum():
    # the (u, v) = (alpha, g) pair is optimal in the sup u+v-h* dual, whose
    # optimal value equals the regularized primal value
    rng = np.random.default_rng(6)
    mu, nu = random_pair(rng, nmax=3)
    h = h_regularized_solve(mu, nu, "euclidean", entropy_regularizer(0.7), tol=1e-11)
    lit = h.extra["dual_literature_value"]
    assert abs(lit - h.value) <= 1e-6 * (1 + abs(h.value))
