"""Acceptance suite: one test per criterion, run at the stated tolerances.

Each test prints a single PASS line (visible with pytest -s / -rA) after its
assertions; failures surface as ordinary pytest failures.
"""

import json
import math
import time

import numpy as np

from _gen import emt_pair, floored_weights, mps_pair, random_measure, random_pair
from wot.barycentric import bt_solve, gangbo_mccann_checks, kr_dual, strassen_lp
from wot.classical import cost_matrix, ot_solve, transport_lp
from wot.convexkit import (Polytope, SampledFunction, conjugate, inf_convolution,
                           subgradient_select, support_function)
from wot.lp import lp_solve
from wot.measures import DiscreteMeasure
from wot.optim import frank_wolfe
from wot.oracles import (WeakCostOracle, barycentric_oracle, entropy_oracle,
                         linear_oracle, min_oracle)
from wot.regularized import entropy_regularizer, h_regularized_solve, quadratic_regularizer, sinkhorn
from wot.thetas import scaled, theta_abs, theta_pplus, theta_sq
from wot.weak import DualPair, certify, dual_ascent, lifted_solve, primal_solve_convex, warm_dual_g

ROOT_SEED = 90210


def _report(num, label, t0):
    print(f"ACCEPTANCE {num:2d}: PASS  ({label}; {time.time() - t0:.1f}s)")


def euclid(x, y):
    return float(np.linalg.norm(np.atleast_1d(x) - np.atleast_1d(y)))


def sqeuclid(x, y):
    return float(np.sum((np.atleast_1d(x) - np.atleast_1d(y)) ** 2))


def test_criterion_01_classical_ftot():
    t0 = time.time()
    rng = np.random.default_rng(ROOT_SEED + 1)
    for _ in range(100):
        d = int(rng.integers(1, 4))
        mu, nu = random_pair(rng, nmax=8, d=d)
        c = cost_matrix(mu, nu, rng.choice(["euclidean", "sqeuclidean"]))
        res = ot_solve(mu, nu, c)
        dual = float(mu.weights @ res.f + nu.weights @ res.g)
        assert abs(res.value - dual) <= 1e-8 * (1 + abs(res.value))
        slack = res.f[:, None] + res.g[None, :] - c
        on = res.coupling.matrix > 1e-12
        if on.any():
            assert np.abs(slack[on]).max() <= 1e-8
        assert slack.max() <= 1e-8
    _report(1, "FTOT duality + slackness on 100 LPs", t0)


def _suite2_instances():
    rng = np.random.default_rng(ROOT_SEED + 2)
    out = []
    for k in range(50):
        n = int(rng.integers(2, 7))
        m = int(rng.integers(2, 7))
        mu = DiscreteMeasure(rng.uniform(-1, 1, (n, 1)), floored_weights(rng, n))
        nu = DiscreteMeasure(rng.uniform(-1, 1, (m, 1)), floored_weights(rng, m))
        family = ("linear", "entropy", "barycentric")[k % 3]
        if family == "linear":
            oracle = linear_oracle(nu, euclid)
        elif family == "entropy":
            oracle = entropy_oracle(nu, 0.5, cost_fn=sqeuclid)
        else:
            oracle = barycentric_oracle(nu, theta_sq(1.0))
        out.append((mu, nu, oracle, family))
    return out


def _solve_suite2(mu, nu, oracle):
    pi, rep = primal_solve_convex(mu, nu, oracle, tol=1e-8, polish=True)
    g0 = warm_dual_g(mu, nu, oracle, pi)
    pair, drep = dual_ascent(mu, nu, oracle, init_g=g0, iters=25)
    cert = certify(pi, pair, oracle)
    return pi, pair, cert


def test_criterion_02_wot_strong_duality():
    t0 = time.time()
    for mu, nu, oracle, family in _suite2_instances():
        pi, pair, cert = _solve_suite2(mu, nu, oracle)
        scale = 1.0 + abs(cert.primal_value)
        assert abs(cert.primal_value - cert.dual_value) <= 1e-4 * scale, family
        # certify reports the matching gap
        assert abs(cert.gap - (cert.primal_value - cert.dual_value)) <= 1e-12
        assert cert.gap >= -1e-8
    _report(2, "primal/dual agreement on 50 convex instances", t0)


def test_criterion_03_slackness_detects_perturbation():
    t0 = time.time()
    for mu, nu, oracle, family in _suite2_instances():
        pi, pair, cert = _solve_suite2(mu, nu, oracle)
        g2 = pair.g.copy()
        g2[0] += 0.1
        bad = DualPair(f=pair.f.copy(), g=g2, transform_values=pair.f.copy(),
                       argmins=[None] * mu.n)
        cert2 = certify(pi, bad, oracle)
        assert max(cert2.admissibility_residual,
                   float(cert2.slackness_residuals.max())) >= 0.01, family
    _report(3, "perturbed duals detected on every suite-2 instance", t0)


def test_criterion_04_tent_example_reproduced():
    t0 = time.time()
    mu = DiscreteMeasure([[0.0]], [1.0])
    nu = DiscreteMeasure([[-1.0], [1.0]], [0.5, 0.5])

    def ev(x, r):
        return 1.0 - abs(2.0 * r[0] - 1.0)

    def sg(x, r):
        return np.array([-2.0 if 2 * r[0] - 1 >= 0 else 2.0, 0.0])

    oracle = WeakCostOracle(ev, sg, False, False, "tent")
    non_lifted = ev(0.0, nu.weights)  # the unique coupling is forced
    assert abs(non_lifted - 1.0) <= 1e-9
    plan, pair, cert = lifted_solve(mu, nu, oracle)
    assert abs(cert.primal_value - 0.0) <= 1e-9
    assert abs(cert.dual_value - 0.0) <= 1e-6
    _report(4, "tent cost: non-lifted 1, lifted 0, dual 0", t0)


def test_criterion_05_lifted_equals_convexification():
    t0 = time.time()
    rng = np.random.default_rng(ROOT_SEED + 5)
    for _ in range(20):
        mu, nu = random_pair(rng, nmax=4)
        a, b = rng.normal(size=2)
        c1 = lambda x, y, a=a: euclid(x, y) + a * float(np.atleast_1d(y)[0])
        c2 = lambda x, y, b=b: sqeuclid(x, y) + b * float(np.atleast_1d(y)[0])
        oracle = min_oracle(linear_oracle(nu, c1), linear_oracle(nu, c2))
        plan, pair, cert = lifted_solve(mu, nu, oracle)
        ref = _branch_split_lp(mu, nu, c1, c2)
        assert abs(cert.primal_value - ref) <= 1e-6
    _report(5, "lifted value = exact convexification on 20 non-convex costs", t0)


def _branch_split_lp(mu, nu, c1, c2):
    """Exact lsc-convex-hull value for min(linear, linear) weak costs.

    Every optimal lifted plan needs at most one atom per branch and per x
    (branch-internal mixing never increases a convex cost), so the
    relaxation equals this two-copy transport LP: an independent oracle for
    the column-generation route.
    """
    n, m = mu.n, nu.n
    cm1 = np.array([[c1(x, y) for y in nu.points] for x in mu.points]).ravel()
    cm2 = np.array([[c2(x, y) for y in nu.points] for x in mu.points]).ravel()
    cost = np.concatenate([cm1, cm2])
    a_eq = np.zeros((n + m, 2 * n * m))
    for i in range(n):
        a_eq[i, i * m:(i + 1) * m] = 1.0
        a_eq[i, n * m + i * m:n * m + (i + 1) * m] = 1.0
    for j in range(m):
        a_eq[n + j, j:n * m:m] = 1.0
        a_eq[n + j, n * m + j::m] = 1.0
    b_eq = np.concatenate([mu.weights, nu.weights])
    return lp_solve(cost, a_eq=a_eq, b_eq=b_eq).value


def test_criterion_06_strassen_equivalence():
    t0 = time.time()
    rng = np.random.default_rng(ROOT_SEED + 6)
    theta = theta_abs(1)
    for _ in range(200):
        eta, nu = random_pair(rng, nmax=5)
        feasible, _, _ = strassen_lp(eta, nu)
        btv = bt_solve(eta, nu, theta).value
        assert feasible == (btv <= 1e-6)
    _report(6, "Strassen feasibility <=> zero |.|-barycentric value, 200 pairs", t0)


def test_criterion_07_convex_kr_duality():
    t0 = time.time()
    rng = np.random.default_rng(ROOT_SEED + 7)
    for _ in range(50):
        mu, nu = random_pair(rng, nmax=5)
        v_abs, *_ = kr_dual(mu, nu, theta_abs(1))
        assert abs(v_abs - bt_solve(mu, nu, theta_abs(1)).value) <= 1e-6
        v_pp, *_ = kr_dual(mu, nu, theta_pplus())
        assert abs(v_pp - bt_solve(mu, nu, theta_pplus()).value) <= 1e-6
    _report(7, "KR duals match barycentric LPs (both kinds), 50 instances", t0)


def test_criterion_08_brenier_strassen_regularity():
    t0 = time.time()
    rng = np.random.default_rng(ROOT_SEED + 8)
    theta = theta_sq(1.0)
    for _ in range(30):
        n = int(rng.integers(2, 6))
        m = int(rng.integers(2, 6))
        mu = DiscreteMeasure(rng.uniform(-1, 1, (n, 2)), rng.dirichlet(np.ones(n)))
        nu = DiscreteMeasure(rng.uniform(-1, 1, (m, 2)), rng.dirichlet(np.ones(m)))
        sol = bt_solve(mu, nu, theta)
        rep = gangbo_mccann_checks(sol, theta, mu, nu)
        assert rep["lipschitz_excess"] <= 1e-5
        assert rep["monotonicity_defect"] <= 1e-5
        assert rep["multistart_mean_discrepancy"] <= 1e-5
    _report(8, "1-Lipschitz monotone maps + uniqueness, 30 d=2 instances", t0)


def test_criterion_09_entropic_sandwich_and_gibbs():
    t0 = time.time()
    rng = np.random.default_rng(ROOT_SEED + 9)
    for k in range(50):
        mu, nu = random_pair(rng, nmax=4)
        c = cost_matrix(mu, nu, "sqeuclidean")
        lp = ot_solve(mu, nu, c).value
        for eps in (0.1, 0.5, 1.0):
            sol = sinkhorn(mu, nu, c, eps=eps, tol=1e-12)
            assert sol.converged
            assert lp - 1e-8 <= sol.value <= lp + eps * math.log(min(mu.n, nu.n)) + 1e-8
            assert sol.gibbs_residual <= 1e-7
        # Frank-Wolfe brute force at one epsilon per instance (budget)
        eps = (0.1, 0.5, 1.0)[k % 3]
        sol = sinkhorn(mu, nu, c, eps=eps, tol=1e-12)
        ref = _fw_entropic(mu, nu, c, eps)
        assert abs(sol.value - ref) <= 1e-5
    _report(9, "OT <= EOT <= OT + eps log(min(n,m)); Sinkhorn = FW", t0)


def _fw_entropic(mu, nu, c, eps):
    n, m = mu.n, nu.n
    ref = np.outer(mu.weights, nu.weights)

    def oracle(flat):
        pi = flat.reshape(n, m)
        safe = np.maximum(pi, 1e-300)
        ent = float(np.sum(np.where(pi > 0, pi * np.log(safe / ref), 0.0)))
        return float((c * pi).sum()) + eps * ent, (c + eps * (np.log(safe / ref) + 1)).ravel()

    def lmo(grad):
        mat, _, _, _ = transport_lp(mu.weights, nu.weights, grad.reshape(n, m))
        return mat.ravel()

    _, rep = frank_wolfe(oracle, lmo, ref.ravel(), tol=3e-6, max_iters=6000,
                         away_steps=True, line_search="brent")
    return rep.value


def test_criterion_10_h_regularized_consistency():
    t0 = time.time()
    rng = np.random.default_rng(ROOT_SEED + 10)
    for _ in range(20):
        mu, nu = random_pair(rng, nmax=3)
        c = cost_matrix(mu, nu, "euclidean")
        eps = 0.8
        s = sinkhorn(mu, nu, c, eps=eps, tol=1e-13)
        h = h_regularized_solve(mu, nu, c, entropy_regularizer(eps), tol=1e-11)
        assert abs(s.value - h.value) <= 1e-5
        hq = h_regularized_solve(mu, nu, c, quadratic_regularizer(1.0), tol=1e-11)
        ref = _fw_quadratic(mu, nu, c)
        assert abs(hq.value - ref) <= 1e-5
    _report(10, "entropic h = Sinkhorn; quadratic h = FW brute force", t0)


def _fw_quadratic(mu, nu, c):
    n, m = mu.n, nu.n
    ref = np.outer(mu.weights, nu.weights)

    def oracle(flat):
        pi = flat.reshape(n, m)
        return (float((c * pi).sum()) + 0.5 * float(np.sum(pi * pi / ref)),
                (c + pi / ref).ravel())

    def lmo(grad):
        mat, _, _, _ = transport_lp(mu.weights, nu.weights, grad.reshape(n, m))
        return mat.ravel()

    _, rep = frank_wolfe(oracle, lmo, ref.ravel(), tol=1e-8, max_iters=6000,
                         away_steps=True, line_search="quadratic")
    return rep.value


def test_criterion_11_relaxed_wmot():
    t0 = time.time()
    from wot.martingale import chat_entropy, relaxed_wmot_dual, relaxed_wmot_solve, wmot_oracle

    rng = np.random.default_rng(ROOT_SEED + 11)
    for _ in range(20):
        mu, nu = mps_pair(rng, int(rng.integers(2, 4)))
        chat = chat_entropy(nu, 0.5)
        for beta in (1.0, 100.0):
            th = theta_sq(1.0) if beta == 1.0 else scaled(theta_sq(1.0), beta)
            sol = relaxed_wmot_solve(mu, nu, th, chat, tol=1e-7)
            g0 = warm_dual_g(mu, nu, wmot_oracle(nu, th, chat), sol.coupling)
            _, dval, _ = relaxed_wmot_dual(mu, nu, th, chat, iters=6, init_g=g0)
            gap = sol.value - dval
            assert -1e-7 <= gap <= 1e-3 * (1 + abs(sol.value))
            assert sol.martingale_residual() <= 1e-8
            t_part = ot_solve(mu, sol.eta, lambda x, y: th.evaluate(x - y)).value
            assert abs(sol.value - (t_part + sol.fiber_part)) <= 1e-6
    _report(11, "relaxed WMOT gaps, martingale + decomposition residuals", t0)


def test_criterion_12_emt_gibbs_structure():
    t0 = time.time()
    from wot.martingale import emt_sinkhorn, gibbs_reconstruction_residual

    rng = np.random.default_rng(ROOT_SEED + 12)
    cfn = lambda m, y: float(abs(m[0] - y[0]))
    for _ in range(20):
        eta, nu = emt_pair(rng, int(rng.integers(1, 4)))
        sol = emt_sinkhorn(eta, nu, cfn, eps=0.5)
        assert sol.converged
        assert gibbs_reconstruction_residual(sol, eta, nu, cfn, 0.5) <= 1e-6
        assert (sol.rows > 0).all()  # every nu-atom charged
    _report(12, "Delta-tilted Gibbs factorization on 20 EMT instances", t0)


def test_criterion_13_convex_analysis_kit():
    t0 = time.time()
    rng = np.random.default_rng(ROOT_SEED + 13)
    # conjugate identity (f box g)* = f* + g* on 100 random polyhedral pairs
    for _ in range(100):
        f = _random_polyhedral(rng)
        g = SampledFunction(f.sites, _random_polyhedral(rng).values)
        sumset = np.unique((f.sites[:, 0][:, None] + g.sites[:, 0][None, :]).ravel())[:, None]
        box = inf_convolution(f, g, sumset)
        duals = np.unique(np.concatenate([
            np.diff(f.values) / np.diff(f.sites[:, 0]),
            np.diff(g.values) / np.diff(g.sites[:, 0])]))[:, None]
        lhs = conjugate(box, duals).values
        rhs = conjugate(f, duals).values + conjugate(g, duals).values
        assert np.abs(lhs - rhs).max() <= 1e-8
    # Fenchel-Young equality at selected subgradients
    for _ in range(25):
        f = _random_polyhedral(rng)
        for i in range(f.n):
            gsel = subgradient_select(f, i)
            fstar = conjugate(f, [gsel]).values[0]
            assert abs(float(f.sites[i] @ gsel) - (f.values[i] + fstar)) <= 1e-8
    # membership of subgradients of h_K box phi in K
    for _ in range(20):
        a, b = np.sort(rng.uniform(-2, 2, 2))
        if b - a < 0.1:
            continue
        k = Polytope.interval(a, b)
        phi = _random_polyhedral(rng)
        diffs = np.unique((phi.sites[:, 0][:, None] - phi.sites[:, 0][None, :]).ravel())
        hgrid = np.unique(np.concatenate([diffs, np.linspace(-4, 4, 9)]))[:, None]
        hk = SampledFunction(hgrid, np.array([support_function(k, x) for x in hgrid]))
        box = inf_convolution(hk, phi, phi.sites)
        for i in range(1, box.n - 1):
            assert k.membership_residual(subgradient_select(box, i)) <= 1e-8
    # box fixed point <=> theta-Lipschitz, 50 pairs
    hits = 0
    while hits < 50:
        a, b = np.sort(rng.uniform(-1.5, 1.5, 2))
        if b - a < 0.1 or a > 0 or b < 0:
            continue
        hits += 1
        k = Polytope.interval(a, b)
        phi = _random_polyhedral(rng)
        sites = phi.sites
        diffs = np.unique((sites[:, 0][:, None] - sites[:, 0][None, :]).ravel())[:, None]
        h = SampledFunction(diffs, np.array([support_function(k, x) for x in diffs]))
        box = inf_convolution(h, phi, sites)
        fixed = np.abs(box.values - phi.values).max() <= 1e-8
        lips = all(phi.values[i] - phi.values[j]
                   <= support_function(k, sites[i] - sites[j]) + 1e-10
                   for i in range(phi.n) for j in range(phi.n))
        assert fixed == lips
    _report(13, "conjugate identity, Fenchel-Young, membership, Lipschitz", t0)


def _random_polyhedral(rng, n=5):
    z = np.sort(rng.uniform(-2, 2, n))
    while np.diff(z).min() < 1e-3:
        z = np.sort(rng.uniform(-2, 2, n))
    slopes = np.sort(rng.uniform(-2, 2, n - 1))
    vals = [float(rng.uniform(-1, 1))]
    for k in range(n - 1):
        vals.append(vals[-1] + slopes[k] * (z[k + 1] - z[k]))
    return SampledFunction(z[:, None], np.array(vals))


def test_criterion_14_byte_identical_reports(tmp_path):
    t0 = time.time()
    from wot.cli import main

    for rerun in ("a", "b"):
        d = tmp_path / rerun
        d.mkdir()
        inst = d / "inst.json"
        assert main(["gen", "--seed", str(ROOT_SEED), "--n", "3", "--m", "4",
                     "--d", "1", "--family", "entropy", "--out", str(inst)]) == 0
        assert main(["ot", "--instance", str(inst), "--seed", "7",
                     "--out", str(d / "ot.json")]) == 0
        assert main(["solve", "--instance", str(inst), "--seed", "7",
                     "--out", str(d / "solve.json")]) == 0
        assert main(["sinkhorn", "--instance", str(inst), "--cost", "sqeuclidean",
                     "--eps", "0.5", "--seed", "7", "--out", str(d / "sink.json")]) == 0
        mu_file = d / "mu.json"
        mu_file.write_text(json.dumps(json.loads(inst.read_text())["mu"]))
        nu_file = d / "nu.json"
        nu_file.write_text(json.dumps(json.loads(inst.read_text())["nu"]))
        assert main(["strassen", "--eta", str(mu_file), "--nu", str(nu_file),
                     "--out", str(d / "strassen.json")]) in (0, 3)
    for name in ("inst.json", "ot.json", "solve.json", "sink.json", "strassen.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes(), name
    _report(14, "reports byte-identical across reruns", t0)
