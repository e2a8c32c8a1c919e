"""Barycentric transport: BT solvers, convex-order projection, convex
Kantorovich-Rubinstein duals, map-regularity checks, superhedging LP."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .classical import ot_solve
from .convexkit import Polytope, SampledFunction, biconjugate, inf_convolution, is_convex_1d
from .lp import lp_solve
from .measures import Coupling, DiscreteMeasure, StructuralError
from .optim import SolveReport
from .oracles import barycentric_oracle
from .thetas import ThetaOracle
from .weak import dual_pair_from_g, primal_solve_convex, warm_dual_g


@dataclass
class BarycentricSolution:
    coupling: Coupling
    means: np.ndarray           # T(x_i) = mean of the i-th conditional law
    eta: DiscreteMeasure        # sum_i mu_i delta_{T(x_i)}, canonicalized
    value: float
    report: SolveReport
    dual: dict | None = None    # optional: {"psi": ..., "phi": ...}


class ConsistencyError(RuntimeError):
    """Solver outputs failed an internal cross-validation."""


def bt_solve(mu: DiscreteMeasure, nu: DiscreteMeasure, theta: ThetaOracle,
             tol: float = 1e-9, max_iters: int = 3000) -> BarycentricSolution:
    """min over couplings of sum_i mu_i theta(x_i - mean pi_{x_i}).

    Support-function penalties are dispatched to an exact epigraph LP (the
    generic Frank-Wolfe route cannot certify 1e-6 on nonsmooth objectives);
    smooth penalties run through the convex weak solver with a KKT polish.
    """
    if theta.support_function and theta.polytope is not None:
        mat, value = _bt_support_lp(mu, nu, theta.polytope)
        pi = Coupling(mu, nu, mat)
        report = SolveReport(value, 1, 0.0, True)
    else:
        oracle = barycentric_oracle(nu, theta)
        pi, report = primal_solve_convex(mu, nu, oracle, tol=tol,
                                         max_iters=max_iters, polish=True)
    means = pi.conditional_means()
    eta = DiscreteMeasure(means, mu.weights)
    value = float(sum(mu.weights[i] * theta.evaluate(mu.points[i] - means[i])
                      for i in range(mu.n)))
    report.value = value
    return BarycentricSolution(pi, means, eta, value, report)


def _bt_support_lp(mu: DiscreteMeasure, nu: DiscreteMeasure, k: Polytope):
    """Epigraph LP for theta = h_K: t_i >= <v, x_i - mean_i> per vertex v."""
    n, m = mu.n, nu.n
    verts = k.vertices
    nv = n * m
    c = np.concatenate([np.zeros(nv), mu.weights])
    a_eq = np.zeros((n + m, nv + n))
    for i in range(n):
        a_eq[i, i * m : (i + 1) * m] = 1.0
    for j in range(m):
        a_eq[n + j, j:nv:m] = 1.0
    b_eq = np.concatenate([mu.weights, nu.weights])
    rows = []
    rhs = []
    for i in range(n):
        for v in verts:
            row = np.zeros(nv + n)
            row[i * m : (i + 1) * m] = -(nu.points @ v) / mu.weights[i]
            row[nv + i] = -1.0
            rows.append(row)
            rhs.append(-float(v @ mu.points[i]))
    bounds = [(0.0, None)] * nv + [(None, None)] * n
    sol = lp_solve(c, a_eq=a_eq, b_eq=b_eq, a_ub=np.array(rows), b_ub=np.array(rhs),
                   bounds=bounds)
    if sol.status != "optimal":  # pragma: no cover - always feasible/bounded
        raise ConsistencyError(f"barycentric LP status {sol.status}")
    return sol.primal[:nv].reshape(n, m), sol.value


def strassen_lp(eta: DiscreteMeasure, nu: DiscreteMeasure):
    """Martingale-coupling feasibility between eta and nu.

    Feasible: returns (True, kappa, None). Infeasible: the Farkas ray is
    reassembled into a convex witness psi = max of affine functions with
    eta(psi) > nu(psi); returns (False, None, witness dict).
    """
    if eta.dim != nu.dim:
        raise StructuralError("dimension mismatch")
    k, m, d = eta.n, nu.n, eta.dim
    nv = k * m
    a_eq = np.zeros((k + m + k * d, nv))
    for i in range(k):
        a_eq[i, i * m : (i + 1) * m] = 1.0
    for j in range(m):
        a_eq[k + j, j:nv:m] = 1.0
    for i in range(k):
        for j in range(m):
            a_eq[k + m + i * d : k + m + (i + 1) * d, i * m + j] = nu.points[j] - eta.points[i]
    b_eq = np.concatenate([eta.weights, nu.weights, np.zeros(k * d)])
    sol = lp_solve(np.zeros(nv), a_eq=a_eq, b_eq=b_eq)
    if sol.status == "optimal":
        mat = np.maximum(sol.primal.reshape(k, m), 0.0)
        from .weak import _repair_marginals

        kappa = Coupling(eta, nu, _repair_marginals(mat, eta.weights, nu.weights))
        return True, kappa, None
    y = sol.farkas[0]
    u = y[:k]
    v = y[k : k + m]
    w = y[k + m :].reshape(k, d)

    def psi(z):
        z = np.atleast_1d(np.asarray(z, dtype=float))
        return float(np.max(u + w @ z - np.sum(w * eta.points, axis=1)))

    support = np.vstack([eta.points, nu.points])
    values = np.array([psi(z) for z in support])
    gap = float(eta.weights @ values[:k] - nu.weights @ np.array([psi(z) for z in nu.points]))
    witness = {
        "support": support,
        "values": values,
        "gap": gap,
        "convex_certified": bool(d >= 2 or is_convex_1d(SampledFunction(support, values))),
    }
    return False, None, witness


def convex_order_margin(eta: DiscreteMeasure, nu: DiscreteMeasure) -> float:
    """Quantitative Strassen margin: BT value for the cross-polytope penalty.

    Zero (to LP tolerance) iff eta <=_c nu; otherwise the max-coordinate
    transport distance from eta to the martingale-feasible set.
    """
    cross = Polytope(np.vstack([np.eye(eta.dim), -np.eye(eta.dim)]))
    _, value = _bt_support_lp(eta, nu, cross)
    return float(max(value, 0.0))


def convex_order_projection(mu: DiscreteMeasure, nu: DiscreteMeasure,
                            theta: ThetaOracle, tol: float = 1e-7):
    """Project mu onto {eta <=_c nu} for the theta transport cost.

    Returns (eta, xi) with xi the Monge coupling x -> T(x). Validates that
    eta is in convex order with nu and that T_theta(mu, eta) reproduces the
    BT value; failures above tol raise ConsistencyError.
    """
    sol = bt_solve(mu, nu, theta)
    eta, xi = _monge_projection(mu, sol.means)
    margin = convex_order_margin(eta, nu)
    if margin > tol:
        raise ConsistencyError(f"projected eta violates convex order by {margin}")
    t_val = ot_solve(mu, eta, lambda x, y: theta.evaluate(x - y)).value
    if abs(t_val - sol.value) > max(tol, 1e-6):
        raise ConsistencyError(
            f"classical OT to eta gives {t_val}, barycentric value {sol.value}")
    return eta, xi, sol


def _monge_projection(mu: DiscreteMeasure, means: np.ndarray):
    eta = DiscreteMeasure(means, mu.weights)
    mat = np.zeros((mu.n, eta.n))
    for i in range(mu.n):
        dists = np.linalg.norm(eta.points - means[i], axis=1)
        mat[i, int(np.argmin(dists))] = mu.weights[i]
    return eta, Coupling(mu, eta, mat)


def kr_dual(mu: DiscreteMeasure, nu: DiscreteMeasure, theta: ThetaOracle,
            k: Polytope | None = None):
    """Convex Kantorovich-Rubinstein LP for support-function penalties.

    Maximizes mu(phi) - nu(phi) over discrete convex phi with gradients in
    K, encoded by per-point gradient variables: phi_l >= phi_k + <g_k,
    z_l - z_k> plus the facet inequalities of K.
    """
    k = k if k is not None else theta.polytope
    if k is None:
        raise StructuralError("kr_dual needs the polytope K of the support function")
    d = mu.dim
    support, wmu, wnu = _joint_support(mu, nu)
    npts = support.shape[0]
    a_f, b_f = k.facet_inequalities()
    nv = npts * (1 + d)

    def phi_idx(i):
        return i

    def g_idx(i):
        return npts + i * d

    rows = []
    rhs = []
    for i in range(npts):
        for l in range(npts):
            if i == l:
                continue
            row = np.zeros(nv)
            row[phi_idx(i)] += 1.0
            row[phi_idx(l)] -= 1.0
            row[g_idx(i) : g_idx(i) + d] = support[l] - support[i]
            rows.append(row)
            rhs.append(0.0)
        for af, bf in zip(a_f, b_f):
            row = np.zeros(nv)
            row[g_idx(i) : g_idx(i) + d] = af
            rows.append(row)
            rhs.append(float(bf))
    a_eq = np.zeros((1, nv))
    a_eq[0, phi_idx(0)] = 1.0
    c = np.zeros(nv)
    c[:npts] = -(wmu - wnu)
    sol = lp_solve(c, a_eq=a_eq, b_eq=[0.0], a_ub=np.array(rows), b_ub=np.array(rhs),
                   bounds=[(None, None)] * nv)
    if sol.status != "optimal":  # pragma: no cover
        raise ConsistencyError(f"KR dual LP status {sol.status}")
    phi = sol.primal[:npts].copy()
    grads = sol.primal[npts:].reshape(npts, d).copy()
    return -sol.value, phi, grads, support


def _joint_support(mu: DiscreteMeasure, nu: DiscreteMeasure):
    pts = [p.copy() for p in mu.points]
    for q in nu.points:
        if not any(np.linalg.norm(q - p) <= 1e-12 for p in pts):
            pts.append(q.copy())
    support = np.array(pts)
    wmu = np.zeros(support.shape[0])
    wnu = np.zeros(support.shape[0])
    for p, w in zip(mu.points, mu.weights):
        wmu[next(i for i, s in enumerate(support) if np.linalg.norm(s - p) <= 1e-12)] += w
    for p, w in zip(nu.points, nu.weights):
        wnu[next(i for i, s in enumerate(support) if np.linalg.norm(s - p) <= 1e-12)] += w
    return support, wmu, wnu


def superhedge_lp(mu: DiscreteMeasure, nu: DiscreteMeasure, k: Polytope):
    """Maximal riskless profit under the trading restriction Delta in K.

    max w s.t. w <= (f1_i - mu(f1)) + (f2_j - nu(f2)) + <Delta_i, y_j - x_i>
    with Delta_i in K. Equals sum_i mu_i h_K(mean_i - x_i) at the optimum of
    the reflected barycentric problem.
    """
    n, m, d = mu.n, nu.n, mu.dim
    a_f, b_f = k.facet_inequalities()
    # variables: w, f1 (n), f2 (m), Delta (n*d)
    nv = 1 + n + m + n * d
    rows = []
    rhs = []
    for i in range(n):
        for j in range(m):
            row = np.zeros(nv)
            row[0] = 1.0
            row[1 + i] -= 1.0
            row[1 : 1 + n] += mu.weights
            row[1 + n + j] -= 1.0
            row[1 + n : 1 + n + m] += nu.weights
            row[1 + n + m + i * d : 1 + n + m + (i + 1) * d] = -(nu.points[j] - mu.points[i])
            rows.append(row)
            rhs.append(0.0)
    for i in range(n):
        for af, bf in zip(a_f, b_f):
            row = np.zeros(nv)
            row[1 + n + m + i * d : 1 + n + m + (i + 1) * d] = af
            rows.append(row)
            rhs.append(float(bf))
    # Pin the shift directions for determinism.
    a_eq = np.zeros((2, nv))
    a_eq[0, 1] = 1.0
    a_eq[1, 1 + n] = 1.0
    c = np.zeros(nv)
    c[0] = -1.0
    sol = lp_solve(c, a_eq=a_eq, b_eq=[0.0, 0.0], a_ub=np.array(rows), b_ub=np.array(rhs),
                   bounds=[(None, None)] * nv)
    if sol.status != "optimal":  # pragma: no cover
        raise ConsistencyError(f"superhedge LP status {sol.status}")
    w = -sol.value
    f1 = sol.primal[1 : 1 + n].copy()
    f2 = sol.primal[1 + n : 1 + n + m].copy()
    delta = sol.primal[1 + n + m :].reshape(n, d).copy()
    return w, f1, f2, delta


def bt_dual_transform(psi: SampledFunction, theta: ThetaOracle,
                      queries, mu: DiscreteMeasure | None = None,
                      nu: DiscreteMeasure | None = None,
                      dual_grid=None):
    """phi = theta box psi** on the queries; the (-psi)-transform of the
    barycentric cost. Returns (phi, dual_value or None)."""
    queries = np.atleast_2d(np.asarray(queries, dtype=float))
    psi_cc = biconjugate(psi, dual_grid=dual_grid)
    # Sample theta on the difference set so the convolution hits exact sites.
    diffs = []
    for q in queries:
        for y in psi_cc.sites[np.isfinite(psi_cc.values)]:
            diffs.append(q - y)
    uniq: list[np.ndarray] = []
    for p in diffs:
        if not any(np.linalg.norm(p - u) <= 1e-12 for u in uniq):
            uniq.append(p)
    tsites = np.array(uniq)
    tvals = np.array([theta.evaluate(z) for z in tsites])
    theta_sampled = SampledFunction(tsites, tvals)
    phi = inf_convolution(theta_sampled, psi_cc, queries, dual_grid=dual_grid)
    dual_value = None
    if mu is not None and nu is not None:
        mu_phi = float(mu.weights @ np.array(
            [phi.values[_find_row(phi.sites, x)] for x in mu.points]))
        nu_psi = float(nu.weights @ np.array(
            [psi.values[_find_row(psi.sites, y)] for y in nu.points]))
        dual_value = mu_phi - nu_psi
    return phi, dual_value


def _find_row(arr: np.ndarray, row: np.ndarray) -> int:
    for i, r in enumerate(arr):
        if np.linalg.norm(r - row) <= 1e-12:
            return i
    raise KeyError("point not found in sample sites")


def gangbo_mccann_checks(sol: BarycentricSolution, theta: ThetaOracle,
                         mu: DiscreteMeasure, nu: DiscreteMeasure,
                         probe_points=None, starts: int = 5,
                         seed: int = 0) -> dict:
    """Optimality structure report for a barycentric solution.

    (a) theta-subdifferential inclusion residual of phi = theta box psi from
        a dual run; (b) multi-start uniqueness probe of the mean map when
        theta is strictly convex; (c) 1-Lipschitz and monotonicity residuals
        of T for quadratic penalties.
    """
    rng = np.random.default_rng(seed)
    report: dict = {}
    oracle = barycentric_oracle(nu, theta)
    g = warm_dual_g(mu, nu, oracle, sol.coupling)
    pair = dual_pair_from_g(g, mu, oracle, nu)
    phi_mu = pair.f  # phi(x_i) = g^C(x_i) = (theta box psi)(x_i) with psi = -g
    psi = -g

    probes = probe_points
    if probes is None:
        probes = np.vstack([mu.points, nu.points])
    resid = 0.0
    for i in range(mu.n):
        base = phi_mu[i] - theta.evaluate(mu.points[i] - sol.means[i])
        for v in probes:
            val, _ = _phi_at(v, psi, nu, theta)
            resid = max(resid, -(base + theta.evaluate(v - sol.means[i]) - val))
    report["subdiff_residual"] = float(max(resid, 0.0))

    if theta.strictly_convex:
        means = [sol.means]
        oracle = barycentric_oracle(nu, theta)
        for s in range(starts):
            start = _random_feasible(mu, nu, rng)
            # Loose FW tolerance: the KKT polish supplies the final accuracy.
            pi, _ = primal_solve_convex(mu, nu, oracle, tol=1e-5, polish=True,
                                        start=start)
            means.append(pi.conditional_means())
        disc = 0.0
        for a in range(len(means)):
            for b in range(a + 1, len(means)):
                disc = max(disc, float(np.abs(means[a] - means[b]).max()))
        report["multistart_mean_discrepancy"] = disc

    if theta.quadratic:
        lip = 0.0
        mono = 0.0
        for i in range(mu.n):
            for j in range(i + 1, mu.n):
                dx = mu.points[i] - mu.points[j]
                dt = sol.means[i] - sol.means[j]
                lip = max(lip, float(np.linalg.norm(dt) - np.linalg.norm(dx)))
                mono = max(mono, float(-(dt @ dx)))
        report["lipschitz_excess"] = lip
        report["monotonicity_defect"] = mono
    return report


def _phi_at(v, psi, nu: DiscreteMeasure, theta: ThetaOracle) -> tuple[float, None]:
    """(theta box psi-hat)(v) with psi sampled on supp(nu): exact transform."""
    from .weak import c_transform
    from .oracles import barycentric_oracle as _bo

    oracle = _bo(nu, theta)
    val, _ = c_transform(-psi, v, oracle, nu)
    return val, None


def _random_feasible(mu: DiscreteMeasure, nu: DiscreteMeasure,
                     rng: np.random.Generator) -> Coupling:
    """Random vertex-ish feasible coupling for multi-start probes."""
    from .classical import transport_lp

    cost = rng.normal(size=(mu.n, nu.n))
    mat, _, _, _ = transport_lp(mu.weights, nu.weights, cost)
    lam = rng.uniform(0.2, 0.8)
    mix = lam * mat + (1 - lam) * np.outer(mu.weights, nu.weights)
    return Coupling(mu, nu, mix)
