"""Relaxed weak martingale transport: mean-constrained transforms, the
Yosida-relaxed solver and its dual, martingale Benamou-Brenier
interpolation, and relaxed entropic martingale transport."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .classical import ot_solve
from .convexkit import SampledFunction, conjugate, default_dual_grid
from .lp import lp_solve
from .measures import Coupling, DiscreteMeasure, DomainError, relative_entropy
from .optim import SolveReport, frank_wolfe, newton_moment_match, supergradient_ascent
from .oracles import WeakCostOracle
from .thetas import ThetaOracle
from .weak import Certificate, lifted_solve, primal_solve_convex

_LOG_FLOOR = 1e-300


@dataclass(frozen=True)
class FiberCostOracle:
    """Cost on conditional laws for martingale problems: the hat-C of the
    relaxation C(x, rho) = hat_C(rho) if mean(rho) = x else +inf."""

    evaluate: callable                 # rho -> extended real
    subgradient: callable              # rho -> vector over supp(nu)
    fiber_convex: bool
    convex: bool
    name: str
    fiber_transform: callable | None = None  # (g, m) -> (value, rho, delta)
    smooth: bool = False
    batch: callable | None = None      # rows -> (values, gradients)


def chat_zero(nu: DiscreteMeasure) -> FiberCostOracle:
    def fiber_transform(g, m):
        # inf over the fiber of -rho(g): a single LP.
        k = nu.n
        a_eq = np.vstack([np.ones((1, k)), nu.points.T])
        b_eq = np.concatenate([[1.0], np.atleast_1d(np.asarray(m, dtype=float))])
        sol = lp_solve(-np.asarray(g, dtype=float), a_eq=a_eq, b_eq=b_eq)
        if sol.status != "optimal":
            raise DomainError("empty fiber")
        rho = np.maximum(sol.primal, 0.0)
        rho /= rho.sum()
        return sol.value, rho, np.zeros(nu.dim)

    return FiberCostOracle(
        evaluate=lambda r: 0.0,
        subgradient=lambda r: np.zeros(nu.n),
        fiber_convex=True,
        convex=True,
        name="zero",
        fiber_transform=fiber_transform,
        smooth=True,
        batch=lambda rows: (np.zeros(rows.shape[0]), np.zeros_like(rows)),
    )


def chat_entropy(nu: DiscreteMeasure, eps: float = 1.0, cost_fn=None,
                 name: str | None = None) -> FiberCostOracle:
    """hat_C(rho) = rho(c(mean rho, .)) + eps H(rho | nu).

    Pure entropy (cost_fn None) is convex; with a mean-dependent cost it is
    convex only on the fibers of the mean map. The fiber transform solves
    inf over {mean rho = m} in closed Gibbs form via an exponential tilt.
    """
    ys = nu.points
    nw = nu.weights
    log_nw = np.log(nw)

    def cost_row(m):
        if cost_fn is None:
            return np.zeros(nu.n)
        return np.array([float(cost_fn(m, y)) for y in ys])

    def evaluate(r):
        r = np.asarray(r, dtype=float)
        h = relative_entropy(r, nw)
        if not math.isfinite(h):
            return math.inf
        mean = r @ ys
        return float(r @ cost_row(mean)) + eps * h

    def subgradient(r):
        r = np.asarray(r, dtype=float)
        mean = r @ ys
        base = cost_row(mean) + eps * (np.log(np.maximum(r, _LOG_FLOOR) / nw) + 1.0)
        if cost_fn is not None:
            # mean-dependence contributes d/d rho_j of rho(c(mean, .)):
            # <rho, dc/dm> y_j by the chain rule, via finite differences.
            d = ys.shape[1]
            eps_fd = 1e-6
            grad_m = np.zeros(d)
            for k in range(d):
                mp = mean.copy()
                mp[k] += eps_fd
                mm = mean.copy()
                mm[k] -= eps_fd
                grad_m[k] = float(r @ (cost_row(mp) - cost_row(mm))) / (2 * eps_fd)
            base = base + ys @ grad_m
        return base

    def fiber_transform(g, m):
        m = np.atleast_1d(np.asarray(m, dtype=float))
        crow = cost_row(m)
        base_logits = (np.asarray(g, dtype=float) - crow) / eps + log_nw

        def tilt_oracle(delta):
            logits = base_logits + (ys @ delta) / eps
            logits = logits - logits.max()
            p = np.exp(logits)
            p /= p.sum()
            mean = p @ ys
            centered = ys - mean
            cov = centered.T @ (p[:, None] * centered)
            return mean, cov

        delta = newton_moment_match(tilt_oracle, m, eps=eps)
        logits = base_logits + (ys @ delta) / eps
        lse = float(logsumexp(logits))
        rho = np.exp(logits - lse)
        value = float(rho @ (crow - np.asarray(g))) + eps * relative_entropy(rho, nw)
        return value, rho, delta

    def batch(rows):
        from .oracles import batch_relative_entropy

        hs = batch_relative_entropy(rows, nw)
        if cost_fn is None:
            vals = eps * hs
            grads = eps * (np.log(np.maximum(rows, _LOG_FLOOR) / nw[None, :]) + 1.0)
            return vals, grads
        vals = np.empty(rows.shape[0])
        grads = np.empty_like(rows)
        for a in range(rows.shape[0]):
            vals[a] = evaluate(rows[a])
            grads[a] = subgradient(rows[a])
        return vals, grads

    return FiberCostOracle(
        evaluate=evaluate,
        subgradient=subgradient,
        fiber_convex=True,
        convex=cost_fn is None,
        name=name or f"entropy[{eps}]" + ("" if cost_fn is None else "+cost"),
        fiber_transform=fiber_transform,
        smooth=True,
        batch=batch,
    )


def in_relative_interior(m, nu: DiscreteMeasure, margin: float = 1e-9) -> bool:
    """m in relint(co(supp nu)): admits an all-positive barycentric rep."""
    m = np.atleast_1d(np.asarray(m, dtype=float))
    k, d = nu.points.shape
    if k == 1:
        return bool(np.linalg.norm(nu.points[0] - m) <= 1e-12)
    # max t s.t. lambda_j >= t, sum lambda = 1, sum lambda y = m
    c = np.zeros(k + 1)
    c[-1] = -1.0
    a_eq = np.zeros((d + 1, k + 1))
    a_eq[:d, :k] = nu.points.T
    a_eq[d, :k] = 1.0
    b_eq = np.concatenate([m, [1.0]])
    a_ub = np.zeros((k, k + 1))
    a_ub[:, :k] = -np.eye(k)
    a_ub[:, -1] = 1.0
    sol = lp_solve(c, a_eq=a_eq, b_eq=b_eq, a_ub=a_ub, b_ub=np.zeros(k),
                   bounds=[(None, None)] * k + [(None, None)])
    return sol.status == "optimal" and -sol.value > margin


def mean_constrained_c_transform(g, m, chat: FiberCostOracle, nu: DiscreteMeasure,
                                 tol: float = 1e-8, max_iters: int = 2000,
                                 use_closed_form: bool = True):
    """g^C(m) = inf { hat_C(rho) - rho(g) : mean(rho) = m } with its argmin.

    Frank-Wolfe over the fiber polytope; the linear minimization there is an
    LP. Oracles may provide a closed-form fiber transform (Gibbs tilt for
    entropy, an LP for linear costs); it is tried first and the generic
    route serves boundary fibers where the tilt diverges. Returns +inf with
    no argmin when the fiber is empty (m outside the hull of supp nu).
    """
    m_vec = np.atleast_1d(np.asarray(m, dtype=float))
    g = np.asarray(g, dtype=float)
    if use_closed_form and chat.fiber_transform is not None:
        try:
            val, rho, _ = chat.fiber_transform(g, m_vec)
            return val, rho
        except DomainError:
            pass  # boundary or infeasible: use the generic route
    if not chat.fiber_convex:
        raise DomainError("fiber transform requires fiber convexity")
    k = nu.n
    ys = nu.points
    a_eq = np.vstack([np.ones((1, k)), ys.T])
    b_eq = np.concatenate([[1.0], m_vec])

    def lmo(grad):
        sol = lp_solve(grad, a_eq=a_eq, b_eq=b_eq)
        if sol.status != "optimal":
            raise DomainError("fiber LP infeasible")
        return np.maximum(sol.primal, 0.0)

    feas = lp_solve(np.zeros(k), a_eq=a_eq, b_eq=b_eq)
    if feas.status != "optimal":
        return math.inf, None
    start = np.maximum(feas.primal, 0.0)
    start /= start.sum()

    def objective(rho):
        v = chat.evaluate(rho)
        if not math.isfinite(v):
            return math.inf, np.zeros(k)
        return v - float(rho @ g), chat.subgradient(rho) - g

    if not math.isfinite(objective(start)[0]):
        return math.inf, None
    rho, rep = frank_wolfe(objective, lmo, start, tol=tol, max_iters=max_iters,
                           away_steps=True)
    return rep.value, rho


def _fiber_feasible(m_vec, nu: DiscreteMeasure) -> bool:
    k = nu.n
    a_eq = np.vstack([np.ones((1, k)), nu.points.T])
    b_eq = np.concatenate([[1.0], m_vec])
    sol = lp_solve(np.zeros(k), a_eq=a_eq, b_eq=b_eq)
    return sol.status == "optimal"


def _fiber_repair(rho, m_vec, nu: DiscreteMeasure):
    """Project tiny constraint drift out of a near-feasible fiber point."""
    k = nu.n
    a = np.vstack([np.ones((1, k)), nu.points.T])
    b = np.concatenate([[1.0], m_vec])
    resid = a @ rho - b
    if np.abs(resid).max() < 1e-13:
        return rho
    corr, *_ = np.linalg.lstsq(a, resid, rcond=None)
    out = np.maximum(rho - corr, 0.0)
    s = a @ out - b
    if np.abs(s).max() > 1e-10:
        return rho
    return out


@dataclass
class RelaxedSolution:
    coupling: Coupling
    eta: DiscreteMeasure
    xi: Coupling                      # mu -> eta, Monge by construction
    kappa: Coupling                   # eta -> nu, martingale
    value: float
    transport_part: float             # sum_i mu_i theta(x_i - m_i)
    fiber_part: float                 # sum_k eta_k hat_C(kappa_k)
    g: np.ndarray | None = None
    gC: np.ndarray | None = None
    certificate: Certificate | None = None
    report: SolveReport | None = None
    extra: dict = field(default_factory=dict)

    def martingale_residual(self) -> float:
        means = self.kappa.conditional_means()
        return float(np.abs(means - self.eta.points).max())


def wmot_oracle(nu: DiscreteMeasure, theta: ThetaOracle,
                chat: FiberCostOracle) -> WeakCostOracle:
    """C_theta(x, rho) = theta(x - mean rho) + hat_C(rho)."""
    ys = nu.points

    def evaluate(x, r):
        r = np.asarray(r, dtype=float)
        v = chat.evaluate(r)
        if not math.isfinite(v):
            return math.inf
        mean = r @ ys
        return theta.evaluate(np.asarray(x, dtype=float) - mean) + v

    def subgrad(x, r):
        r = np.asarray(r, dtype=float)
        mean = r @ ys
        gr = theta.gradient(np.asarray(x, dtype=float) - mean)
        return -(ys @ gr) + chat.subgradient(r)

    batch = None
    if chat.batch is not None:
        def batch(xs, rows):
            vals, grads = chat.batch(rows)
            means = rows @ ys
            for i in range(rows.shape[0]):
                if not math.isfinite(vals[i]):
                    continue
                diff = np.asarray(xs[i], dtype=float) - means[i]
                vals[i] += theta.evaluate(diff)
                grads[i] -= ys @ theta.gradient(diff)
            return vals, grads

    smooth = theta.differentiable and chat.smooth
    return WeakCostOracle(
        evaluate=evaluate,
        subgradient_rho=subgrad,
        convex_in_rho=chat.convex,
        fiber_convex=chat.fiber_convex,
        name=f"theta[{theta.name}]+{chat.name}",
        line_search="brent" if smooth else "golden",
        smooth=smooth,
        batch=batch,
    )


def relaxed_wmot_solve(mu: DiscreteMeasure, nu: DiscreteMeasure,
                       theta: ThetaOracle, chat: FiberCostOracle,
                       tol: float = 1e-8, max_iters: int = 3000,
                       mean_merge_tol: float = 1e-9) -> RelaxedSolution:
    """Solve the Yosida-relaxed WMOT and decompose into eta, xi, kappa.

    Convex hat_C runs through the convex weak solver; otherwise the lifted
    column generation is used. Rows sharing a conditional mean are merged by
    weight average (valid by fiber convexity: merging never increases cost).
    """
    oracle = wmot_oracle(nu, theta, chat)
    if chat.convex:
        pi, rep = primal_solve_convex(mu, nu, oracle, tol=tol,
                                      max_iters=max_iters, polish=True)
        rows = pi.row_array()
        weights = mu.weights
        cert = None
    else:
        plan, pair, cert = lifted_solve(mu, nu, oracle, tol=max(tol, 1e-7))
        rows = np.stack([a.rho.probabilities for a in plan.atoms])
        weights = np.array([a.weight for a in plan.atoms])
        x_index = np.array([a.x_index for a in plan.atoms])
        rep = SolveReport(cert.primal_value, 0, cert.gap, True)
        pi = plan.to_coupling()

    if chat.convex:
        x_index = np.arange(mu.n)

    means = rows @ nu.points
    # Merge atoms with equal means into the intermediate marginal eta.
    groups: list[list[int]] = []
    reps: list[np.ndarray] = []
    for a in range(means.shape[0]):
        placed = False
        for gi, r in enumerate(reps):
            if np.linalg.norm(means[a] - r) <= mean_merge_tol:
                groups[gi].append(a)
                placed = True
                break
        if not placed:
            groups.append([a])
            reps.append(means[a])
    eta_pts = []
    eta_w = []
    kappa_rows = []
    for gi, grp in enumerate(groups):
        w = float(sum(weights[a] for a in grp))
        avg = sum(weights[a] * rows[a] for a in grp) / w
        mean_avg = sum(weights[a] * means[a] for a in grp) / w
        eta_pts.append(mean_avg)
        eta_w.append(w)
        kappa_rows.append(avg)
    order = np.lexsort(np.array(eta_pts).T[::-1])
    eta = DiscreteMeasure(np.array(eta_pts)[order], np.array(eta_w)[order])
    kappa = Coupling(eta, nu, (np.array(kappa_rows) * np.array(eta_w)[:, None])[order])

    # xi: Monge map from mu onto eta through the (possibly lifted) atoms.
    xi_mat = np.zeros((mu.n, eta.n))
    inv = np.empty(len(groups), dtype=int)
    inv[order] = np.arange(len(groups))
    for gi, grp in enumerate(groups):
        col = inv[gi]
        for a in grp:
            xi_mat[x_index[a], col] += weights[a]
    xi = Coupling(mu, eta, xi_mat)

    transport_part = float(sum(
        weights[a] * theta.evaluate(mu.points[x_index[a]] - means[a])
        for a in range(means.shape[0])))
    fiber_part = float(sum(eta.weights[k] * chat.evaluate(kappa.row_array()[k])
                           for k in range(eta.n)))
    value = rep.value
    return RelaxedSolution(pi, eta, xi, kappa, float(value), transport_part,
                           fiber_part, certificate=cert, report=rep)


def relaxed_wmot_dual(mu: DiscreteMeasure, nu: DiscreteMeasure,
                      theta: ThetaOracle, chat: FiberCostOracle,
                      iters: int = 60, init_g=None, mean_grid=None,
                      step_a: float = 1.0, step_b: float = 10.0,
                      trace: bool = False):
    """Ascent on g -> mu(theta box g^C) + nu(g) (the relaxed WMOT dual).

    theta box g^C is evaluated per x by a scan over candidate means (primal
    means, supp nu, dyadic midpoints) refined by a local convex line search
    (g^C is convex in m, so the local refinement is global in d=1). The
    fiber values g^C(m) on the shared grid are computed once per ascent
    step.
    """
    base_grid = _mean_grid(nu, mean_grid)

    def phi_at(x, grid_vals, g):
        best = (math.inf, None, None)
        for m, (val, rho) in zip(base_grid, grid_vals):
            if rho is None:
                continue
            tot = theta.evaluate(np.asarray(x) - m) + val
            if tot < best[0]:
                best = (tot, m, rho)
        if best[1] is None:
            return best
        if nu.dim == 1:
            span = float(nu.points.max() - nu.points.min())
            lo = float(nu.points.min()) + 1e-9 * span
            hi = float(nu.points.max()) - 1e-9 * span

            def h(t):
                val, _ = mean_constrained_c_transform(g, [t], chat, nu)
                return theta.evaluate(np.asarray(x) - np.array([t])) + val

            from .optim import golden_section

            t, v = golden_section(h, lo, hi, tol=1e-10)
            if v < best[0]:
                _, rho = mean_constrained_c_transform(g, [t], chat, nu)
                if rho is not None:
                    best = (v, np.array([t]), rho)
        else:
            from scipy.optimize import minimize

            def h(mv):
                val, _ = mean_constrained_c_transform(g, mv, chat, nu)
                return theta.evaluate(np.asarray(x) - mv) + val

            res = minimize(h, best[1], method="Powell",
                           options={"xtol": 1e-8, "ftol": 1e-10, "maxiter": 100})
            if res.fun < best[0]:
                _, rho = mean_constrained_c_transform(g, np.atleast_1d(res.x), chat, nu)
                if rho is not None:
                    best = (float(res.fun), np.atleast_1d(res.x), rho)
        return best

    def j_oracle(g):
        grid_vals = [mean_constrained_c_transform(g, m, chat, nu) for m in base_grid]
        total = float(nu.weights @ g)
        agg = np.zeros(nu.n)
        for i in range(mu.n):
            val, _, rho = phi_at(mu.points[i], grid_vals, g)
            if rho is None:
                return -math.inf, np.zeros(nu.n)
            total += mu.weights[i] * val
            agg += mu.weights[i] * rho
        return total, nu.weights - agg

    anchor = lambda g: g - float(nu.weights @ g)
    g0 = np.zeros(nu.n) if init_g is None else np.asarray(init_g, dtype=float)
    g_best, rep = supergradient_ascent(j_oracle, iters=iters, step_a=step_a,
                                       step_b=step_b, anchor=anchor, start=g0,
                                       trace=trace)
    value, _ = j_oracle(g_best)
    rep.value = float(value)
    return g_best, float(value), rep


def _mean_grid(nu: DiscreteMeasure, extra=None) -> list[np.ndarray]:
    pts = [p.copy() for p in nu.points]
    if extra is not None:
        pts += [np.atleast_1d(np.asarray(p, dtype=float)) for p in extra]
    if nu.dim == 1:
        # two levels of dyadic midpoints between consecutive candidates
        for _ in range(2):
            pts = _dedupe(pts)
            pts.sort(key=lambda p: float(p[0]))
            mids = [0.5 * (pts[a] + pts[a + 1]) for a in range(len(pts) - 1)]
            pts = pts + mids
        return _dedupe(pts)
    mids = []
    for a in range(len(pts)):
        for b in range(a + 1, len(pts)):
            mids.append(0.5 * (pts[a] + pts[b]))
    out = _dedupe(pts + mids)
    return out[:64]


def _dedupe(pts, tol=1e-10):
    out: list[np.ndarray] = []
    for p in pts:
        if not any(np.linalg.norm(p - q) <= tol for q in out):
            out.append(p)
    return out


# ---------------------------------------------------------------------------
# Martingale Benamou-Brenier interpolation
# ---------------------------------------------------------------------------

def mcov(rho, gamma: DiscreteMeasure, support: DiscreteMeasure | None = None):
    """Maximal covariance sup over couplings of rho and gamma of <y, z>.

    rho is a probability vector over `support` (a DiscreteMeasure). Returns
    (value, potential) with the potential a supergradient of rho -> MCov.
    """
    r = np.asarray(getattr(rho, "probabilities", rho), dtype=float)
    sup_pts = support.points if support is not None else None
    if sup_pts is None:
        raise DomainError("mcov needs the support of rho")
    cost = -(sup_pts @ gamma.points.T)
    keep = r > 0
    if keep.sum() == 0:
        raise DomainError("empty conditional law")
    sub_r = r[keep] / r[keep].sum()
    res = _mcov_lp(sub_r, gamma.weights, cost[keep])
    value, pot_sub = res
    pot = np.zeros(r.size)
    pot[keep] = pot_sub
    if not keep.all():
        # extend the potential to unweighted atoms by the c-transform rule
        gpot = np.min(cost[keep] - pot_sub[:, None], axis=0)
        pot[~keep] = np.min(cost[~keep] - gpot[None, :], axis=1)
    return -value, -pot


def _mcov_lp(rw, gw, cost):
    from .classical import transport_lp

    mat, f, g, value = transport_lp(rw, gw, cost)
    return value, f


def mcov_value_sorted_1d(rho, support_pts, gamma: DiscreteMeasure) -> float:
    """Comonotone (north-west) evaluation of MCov in d=1: exact shortcut."""
    r = np.asarray(getattr(rho, "probabilities", rho), dtype=float)
    ys = np.asarray(support_pts, dtype=float).ravel()
    zs = gamma.points.ravel()
    order_y = np.argsort(ys)
    order_z = np.argsort(zs)
    iy, iz = 0, 0
    ry = r[order_y].copy()
    rz = gamma.weights[order_z].copy()
    total = 0.0
    while iy < ys.size and iz < zs.size:
        w = min(ry[iy], rz[iz])
        if w > 0:
            total += w * ys[order_y[iy]] * zs[order_z[iz]]
        ry[iy] -= w
        rz[iz] -= w
        if ry[iy] <= 1e-15:
            iy += 1
        if iz < zs.size and rz[iz] <= 1e-15:
            iz += 1
    return total


def mbb_oracle(nu: DiscreteMeasure, gamma: DiscreteMeasure, theta: ThetaOracle,
               alpha: float, beta: float) -> WeakCostOracle:
    """C(x, rho) = beta theta(x - mean rho) - alpha MCov(rho, gamma)."""
    ys = nu.points

    def evaluate(x, r):
        r = np.asarray(r, dtype=float)
        mean = r @ ys
        val, _ = mcov(r, gamma, support=nu)
        return beta * theta.evaluate(np.asarray(x) - mean) - alpha * val

    def subgrad(x, r):
        r = np.asarray(r, dtype=float)
        mean = r @ ys
        gr = theta.gradient(np.asarray(x) - mean)
        _, pot = mcov(r, gamma, support=nu)
        return -beta * (ys @ gr) - alpha * pot

    return WeakCostOracle(
        evaluate=evaluate,
        subgradient_rho=subgrad,
        convex_in_rho=True,
        fiber_convex=True,
        name=f"mbb[{alpha},{beta},{theta.name}]",
        line_search="golden",
        smooth=False,  # MCov is polyhedral: keep the subgradient route
    )


def mbb_reg_solve(mu: DiscreteMeasure, nu: DiscreteMeasure, gamma: DiscreteMeasure,
                  alpha: float, beta: float, theta: ThetaOracle,
                  tol: float = 1e-7, max_iters: int = 1500,
                  multistart: int = 0, seed: int = 0) -> RelaxedSolution:
    """Interpolation between barycentric transport and martingale
    Benamou-Brenier: minimize beta theta(x - mean) - alpha MCov(. , gamma).

    Solved in the glued/lifted variables (pi, Q) where Q_i couples the i-th
    conditional law with gamma: MCov becomes linear there, so the objective
    is smooth for differentiable theta and the KKT polish applies. For
    nonsmooth theta the subgradient route over couplings alone is used.
    """
    if float(np.abs(gamma.mean()).max()) > 1e-12:
        raise DomainError("gamma must be centered")
    if alpha < 0 or beta <= 0:
        raise DomainError("alpha >= 0 and beta > 0 required")
    if theta.differentiable:
        pi, rep = _mbb_lifted_solve(mu, nu, gamma, alpha, beta, theta, tol,
                                    max_iters)
        if multistart > 0:
            rng = np.random.default_rng(seed)
            discrepancy = 0.0
            for _ in range(multistart):
                pi2, _ = _mbb_lifted_solve(mu, nu, gamma, alpha, beta, theta,
                                           tol, max_iters, rng=rng)
                discrepancy = max(discrepancy,
                                  float(np.abs(pi2.matrix - pi.matrix).max()))
    else:
        oracle = mbb_oracle(nu, gamma, theta, alpha, beta)
        pi, rep = primal_solve_convex(mu, nu, oracle, tol=tol, max_iters=max_iters)
        if multistart > 0:
            rng = np.random.default_rng(seed)
            from .barycentric import _random_feasible

            discrepancy = 0.0
            for _ in range(multistart):
                start = _random_feasible(mu, nu, rng)
                pi2, _ = primal_solve_convex(mu, nu, oracle, tol=tol,
                                             max_iters=max_iters, start=start)
                discrepancy = max(discrepancy,
                                  float(np.abs(pi2.matrix - pi.matrix).max()))
    chat = FiberCostOracle(
        evaluate=lambda r: -alpha * mcov(r, gamma, support=nu)[0],
        subgradient=lambda r: -alpha * mcov(r, gamma, support=nu)[1],
        fiber_convex=True,
        convex=True,
        name="-mcov",
    )
    sol = _decompose(pi, mu, nu, lambda x, m: beta * theta.evaluate(x - m), chat)
    sol.report = rep
    sol.value = rep.value
    if multistart > 0:
        sol.extra["multistart_coupling_discrepancy"] = discrepancy
    return sol


def _mbb_lifted_solve(mu: DiscreteMeasure, nu: DiscreteMeasure,
                      gamma: DiscreteMeasure, alpha: float, beta: float,
                      theta: ThetaOracle, tol: float, max_iters: int,
                      rng: np.random.Generator | None = None):
    """Away-step FW + KKT polish over the glued polytope.

    Variables z = [pi (n*m), Q (n*m*K)] with constraints: pi has marginals
    (mu, nu); sum_k Q_ijk = pi_ij; sum_j Q_ijk = mu_i gamma_k. The MCov term
    is -alpha <Q, y.z> (linear); the theta term is smooth in pi.
    """
    n, m, kg = mu.n, nu.n, gamma.n
    ys = nu.points
    yz = np.einsum("jd,kd->jk", nu.points, gamma.points)  # <y_j, z_k>
    npi = n * m
    nz = npi + n * m * kg

    def split(z):
        return z[:npi].reshape(n, m), z[npi:].reshape(n, m, kg)

    def objective(z):
        pi, q = split(z)
        rows = pi / mu.weights[:, None]
        means = rows @ ys
        val = -alpha * float(np.einsum("ijk,jk->", q, yz))
        gpi = np.empty((n, m))
        for i in range(n):
            diff = mu.points[i] - means[i]
            val += beta * mu.weights[i] * theta.evaluate(diff)
            gpi[i] = -beta * (ys @ theta.gradient(diff))
        gq = -alpha * np.broadcast_to(yz, (n, m, kg))
        return val, np.concatenate([gpi.ravel(), gq.ravel()])

    rows_eq = []
    rhs_eq = []
    for i in range(n):  # pi row sums
        r = np.zeros(nz)
        r[i * m : (i + 1) * m] = 1.0
        rows_eq.append(r)
        rhs_eq.append(mu.weights[i])
    for j in range(m):  # pi column sums
        r = np.zeros(nz)
        r[j:npi:m] = 1.0
        rows_eq.append(r)
        rhs_eq.append(nu.weights[j])
    for i in range(n):  # gluing: sum_k Q_ijk = pi_ij
        for j in range(m):
            r = np.zeros(nz)
            r[i * m + j] = -1.0
            base = npi + (i * m + j) * kg
            r[base : base + kg] = 1.0
            rows_eq.append(r)
            rhs_eq.append(0.0)
    for i in range(n):  # gamma marginals: sum_j Q_ijk = mu_i gamma_k
        for k in range(kg):
            r = np.zeros(nz)
            for j in range(m):
                r[npi + (i * m + j) * kg + k] = 1.0
            rows_eq.append(r)
            rhs_eq.append(mu.weights[i] * gamma.weights[k])
    a_eq = np.array(rows_eq)
    b_eq = np.array(rhs_eq)

    def lmo(grad):
        sol = lp_solve(grad, a_eq=a_eq, b_eq=b_eq)
        if sol.status != "optimal":  # pragma: no cover - polytope nonempty
            raise DomainError("glued polytope LP failed")
        return np.maximum(sol.primal, 0.0)

    if rng is None:
        pi0 = np.outer(mu.weights, nu.weights)
    else:
        from .classical import transport_lp

        mat, _, _, _ = transport_lp(mu.weights, nu.weights, rng.normal(size=(n, m)))
        lam = rng.uniform(0.2, 0.8)
        pi0 = lam * mat + (1 - lam) * np.outer(mu.weights, nu.weights)
    q0 = pi0[:, :, None] * gamma.weights[None, None, :]
    z0 = np.concatenate([pi0.ravel(), q0.ravel()])
    # Away-step FW terminates on the exact optimal face for this smooth
    # quadratic-plus-linear objective; no separate polish is needed.
    z, rep = frank_wolfe(objective, lmo, z0, tol=tol, max_iters=max_iters,
                         away_steps=True, line_search="quadratic"
                         if theta.quadratic else "brent")
    pi, _ = split(z)
    from .weak import _repair_marginals

    return Coupling(mu, nu, _repair_marginals(np.maximum(pi, 0.0),
                                              mu.weights, nu.weights)), rep


def _decompose(pi: Coupling, mu, nu, pair_cost, chat: FiberCostOracle,
               mean_merge_tol: float = 1e-9) -> RelaxedSolution:
    rows = pi.row_array()
    means = rows @ nu.points
    groups: list[list[int]] = []
    reps: list[np.ndarray] = []
    for a in range(mu.n):
        placed = False
        for gi, r in enumerate(reps):
            if np.linalg.norm(means[a] - r) <= mean_merge_tol:
                groups[gi].append(a)
                placed = True
                break
        if not placed:
            groups.append([a])
            reps.append(means[a])
    eta_pts, eta_w, kappa_rows = [], [], []
    for grp in groups:
        w = float(sum(mu.weights[a] for a in grp))
        eta_pts.append(sum(mu.weights[a] * means[a] for a in grp) / w)
        eta_w.append(w)
        kappa_rows.append(sum(mu.weights[a] * rows[a] for a in grp) / w)
    order = np.lexsort(np.array(eta_pts).T[::-1])
    eta = DiscreteMeasure(np.array(eta_pts)[order], np.array(eta_w)[order])
    kappa = Coupling(eta, nu, (np.array(kappa_rows) * np.array(eta_w)[:, None])[order])
    inv = np.empty(len(groups), dtype=int)
    inv[order] = np.arange(len(groups))
    xi_mat = np.zeros((mu.n, eta.n))
    for gi, grp in enumerate(groups):
        for a in grp:
            xi_mat[a, inv[gi]] += mu.weights[a]
    xi = Coupling(mu, eta, xi_mat)
    transport_part = float(sum(mu.weights[a] * pair_cost(mu.points[a], means[a])
                               for a in range(mu.n)))
    fiber_part = float(sum(eta.weights[k] * chat.evaluate(kappa.row_array()[k])
                           for k in range(eta.n)))
    return RelaxedSolution(pi, eta, xi, kappa, transport_part + fiber_part,
                           transport_part, fiber_part)


def mbb_dual_eval(psi: SampledFunction, gamma: DiscreteMeasure,
                  theta: ThetaOracle, mu: DiscreteMeasure, nu: DiscreteMeasure,
                  dual_grid=None) -> float:
    """Dual functional mu(theta box (psi* conv gamma-check)*) - nu(psi).

    psi is convex-sampled on a grid containing supp(nu); the smoothed
    conjugate (psi* conv gamma-check)(s) = sum_k gamma_k psi*(s + z_k).
    """
    grid = default_dual_grid(psi) if dual_grid is None else np.atleast_2d(dual_grid)
    psi_star = conjugate(psi, grid).values
    smoothed = np.empty(grid.shape[0])
    for a, s in enumerate(grid):
        shifted = s[None, :] + gamma.points
        vals = conjugate(psi, shifted).values
        smoothed[a] = float(gamma.weights @ vals)
    smooth_fn = SampledFunction(grid, smoothed)
    # (psi* conv gamma)^* evaluated via its conjugate on the mean space, then
    # inf-convolved with theta: phi(x) = inf_m theta(x-m) + (smoothed)^*(m).
    total = 0.0
    for i in range(mu.n):
        x = mu.points[i]

        def phi_of_m(m):
            inner = float(np.max(grid @ m - smoothed))  # (smoothed)^*(m)
            return theta.evaluate(x - m) + inner

        cands = [nu.points[j] for j in range(nu.n)]
        for a in range(nu.n):
            for b in range(a + 1, nu.n):
                cands.append(0.5 * (nu.points[a] + nu.points[b]))
        best = min(phi_of_m(m) for m in cands)
        if nu.dim == 1:
            from .optim import golden_section

            lo, hi = float(nu.points.min()), float(nu.points.max())
            _, v = golden_section(lambda t: phi_of_m(np.array([t])), lo, hi, tol=1e-10)
            best = min(best, v)
        total += mu.weights[i] * best
    nu_psi = 0.0
    for y, w in zip(nu.points, nu.weights):
        idx = None
        for k, s in enumerate(psi.sites):
            if np.linalg.norm(s - y) <= 1e-12:
                idx = k
                break
        if idx is None:
            raise DomainError("psi must be sampled on supp(nu)")
        nu_psi += w * psi.values[idx]
    return float(total - nu_psi)


# ---------------------------------------------------------------------------
# Entropic martingale transport
# ---------------------------------------------------------------------------

@dataclass
class EMTSolution:
    kappa: Coupling | None       # None when the marginal matching failed
    rows: np.ndarray             # conditional Gibbs kernels, one per eta atom
    g: np.ndarray
    delta: np.ndarray            # tilt field, one vector per eta atom
    gC: np.ndarray               # fiber transform values per eta atom
    value: float
    iterations: int
    converged: bool
    marginal_error: float


def emt_sinkhorn(eta: DiscreteMeasure, nu: DiscreteMeasure, cost_fn, eps: float,
                 tol: float = 1e-10, max_iters: int = 5000,
                 warm: tuple[np.ndarray, np.ndarray] | None = None) -> EMTSolution:
    """Entropic martingale transport by tilted-Gibbs block iteration.

    Each sweep finds, per eta-atom m, the tilt Delta(m) making the Gibbs
    kernel kappa_m proportional to nu exp((g + <Delta,y-m> - c(m,.))/eps)
    have mean m (damped Newton), then corrects g by the log-domain marginal
    ratio. Requires every eta-atom in the relative interior of co(supp nu).
    """
    if eps <= 0:
        raise DomainError("eps must be positive")
    # Marginal convergence further requires eta <=_c nu (Strassen); callers
    # check that where it matters; a non-ordered pair yields converged=False.
    for m in eta.points:
        if not in_relative_interior(m, nu):
            if nu.n == 1 and np.linalg.norm(nu.points[0] - m) <= 1e-12:
                continue
            raise DomainError(
                "an eta-atom lies outside the relative interior of co(supp nu); "
                "the Gibbs kernel cannot charge every nu-atom")
    k, mdim = eta.n, eta.dim
    ys = nu.points
    log_nw = np.log(nu.weights)
    g = np.zeros(nu.n)
    deltas = np.zeros((k, mdim))
    if warm is not None:
        wg, wd = warm
        if wg is not None and wg.shape == (nu.n,):
            g = wg.copy()
        if wd is not None and wd.shape == (k, mdim):
            deltas = wd.copy()
    crows = np.array([[float(cost_fn(m, y)) for y in ys] for m in eta.points])
    err = math.inf
    it = 0
    kappa_rows = np.empty((k, nu.n))
    for it in range(1, max_iters + 1):
        for a in range(k):
            base_logits = (g - crows[a]) / eps + log_nw

            def tilt_oracle(delta, base_logits=base_logits):
                logits = base_logits + (ys @ delta) / eps
                logits = logits - logits.max()
                p = np.exp(logits)
                p /= p.sum()
                mean = p @ ys
                centered = ys - mean
                cov = centered.T @ (p[:, None] * centered)
                return mean, cov

            deltas[a] = newton_moment_match(tilt_oracle, eta.points[a], eps=eps,
                                            start=deltas[a])
            logits = base_logits + (ys @ deltas[a]) / eps
            kappa_rows[a] = np.exp(logits - logsumexp(logits))
        marg = eta.weights @ kappa_rows
        err = float(np.abs(marg - nu.weights).sum())
        if err <= tol:
            break
        g = g - eps * np.log(np.maximum(marg, _LOG_FLOOR) / nu.weights)
        g = g - float(nu.weights @ g)
    converged = err <= tol
    gC = np.array([
        float(kappa_rows[a] @ (crows[a] - g)) + eps * relative_entropy(kappa_rows[a], nu.weights)
        for a in range(k)
    ])
    kappa = None
    if converged:
        mat = kappa_rows * eta.weights[:, None]
        # rank-one marginal cleanup (row sums preserved: the defect sums to 0)
        mat = mat + np.outer(eta.weights, nu.weights - mat.sum(axis=0))
        kappa = Coupling(eta, nu, np.maximum(mat, 0.0))
    value = float(sum(eta.weights[a] * (float(kappa_rows[a] @ crows[a])
                                        + eps * relative_entropy(kappa_rows[a], nu.weights))
                      for a in range(k)))
    return EMTSolution(kappa, kappa_rows.copy(), g, deltas, gC, value, it, converged, err)


def gibbs_reconstruction_residual(sol: EMTSolution, eta: DiscreteMeasure,
                                  nu: DiscreteMeasure, cost_fn, eps: float) -> float:
    """Entrywise residual of the Delta-tilted Gibbs factorization."""
    worst = 0.0
    rows = sol.rows
    for a in range(eta.n):
        m = eta.points[a]
        crow = np.array([float(cost_fn(m, y)) for y in nu.points])
        dens = np.exp((sol.gC[a] + sol.g + (nu.points - m) @ sol.delta[a] - crow) / eps)
        worst = max(worst, float(np.abs(rows[a] - nu.weights * dens).max()))
    return worst


def remot_solve(mu: DiscreteMeasure, nu: DiscreteMeasure, cost_fn, eps: float,
                theta: ThetaOracle, outer_iters: int = 40, fd_step: float = 1e-4,
                tol: float = 1e-10, interior_margin: float = 1e-6):
    """Relaxed entropic martingale transport by outer descent on the means.

    Monge parametrization eta_i = mu_i with free mean positions m_i; the
    outer objective F(m) = sum_i mu_i theta(x_i - m_i) + EMT(eta(m), nu) is
    minimized coordinatewise with central finite differences and
    backtracking. Martingale feasibility forces mean(eta) = mean(nu), so the
    parametrization recenters every candidate onto that subspace (otherwise
    each coordinate probe would leave the effective domain); means are also
    clamped to a hull shrunk by `interior_margin`.
    """
    if nu.n < 2:
        raise DomainError("nu must not be a Dirac measure")
    n, d = mu.n, mu.dim
    bary = nu.mean()

    def clamp(m):
        m = np.asarray(m, dtype=float)
        m = m + (bary - mu.weights @ m)[None, :]  # recenter: mean(eta) = mean(nu)
        lam = 1.0 - interior_margin
        out = m.copy()
        for _ in range(60):
            if all(in_relative_interior(row, nu, margin=interior_margin * 1e-3)
                   for row in out):
                return out
            out = bary[None, :] + lam * (out - bary[None, :])
            lam *= 1.0 - 1e-2
            out = out + (bary - mu.weights @ out)[None, :]
        return np.tile(bary, (n, 1))

    state = {"warm": None}

    def objective(means):
        eta = DiscreteMeasure(means, mu.weights)
        try:
            inner = emt_sinkhorn(eta, nu, cost_fn, eps, tol=max(tol, 1e-9),
                                 max_iters=2000, warm=state["warm"])
        except DomainError:
            return math.inf, None
        if inner.marginal_error > 1e-6:
            # marginal matching failed: eta(m) is not in convex order with nu
            return math.inf, None
        state["warm"] = (inner.g, None)
        outer = float(sum(mu.weights[i] * theta.evaluate(mu.points[i] - means[i])
                          for i in range(n)))
        return outer + inner.value, inner

    def fd_gradient(means, value):
        grad = np.zeros((n, d))
        for i in range(n):
            for kdim in range(d):
                mp = means.copy()
                mp[i, kdim] += fd_step
                mm = means.copy()
                mm[i, kdim] -= fd_step
                vp, _ = objective(clamp(mp))
                vm, _ = objective(clamp(mm))
                if math.isfinite(vp) and math.isfinite(vm):
                    grad[i, kdim] = (vp - vm) / (2 * fd_step)
                elif math.isfinite(vp):
                    grad[i, kdim] = (vp - value) / fd_step
                elif math.isfinite(vm):
                    grad[i, kdim] = (value - vm) / fd_step
        return grad

    means = clamp(np.tile(bary, (n, 1)))
    value, inner = objective(means)
    hist = [value]
    step = 1.0
    for _ in range(outer_iters):
        grad = fd_gradient(means, value)
        gnorm = float(np.linalg.norm(grad))
        if gnorm < 1e-9:
            break
        improved = False
        for _ in range(40):
            cand = clamp(means - step * grad)
            v2, inner2 = objective(cand)
            if v2 < value - 1e-12:
                means, value, inner = cand, v2, inner2
                improved = True
                step *= 2.0  # adaptive growth after a successful step
                break
            step *= 0.5
        hist.append(value)
        if not improved:
            break
    stationarity = float(np.abs(fd_gradient(means, value)).max())
    eta = DiscreteMeasure(means, mu.weights)
    pi_rows = np.empty((n, nu.n))
    kap_rows = inner.rows
    for i in range(n):
        idx = int(np.argmin(np.linalg.norm(eta.points - means[i], axis=1)))
        pi_rows[i] = kap_rows[idx]
    pi = Coupling(mu, nu, _exact_rows(pi_rows, mu.weights, nu.weights))
    gibbs = gibbs_reconstruction_residual(inner, eta, nu, cost_fn, eps)
    report = SolveReport(value, len(hist) - 1, stationarity, stationarity <= 1e-3,
                         hist, {"gibbs_residual": gibbs})
    return pi, eta, inner, report


def _exact_rows(rows, mu_w, nu_w):
    mat = rows * mu_w[:, None]
    mat = mat + np.outer(mu_w, nu_w - mat.sum(axis=0))
    return np.maximum(mat, 0.0)
