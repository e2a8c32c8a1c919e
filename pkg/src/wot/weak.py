"""Weak optimal transport: primal solve, C-transform, dual ascent,
certificates, C-monotonicity probe, and the lifted relaxation by column
generation for non-convex costs."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .classical import transport_lp
from .lp import lp_solve
from .measures import (Coupling, DiscreteMeasure, DomainError, LiftedAtom,
                       LiftedPlan, restrict_normalize)
from .optim import SolveReport, frank_wolfe, supergradient_ascent
from .oracles import WeakCostOracle


class InfinitePrimalError(DomainError):
    """The cost is +inf at every probed plan: the primal value is infinite."""


@dataclass
class DualPair:
    f: np.ndarray                    # potential on supp(mu)
    g: np.ndarray                    # potential on supp(nu)
    transform_values: np.ndarray     # cached g^C on supp(mu)
    argmins: list[np.ndarray | None] # minimizing conditional laws

    def transform_residual(self) -> float:
        """max_i (f_i - g^C(x_i)); <= 1e-9 for pairs built from a transform."""
        return float(np.max(self.f - self.transform_values, initial=-math.inf))


@dataclass
class Certificate:
    primal_value: float
    dual_value: float
    gap: float
    slackness_residuals: np.ndarray
    marginal_residuals: tuple[float, float]
    admissibility_residual: float
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "primal_value": self.primal_value,
            "dual_value": self.dual_value,
            "gap": self.gap,
            "slackness_residuals": [float(s) for s in self.slackness_residuals],
            "marginal_residuals": [float(r) for r in self.marginal_residuals],
            "admissibility_residual": self.admissibility_residual,
        }


def c_transform(g, x, oracle: WeakCostOracle, nu: DiscreteMeasure,
                tol: float = 1e-8, max_iters: int = 4000, use_closed_form: bool = True):
    """g^C(x) = inf over the simplex of C(x, rho) - rho(g), with its argmin.

    Uses the oracle's closed form when available, otherwise away-step
    Frank-Wolfe over the probability simplex (the linear oracle there is a
    coordinate argmin).
    """
    if not oracle.convex_in_rho:
        raise DomainError("c_transform requires a cost convex in rho; "
                          "use lifted_solve pricing for non-convex costs")
    g = np.asarray(g, dtype=float)
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if use_closed_form and oracle.transform is not None:
        val, rho = oracle.transform(g, x)
        return float(val), rho
    return _transform_fw(g, x, oracle, nu, tol, max_iters)


def _transform_fw(g, x, oracle, nu, tol, max_iters):
    m = nu.n

    def objective(rho):
        val = oracle.evaluate(x, rho)
        if not math.isfinite(val):
            return math.inf, np.zeros(m)
        return val - float(rho @ g), oracle.subgradient_rho(x, rho) - g

    def lmo(grad):
        j = int(np.argmin(grad))
        v = np.zeros(m)
        v[j] = 1.0
        return v

    start = nu.weights.copy()
    if not math.isfinite(objective(start)[0]):
        start = None
        for j in range(m):
            v = np.zeros(m)
            v[j] = 1.0
            if math.isfinite(objective(v)[0]):
                start = v
                break
        if start is None:
            return math.inf, None
    rho, rep = frank_wolfe(objective, lmo, start, tol=tol, max_iters=max_iters,
                           away_steps=True, line_search=oracle.line_search)
    return rep.value, rho


def primal_solve_convex(mu: DiscreteMeasure, nu: DiscreteMeasure,
                        oracle: WeakCostOracle, tol: float = 1e-7,
                        max_iters: int = 1500, away_steps: bool = True,
                        start: Coupling | None = None, trace: bool = False,
                        polish: bool = False):
    """Frank-Wolfe over the transport polytope for convex weak costs.

    The linear minimization oracle is itself a transport LP whose cost
    matrix collects the rho-subgradients row by row. With `polish`, a KKT
    refinement (SLSQP on the FW iterate) tightens the stationary point for
    smooth oracles so downstream consistency checks hold at LP tolerance.
    """
    if not oracle.convex_in_rho:
        raise DomainError("primal_solve_convex requires a convex oracle")
    n, m = mu.n, nu.n
    xw = mu.weights

    if oracle.batch is not None:
        def objective(flat):
            rows = flat.reshape(n, m) / xw[:, None]
            vals, grads = oracle.batch(mu.points, rows)
            if not np.isfinite(vals).all():
                return math.inf, np.zeros(n * m)
            return float(xw @ vals), grads.ravel()
    else:
        def objective(flat):
            rows = flat.reshape(n, m) / xw[:, None]
            total = 0.0
            grad = np.empty((n, m))
            for i in range(n):
                val = oracle.evaluate(mu.points[i], rows[i])
                if not math.isfinite(val):
                    return math.inf, np.zeros(n * m)
                total += xw[i] * val
                grad[i] = oracle.subgradient_rho(mu.points[i], rows[i])
            return total, grad.ravel()

    def lmo(grad):
        mat, _, _, _ = transport_lp(mu.weights, nu.weights, grad.reshape(n, m))
        return mat.ravel()

    x0 = (start.matrix if start is not None else np.outer(mu.weights, nu.weights)).ravel()
    if not math.isfinite(objective(x0)[0]):
        x0 = _finite_start(objective, lmo, n, m)
    do_polish = polish and oracle.smooth
    fw_tol = max(tol, 1e-4) if do_polish else tol
    flat, rep = frank_wolfe(objective, lmo, x0, tol=fw_tol, max_iters=max_iters,
                            away_steps=away_steps, line_search=oracle.line_search,
                            trace=trace)
    if do_polish:
        flat, rep = _kkt_polish(objective, lmo, mu, nu, flat, rep)
        scale = 1.0 + abs(rep.value)
        if rep.gap > max(tol, 1e-6) * scale:
            # polish under-delivered: resume Frank-Wolfe at the target gap
            flat, rep = frank_wolfe(objective, lmo, flat, tol=max(tol, 1e-7),
                                    max_iters=max_iters, away_steps=away_steps,
                                    line_search=oracle.line_search, trace=trace)
        rep.converged = rep.converged or rep.gap <= tol * (1.0 + abs(rep.value))
    mat = np.maximum(flat.reshape(n, m), 0.0)
    return Coupling(mu, nu, _repair_marginals(mat, mu.weights, nu.weights)), rep


def _kkt_polish(objective, lmo, mu, nu, flat, rep):
    """Local SLSQP refinement of a near-optimal transport plan.

    The Frank-Wolfe gap is recomputed at the refined point so the report
    still carries a valid optimality certificate.
    """
    from scipy.optimize import minimize

    n, m = mu.n, nu.n
    a_eq = np.zeros((n + m - 1, n * m))
    for i in range(n):
        a_eq[i, i * m : (i + 1) * m] = 1.0
    for j in range(m - 1):  # last column constraint is redundant
        a_eq[n + j, j::m] = 1.0
    b_eq = np.concatenate([mu.weights, nu.weights[:-1]])

    def fun(z):
        v, g = objective(np.maximum(z, 0.0))
        return v if math.isfinite(v) else 1e100

    def jac(z):
        return objective(np.maximum(z, 0.0))[1]

    res = minimize(fun, flat, jac=jac, method="SLSQP",
                   bounds=[(0.0, None)] * (n * m),
                   constraints={"type": "eq", "fun": lambda z: a_eq @ z - b_eq,
                                "jac": lambda z: a_eq},
                   options={"maxiter": 200, "ftol": 1e-14})
    if res.success and math.isfinite(res.fun) and res.fun <= rep.value + 1e-12:
        z = np.maximum(res.x, 0.0)
        val, grad = objective(z)
        s = lmo(grad)
        gap = float(grad @ (z - s))
        out = SolveReport(float(val), rep.iterations, gap, rep.converged,
                          rep.trace, dict(rep.extra, polished=True))
        return z, out
    return flat, rep


def _finite_start(objective, lmo, n, m):
    probes = [np.zeros(n * m)]
    for k in range(min(n * m, 8)):
        c = np.zeros(n * m)
        c[k] = -1.0
        probes.append(c)
    for c in probes:
        v = lmo(c)
        if math.isfinite(objective(v)[0]):
            return v
    raise InfinitePrimalError("cost is +inf at every probed extreme plan")


def _repair_marginals(mat, mu_w, nu_w, rounds: int = 60):
    """Project a nonnegative matrix onto the transport polytope boundary-safely.

    One pass of two rank-one corrections fixes both marginals exactly
    (adding outer(mu - rowsums, nu) fixes rows without moving column sums,
    since the defect sums to zero). Clamping negatives can reintroduce
    drift for badly unbalanced inputs, so the pass is iterated.
    """
    out = mat.copy()
    for _ in range(rounds):
        out += np.outer(mu_w - out.sum(axis=1), nu_w)
        out += np.outer(mu_w, nu_w - out.sum(axis=0))
        if out.min() >= 0.0:
            return out
        out = np.maximum(out, 0.0)
        if (np.abs(out.sum(axis=1) - mu_w).max() <= 1e-12
                and np.abs(out.sum(axis=0) - nu_w).max() <= 1e-12):
            return out
    # heavy imbalance: mix with the product coupling until feasible
    lam = 0.5
    prod = np.outer(mu_w, nu_w)
    for _ in range(40):
        cand = (1 - lam) * np.maximum(out, 0.0) + lam * prod
        cand += np.outer(mu_w - cand.sum(axis=1), nu_w)
        cand += np.outer(mu_w, nu_w - cand.sum(axis=0))
        if cand.min() >= 0.0:
            return cand
        lam = min(1.0, lam * 1.5)
    return prod


def dual_ascent(mu: DiscreteMeasure, nu: DiscreteMeasure, oracle: WeakCostOracle,
                init_g=None, iters: int = 300, step_a: float = 1.0,
                step_b: float = 10.0, trace: bool = False):
    """Maximize g -> mu(g^C) + nu(g) by anchored supergradient ascent.

    The supergradient is nu - sum_i mu_i rho*_i with rho*_i the transform
    argmins; after every step g is shifted so that nu(g) = 0, mirroring the
    normalization used in the attainment argument.
    """
    if not oracle.convex_in_rho:
        raise DomainError("dual_ascent requires a convex oracle")
    n = mu.n

    def j_oracle(g):
        total = float(nu.weights @ g)
        agg = np.zeros(nu.n)
        for i in range(n):
            val, rho = c_transform(g, mu.points[i], oracle, nu)
            if not math.isfinite(val):
                return -math.inf, np.zeros(nu.n)
            total += mu.weights[i] * val
            agg += mu.weights[i] * rho
        return total, nu.weights - agg

    anchor = lambda g: g - float(nu.weights @ g)
    g0 = np.zeros(nu.n) if init_g is None else np.asarray(init_g, dtype=float)
    g_best, rep = supergradient_ascent(j_oracle, iters=iters, step_a=step_a,
                                       step_b=step_b, anchor=anchor, start=g0,
                                       trace=trace)
    pair = dual_pair_from_g(g_best, mu, oracle, nu)
    rep.value = float(mu.weights @ pair.f + nu.weights @ pair.g)
    return pair, rep


def dual_pair_from_g(g, mu: DiscreteMeasure, oracle: WeakCostOracle,
                     nu: DiscreteMeasure) -> DualPair:
    g = np.asarray(g, dtype=float)
    fs = np.empty(mu.n)
    argmins: list[np.ndarray | None] = []
    for i in range(mu.n):
        val, rho = c_transform(g, mu.points[i], oracle, nu)
        fs[i] = val
        argmins.append(rho)
    return DualPair(f=fs.copy(), g=g.copy(), transform_values=fs, argmins=argmins)


def warm_dual_g(mu: DiscreteMeasure, nu: DiscreteMeasure, oracle: WeakCostOracle,
                pi: Coupling) -> np.ndarray:
    """Dual potential from the LP linearization at a primal solution.

    Linearizing the convex cost at the optimal rows gives a classical
    transport LP whose column potential is admissible for the weak dual and
    closes the gap at an exact primal optimum.
    """
    rows = pi.row_array()
    grad = np.stack([oracle.subgradient_rho(mu.points[i], rows[i]) for i in range(mu.n)])
    _, _, g, _ = transport_lp(mu.weights, nu.weights, grad)
    return g


def certify(pi: Coupling, pair: DualPair, oracle: WeakCostOracle) -> Certificate:
    """Machine-checkable optimality certificate for a primal/dual pair.

    Admissibility is probed on the rows of pi, the simplex vertices, and
    fresh transform argmins of pair.g (violation anywhere in this family
    witnesses inadmissibility for convex costs, up to transform tolerance).
    """
    mu, nu = pi.mu, pi.nu
    rows = pi.row_array()
    n, m = mu.n, nu.n
    f, g = pair.f, pair.g

    primal = 0.0
    slack = np.empty(n)
    for i in range(n):
        ci = oracle.evaluate(mu.points[i], rows[i])
        primal += mu.weights[i] * ci
        slack[i] = abs(ci - f[i] - float(rows[i] @ g)) if math.isfinite(ci) else math.inf
    dual = float(mu.weights @ f + nu.weights @ g)

    probes: list[np.ndarray] = [rows[i] for i in range(n)]
    for j in range(m):
        v = np.zeros(m)
        v[j] = 1.0
        probes.append(v)
    for rho in pair.argmins:
        if rho is not None:
            probes.append(np.asarray(rho))
    if oracle.convex_in_rho:
        for i in range(n):
            _, rho = c_transform(g, mu.points[i], oracle, nu)
            if rho is not None:
                probes.append(rho)
    adm = 0.0
    for i in range(n):
        fi = f[i]
        for rho in probes:
            c = oracle.evaluate(mu.points[i], rho)
            if math.isfinite(c):
                adm = max(adm, fi + float(rho @ g) - c)
    row_res = float(np.abs(pi.matrix.sum(axis=1) - mu.weights).max())
    col_res = float(np.abs(pi.matrix.sum(axis=0) - nu.weights).max())
    return Certificate(
        primal_value=float(primal),
        dual_value=dual,
        gap=float(primal - dual),
        slackness_residuals=slack,
        marginal_residuals=(row_res, col_res),
        admissibility_residual=float(max(adm, 0.0)),
    )


def c_monotonicity_probe(pairs, oracle: WeakCostOracle, trials: int = 64,
                         seed: int | np.random.Generator = 0) -> float:
    """Worst improvement over random mass redistributions (Cor.-style probe).

    pairs: sequence of (x, rho). Redistributions keep sum_i rho_i fixed via
    doubly-stochastic mixing across the index i; all pair transpositions are
    probed as well. A return value below -1e-7 refutes C-monotonicity.
    """
    rng = np.random.default_rng(seed) if not isinstance(seed, np.random.Generator) else seed
    xs = [np.atleast_1d(np.asarray(x, dtype=float)) for x, _ in pairs]
    rhos = np.stack([np.asarray(r, dtype=float) for _, r in pairs])
    n = len(xs)
    base = sum(oracle.evaluate(xs[i], rhos[i]) for i in range(n))
    if n == 1:
        return 0.0

    mixers: list[np.ndarray] = []
    for i in range(n):
        for j in range(i + 1, n):
            p = np.eye(n)
            p[[i, j]] = p[[j, i]]
            mixers.append(p)
    while len(mixers) < trials:
        perms = [np.eye(n)[rng.permutation(n)] for _ in range(3)]
        lam = rng.dirichlet(np.ones(3))
        mixers.append(sum(l * p for l, p in zip(lam, perms)))

    worst = 0.0
    for mix in mixers[:max(trials, n * (n - 1) // 2)]:
        mixed = mix @ rhos
        total = sum(oracle.evaluate(xs[i], mixed[i]) for i in range(n))
        worst = min(worst, total - base)
    return float(worst)


def continuity_probe(oracle: WeakCostOracle, x, rho, masks, tol: float = 1e-7) -> bool:
    """Check C(x, rho|_mask / rho(mask)) <= C(x, rho) + tol on the mask tail."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    base = oracle.evaluate(x, np.asarray(getattr(rho, "probabilities", rho), dtype=float))
    masks = list(masks)
    tail = masks[len(masks) // 2 :]
    from .measures import ConditionalLaw

    rho_cl = rho if isinstance(rho, ConditionalLaw) else ConditionalLaw(rho)
    worst = -math.inf
    for mask in tail:
        r = restrict_normalize(rho_cl, mask)
        worst = max(worst, oracle.evaluate(x, r.probabilities))
    return bool(worst <= base + tol)


# ---------------------------------------------------------------------------
# Lifted relaxation by column generation
# ---------------------------------------------------------------------------

def lifted_solve(mu: DiscreteMeasure, nu: DiscreteMeasure, oracle: WeakCostOracle,
                 initial_dictionary=None, tol: float = 1e-7, max_rounds: int = 60,
                 k_max: int = 4, starts: int = 8, seed: int = 0):
    """Restricted-master column generation over lifted plans.

    Columns are pairs (i, rho); the master LP matches per-x masses to mu and
    the intensity to nu. Pricing minimizes C(x_i, rho) - rho(g) over the
    simplex: exactly (via the transform) for convex oracles, by multi-start
    Frank-Wolfe plus exhaustive search over supports of size <= k_max for
    non-convex ones. Returns (LiftedPlan, DualPair, Certificate).
    """
    n, m = mu.n, nu.n
    rng = np.random.default_rng(seed)
    columns: list[list[np.ndarray]] = [[] for _ in range(n)]

    def add_column(i, rho) -> bool:
        rho = np.asarray(rho, dtype=float)
        key = np.round(rho, 10)
        for existing in columns[i]:
            if np.array_equal(np.round(existing, 10), key):
                return False
        if not math.isfinite(oracle.evaluate(mu.points[i], rho)):
            return False
        columns[i].append(rho)
        return True

    for i in range(n):
        for j in range(m):
            v = np.zeros(m)
            v[j] = 1.0
            add_column(i, v)
        add_column(i, nu.weights.copy())
        if initial_dictionary:
            for rho in initial_dictionary[i] if isinstance(initial_dictionary, (list, tuple)) else []:
                add_column(i, rho)
        if not columns[i]:
            raise InfinitePrimalError(f"no finite-cost dictionary column for x index {i}")

    f = np.zeros(n)
    g = np.zeros(m)
    value = math.inf
    q = None
    pricing_residual = 0.0
    for _ in range(max_rounds):
        q, f, g, value, status = _master_lp(mu, nu, oracle, columns)
        if status != "optimal":
            raise InfinitePrimalError("restricted master infeasible")
        improved = False
        pricing_residual = 0.0
        for i in range(n):
            val, rho = _price(mu.points[i], g, oracle, nu, k_max, starts, rng)
            red = val - f[i]
            pricing_residual = max(pricing_residual, max(-red, 0.0))
            if red < -tol and rho is not None:
                improved = add_column(i, rho) or improved
        if not improved:
            break

    atoms = []
    for i in range(n):
        for rho, weight in zip(columns[i], q[i]):
            if weight > 1e-12:
                from .measures import ConditionalLaw

                atoms.append(LiftedAtom(i, ConditionalLaw(rho / rho.sum()), float(weight)))
    plan = LiftedPlan(mu, nu, atoms)
    shift = float(nu.weights @ g)
    f = f + shift
    g = g - shift
    pair = DualPair(f=f, g=g, transform_values=f.copy(),
                    argmins=[None] * n)
    dual_value = float(mu.weights @ f + nu.weights @ g)
    slack = np.zeros(n)
    for a in plan.atoms:
        c = oracle.evaluate(mu.points[a.x_index], a.rho.probabilities)
        s = abs(c - f[a.x_index] - float(a.rho.probabilities @ g))
        slack[a.x_index] = max(slack[a.x_index], s)
    cert = Certificate(
        primal_value=float(value),
        dual_value=dual_value,
        gap=float(value - dual_value),
        slackness_residuals=slack,
        marginal_residuals=(0.0, 0.0),
        admissibility_residual=float(pricing_residual),
        extra={"columns": sum(len(c) for c in columns)},
    )
    return plan, pair, cert


def _master_lp(mu, nu, oracle, columns):
    n, m = mu.n, nu.n
    sizes = [len(c) for c in columns]
    total = sum(sizes)
    cost = np.empty(total)
    a_eq = np.zeros((n + m, total))
    k = 0
    for i in range(n):
        for rho in columns[i]:
            cost[k] = oracle.evaluate(mu.points[i], rho)
            a_eq[i, k] = 1.0
            a_eq[n:, k] = rho
            k += 1
    b_eq = np.concatenate([mu.weights, nu.weights])
    sol = lp_solve(cost, a_eq=a_eq, b_eq=b_eq)
    if sol.status != "optimal":
        return None, None, None, math.inf, sol.status
    q = []
    k = 0
    for i in range(n):
        q.append(sol.primal[k : k + sizes[i]].copy())
        k += sizes[i]
    return q, sol.dual_eq[:n].copy(), sol.dual_eq[n:].copy(), sol.value, "optimal"


def _price(x, g, oracle, nu, k_max, starts, rng):
    """Global-ish minimization of C(x, rho) - rho(g) over the simplex."""
    if oracle.convex_in_rho:
        return c_transform(g, x, oracle, nu)
    m = nu.n

    def value(rho):
        v = oracle.evaluate(x, rho)
        return v - float(rho @ g) if math.isfinite(v) else math.inf

    best = (math.inf, None)

    def consider(rho):
        nonlocal best
        v = value(rho)
        if v < best[0]:
            best = (v, rho)

    start_points = []
    for j in range(m):
        v = np.zeros(m)
        v[j] = 1.0
        start_points.append(v)
    start_points.append(np.full(m, 1.0 / m))
    start_points.append(nu.weights.copy())
    for _ in range(starts):
        start_points.append(rng.dirichlet(np.ones(m)))

    def objective(rho):
        v = oracle.evaluate(x, rho)
        if not math.isfinite(v):
            return math.inf, np.zeros(m)
        return v - float(rho @ g), oracle.subgradient_rho(x, rho) - g

    def lmo(grad):
        j = int(np.argmin(grad))
        v = np.zeros(m)
        v[j] = 1.0
        return v

    for s in start_points:
        consider(s)
        if math.isfinite(value(s)):
            rho, _ = frank_wolfe(objective, lmo, s, tol=1e-9, max_iters=200,
                                 away_steps=True)
            consider(rho)

    # Exhaustive refinement over sparse supports.
    from itertools import combinations

    for size in range(1, min(k_max, m) + 1):
        for sub in combinations(range(m), size):
            sub = list(sub)
            if size == 1:
                v = np.zeros(m)
                v[sub[0]] = 1.0
                consider(v)
                continue

            def face_obj(w):
                rho = np.zeros(m)
                rho[sub] = w
                v = oracle.evaluate(x, rho)
                if not math.isfinite(v):
                    return math.inf, np.zeros(size)
                return v - float(rho @ g), (oracle.subgradient_rho(x, rho) - g)[sub]

            def face_lmo(grad):
                j = int(np.argmin(grad))
                v = np.zeros(size)
                v[j] = 1.0
                return v

            for w0 in ([np.full(size, 1.0 / size)]
                       + [rng.dirichlet(np.ones(size)) for _ in range(2)]):
                if not math.isfinite(face_obj(w0)[0]):
                    continue
                w, _ = frank_wolfe(face_obj, face_lmo, w0, tol=1e-9, max_iters=150,
                                   away_steps=True)
                rho = np.zeros(m)
                rho[sub] = np.maximum(w, 0.0)
                rho /= rho.sum()
                consider(rho)
    return best
