"""Weak-cost oracles: evaluators for C(x, rho) with subgradients in rho.

Conditional laws are passed to oracles as plain probability vectors over
supp(nu). Oracles are pure and safe to call concurrently. Where a C-transform
has a closed form (linear costs, entropic costs, barycentric costs in d=1)
the oracle carries it as `transform`; the generic Frank-Wolfe route stays
available and the two are cross-checked in the tests.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .measures import DiscreteMeasure, relative_entropy
from .thetas import ThetaOracle

_LOG_FLOOR = 1e-300


def batch_relative_entropy(rows: np.ndarray, nw: np.ndarray) -> np.ndarray:
    """Row-wise H(rho | nu) for a matrix of probability vectors."""
    safe = np.maximum(rows, _LOG_FLOOR)
    vals = np.sum(np.where(rows > 0, rows * np.log(safe / nw[None, :]), 0.0), axis=1)
    bad = ((rows > 0) & (nw[None, :] == 0)).any(axis=1)
    vals[bad] = np.inf
    return vals


@dataclass(frozen=True)
class WeakCostOracle:
    evaluate: callable          # (x, rho) -> extended real
    subgradient_rho: callable   # (x, rho) -> vector over supp(nu)
    convex_in_rho: bool
    fiber_convex: bool
    name: str
    transform: callable | None = None   # (g, x) -> (value, argmin rho)
    line_search: str = "golden"
    smooth: bool = False        # differentiable on the (relative) interior
    batch: callable | None = None       # (xs, rows) -> (values, gradients)

    def self_test(self, nu: DiscreteMeasure, mus_points, rng: np.random.Generator,
                  probes: int = 24, tol: float = 1e-7) -> float:
        """Validate the subgradient inequality on random probe pairs.

        Returns the worst violation of C(x,r') >= C(x,r) + <sg, r'-r>.
        """
        if not self.convex_in_rho:
            return 0.0
        worst = 0.0
        pts = np.atleast_2d(np.asarray(mus_points, dtype=float))
        for _ in range(probes):
            x = pts[rng.integers(0, pts.shape[0])]
            r = rng.dirichlet(np.ones(nu.n))
            r2 = rng.dirichlet(np.ones(nu.n))
            c1 = self.evaluate(x, r)
            c2 = self.evaluate(x, r2)
            if not (math.isfinite(c1) and math.isfinite(c2)):
                continue
            sg = self.subgradient_rho(x, r)
            worst = max(worst, c1 + float(sg @ (r2 - r)) - c2)
        if worst > tol:
            raise ValueError(f"{self.name}: subgradient self-test violation {worst}")
        return worst


def linear_oracle(nu: DiscreteMeasure, cost_fn, name: str = "linear") -> WeakCostOracle:
    """Classical transport cost C(x, rho) = <rho, c(x, .)>."""
    ys = nu.points

    def row(x):
        return np.array([float(cost_fn(x, y)) for y in ys])

    def transform(g, x):
        vals = row(x) - g
        j = int(np.argmin(vals))
        rho = np.zeros(nu.n)
        rho[j] = 1.0
        return float(vals[j]), rho

    return WeakCostOracle(
        evaluate=lambda x, r: float(np.asarray(r) @ row(x)),
        subgradient_rho=lambda x, r: row(x),
        convex_in_rho=True,
        fiber_convex=True,
        name=name,
        transform=transform,
        line_search="quadratic",
        smooth=True,
    )


def entropy_oracle(nu: DiscreteMeasure, eps: float = 1.0, cost_fn=None,
                   name: str | None = None) -> WeakCostOracle:
    """Entropic cost C(x, rho) = <rho, c(x,.)> + eps H(rho | nu)."""
    ys = nu.points
    nw = nu.weights
    log_nw = np.log(nw)

    def row(x):
        if cost_fn is None:
            return np.zeros(nu.n)
        return np.array([float(cost_fn(x, y)) for y in ys])

    def evaluate(x, r):
        r = np.asarray(r, dtype=float)
        h = relative_entropy(r, nw)
        if not math.isfinite(h):
            return math.inf
        return float(r @ row(x)) + eps * h

    def subgrad(x, r):
        r = np.asarray(r, dtype=float)
        return row(x) + eps * (np.log(np.maximum(r, _LOG_FLOOR) / nw) + 1.0)

    def transform(g, x):
        # Gibbs variational identity: inf_rho rho(c-g) + eps H(rho|nu)
        #   = -eps log nu(exp((g-c)/eps)), attained at the tilted measure.
        s = (g - row(x)) / eps + log_nw
        lse = float(logsumexp(s))
        rho = np.exp(s - lse)
        return -eps * lse, rho

    def batch(xs, rows):
        crows = np.stack([row(x) for x in xs])
        hs = batch_relative_entropy(rows, nw)
        vals = np.einsum("ij,ij->i", rows, crows) + eps * hs
        grads = crows + eps * (np.log(np.maximum(rows, _LOG_FLOOR) / nw[None, :]) + 1.0)
        return vals, grads

    return WeakCostOracle(
        evaluate=evaluate,
        subgradient_rho=subgrad,
        convex_in_rho=True,
        fiber_convex=True,
        name=name or f"entropy[{eps}]",
        transform=transform,
        line_search="brent",
        smooth=True,
        batch=batch,
    )


def barycentric_oracle(nu: DiscreteMeasure, theta: ThetaOracle,
                       name: str | None = None) -> WeakCostOracle:
    """Barycentric cost C(x, rho) = theta(x - mean rho)."""
    ys = nu.points

    def evaluate(x, r):
        m = np.asarray(r) @ ys
        return float(theta.evaluate(np.asarray(x, dtype=float) - m))

    def subgrad(x, r):
        m = np.asarray(r) @ ys
        gr = theta.gradient(np.asarray(x, dtype=float) - m)
        return -(ys @ gr)

    def batch(xs, rows):
        means = rows @ ys
        vals = np.empty(rows.shape[0])
        grads = np.empty_like(rows)
        for i in range(rows.shape[0]):
            diff = np.asarray(xs[i], dtype=float) - means[i]
            vals[i] = theta.evaluate(diff)
            grads[i] = -(ys @ theta.gradient(diff))
        return vals, grads

    if nu.dim == 1:
        transform = _envelope_transform(nu, theta)
    elif theta.differentiable:
        transform = _smooth_simplex_transform(nu, evaluate, subgrad)
    else:
        transform = None
    return WeakCostOracle(
        evaluate=evaluate,
        subgradient_rho=subgrad,
        convex_in_rho=True,
        fiber_convex=True,
        name=name or f"barycentric[{theta.name}]",
        transform=transform,
        line_search="quadratic" if theta.quadratic else "golden",
        smooth=theta.differentiable,
        batch=batch,
    )


def _envelope_transform(nu: DiscreteMeasure, theta: ThetaOracle):
    """Exact d=1 C-transform for barycentric costs.

    g^C(x) = inf_m theta(x-m) - ghat(m) with ghat the concave envelope of g
    on supp(nu); the inf is a 1-d convex minimization over each envelope
    segment and the argmin is the two-point mixture of the segment ends.
    """
    y = nu.points[:, 0]
    order = np.argsort(y)

    def transform(g, x):
        x = float(np.asarray(x).ravel()[0])
        ys = y[order]
        gs = np.asarray(g, dtype=float)[order]
        hull = _upper_hull(ys, gs)
        best = (math.inf, None)
        for (a, b) in zip(hull[:-1], hull[1:]):
            ya, ga = ys[a], gs[a]
            yb, gb = ys[b], gs[b]

            def phi(m):
                lam = 0.0 if yb == ya else (m - ya) / (yb - ya)
                return theta.evaluate(np.array([x - m])) - ((1 - lam) * ga + lam * gb)

            m_star, val = _segment_min(phi, ya, yb, quadratic=theta.quadratic)
            if val < best[0] - 1e-15:
                lam = 0.0 if yb == ya else (m_star - ya) / (yb - ya)
                rho = np.zeros(nu.n)
                rho[order[a]] += 1.0 - lam
                rho[order[b]] += lam
                best = (val, rho)
        if len(hull) == 1:
            rho = np.zeros(nu.n)
            rho[order[hull[0]]] = 1.0
            best = (theta.evaluate(np.array([x - ys[hull[0]]])) - gs[hull[0]], rho)
        return best

    return transform


def _smooth_simplex_transform(nu: DiscreteMeasure, evaluate, subgrad):
    """Transform for smooth costs in d >= 2: KKT solve over the simplex."""
    from scipy.optimize import minimize

    m = nu.n
    ones = np.ones(m)

    def transform(g, x):
        g = np.asarray(g, dtype=float)

        def fun(r):
            return evaluate(x, r) - float(r @ g)

        def jac(r):
            return subgrad(x, r) - g

        res = minimize(fun, np.full(m, 1.0 / m), jac=jac, method="SLSQP",
                       bounds=[(0.0, 1.0)] * m,
                       constraints={"type": "eq", "fun": lambda r: float(r @ ones) - 1.0,
                                    "jac": lambda r: ones},
                       options={"maxiter": 200, "ftol": 1e-14})
        rho = np.maximum(res.x, 0.0)
        rho /= rho.sum()
        return fun(rho), rho

    return transform


def _upper_hull(ys: np.ndarray, gs: np.ndarray) -> list[int]:
    """Indices (into the sorted arrays) of the concave-envelope vertices."""
    hull: list[int] = []
    for i in range(ys.size):
        while len(hull) >= 2:
            a, b = hull[-2], hull[-1]
            cross = (ys[b] - ys[a]) * (gs[i] - gs[a]) - (gs[b] - gs[a]) * (ys[i] - ys[a])
            if cross >= 0:  # b below the chord a-i: not an envelope vertex
                hull.pop()
            else:
                break
        hull.append(i)
    return hull


def _segment_min(phi, lo: float, hi: float, iters: int = 80, quadratic: bool = False):
    if hi - lo < 1e-14:
        return lo, phi(lo)
    if quadratic:
        f0, f1 = phi(lo), phi(hi)
        fm = phi(0.5 * (lo + hi))
        a2 = 2.0 * (f0 + f1 - 2.0 * fm) / (hi - lo) ** 2
        if a2 > 1e-15:
            b1 = (f1 - f0) / (hi - lo) - a2 * (lo + hi)
            t = min(max(-b1 / (2.0 * a2), lo), hi)
            return t, phi(t)
        return (lo, f0) if f0 <= f1 else (hi, f1)
    invgold = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    x1 = b - invgold * (b - a)
    x2 = a + invgold * (b - a)
    f1, f2 = phi(x1), phi(x2)
    for _ in range(iters):
        if b - a < 1e-13 * (1.0 + abs(a) + abs(b)):
            break
        if f1 <= f2:
            b, x2, f2 = x2, x1, f1
            x1 = b - invgold * (b - a)
            f1 = phi(x1)
        else:
            a, x1, f1 = x1, x2, f2
            x2 = a + invgold * (b - a)
            f2 = phi(x2)
    cands = [(phi(lo), lo), (f1, x1), (f2, x2), (phi(hi), hi)]
    fb, tb = min(cands, key=lambda p: (p[0], p[1]))
    return tb, fb


def sum_oracle(a: WeakCostOracle, b: WeakCostOracle, name: str | None = None) -> WeakCostOracle:
    def evaluate(x, r):
        va = a.evaluate(x, r)
        if not math.isfinite(va):
            return va
        vb = b.evaluate(x, r)
        return va + vb

    return WeakCostOracle(
        evaluate=evaluate,
        subgradient_rho=lambda x, r: a.subgradient_rho(x, r) + b.subgradient_rho(x, r),
        convex_in_rho=a.convex_in_rho and b.convex_in_rho,
        fiber_convex=a.fiber_convex and b.fiber_convex,
        name=name or f"{a.name}+{b.name}",
        line_search="golden" if "golden" in (a.line_search, b.line_search) else "quadratic",
        smooth=a.smooth and b.smooth,
    )


def min_oracle(a: WeakCostOracle, b: WeakCostOracle, name: str | None = None) -> WeakCostOracle:
    """Pointwise minimum of two costs: non-convex; served by lifted solves."""
    def evaluate(x, r):
        return min(a.evaluate(x, r), b.evaluate(x, r))

    def subgrad(x, r):
        # Subgradient of the active branch: a local object only.
        if a.evaluate(x, r) <= b.evaluate(x, r):
            return a.subgradient_rho(x, r)
        return b.subgradient_rho(x, r)

    return WeakCostOracle(
        evaluate=evaluate,
        subgradient_rho=subgrad,
        convex_in_rho=False,
        fiber_convex=False,
        name=name or f"min({a.name},{b.name})",
    )
