"""Discrete convex analysis on sampled functions.

A SampledFunction is a function known at finitely many sites, +inf allowed.
Conjugation is exact for polyhedral data: in d=1 the dual grid of pairwise
difference quotients contains every attained slope, so conjugating twice
reproduces the lower convex envelope on the sites. Off-grid evaluation uses
the biconjugate representation (max of supporting affine functions), which
keeps conjugation and infimal convolution mutually consistent.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .lp import lp_solve
from .measures import StructuralError, _as_points


class NotConvexError(ValueError):
    pass


@dataclass(frozen=True)
class SampledFunction:
    sites: np.ndarray
    values: np.ndarray

    def __init__(self, sites, values):
        pts = _as_points(sites)
        vals = np.asarray(values, dtype=float)
        if vals.shape != (pts.shape[0],):
            raise StructuralError("sites and values lengths differ")
        if np.isneginf(vals).any() or np.isnan(vals).any():
            raise StructuralError("values must be reals or +inf")
        if not np.isfinite(vals).any():
            raise StructuralError("at least one finite value required")
        for i in range(pts.shape[0]):
            for j in range(i + 1, pts.shape[0]):
                if np.array_equal(pts[i], pts[j]):
                    raise StructuralError("duplicate sites")
        pts = pts.copy()
        vals = vals.copy()
        pts.setflags(write=False)
        vals.setflags(write=False)
        object.__setattr__(self, "sites", pts)
        object.__setattr__(self, "values", vals)

    @property
    def dim(self) -> int:
        return self.sites.shape[1]

    @property
    def n(self) -> int:
        return self.sites.shape[0]

    def finite_mask(self) -> np.ndarray:
        return np.isfinite(self.values)


def conjugate(f: SampledFunction, queries) -> SampledFunction:
    """f*(y) = max over sites z of <z,y> - f(z), skipping +inf values."""
    q = _as_points(queries)
    if q.shape[1] != f.dim:
        raise StructuralError("query dimension mismatch")
    keep = f.finite_mask()
    z = f.sites[keep]
    v = f.values[keep]
    vals = np.max(q @ z.T - v[None, :], axis=1)
    return SampledFunction(q, vals)


def default_dual_grid(f: SampledFunction) -> np.ndarray:
    """Attained-slope candidates: pairwise difference quotients (d=1 only)."""
    if f.dim != 1:
        raise StructuralError("default dual grids exist only in d=1; supply one")
    keep = f.finite_mask()
    z = f.sites[keep, 0]
    v = f.values[keep]
    slopes = [0.0]
    for i in range(z.size):
        for j in range(i + 1, z.size):
            dz = z[i] - z[j]
            if dz != 0.0:
                slopes.append((v[i] - v[j]) / dz)
    return np.unique(np.asarray(slopes))[:, None]


def envelope_evaluator(f: SampledFunction, dual_grid=None):
    """Return a callable for f** (largest closed convex minorant) off-grid.

    The sampled function is +inf off its sites, so the envelope's domain is
    the convex hull of the finite-value sites: queries outside return +inf.
    """
    grid = default_dual_grid(f) if dual_grid is None else _as_points(dual_grid)
    fstar = conjugate(f, grid).values
    site_index = {tuple(np.round(s, 12)): i for i, s in enumerate(f.sites)}
    inside = _hull_test(f.sites[f.finite_mask()])

    def ev(x: np.ndarray) -> float:
        x = np.atleast_1d(x)
        key = tuple(np.round(x, 12))
        i = site_index.get(key)
        if i is not None and math.isfinite(f.values[i]):
            return float(f.values[i])
        if not inside(x):
            return math.inf
        return float(np.max(grid @ x - fstar))

    return ev


def _hull_test(points: np.ndarray, tol: float = 1e-9):
    """Membership test for the convex hull of finitely many points."""
    d = points.shape[1]
    if d == 1:
        lo = float(points.min())
        hi = float(points.max())
        return lambda x: lo - tol <= float(x[0]) <= hi + tol
    if points.shape[0] > d:
        try:
            from scipy.spatial import ConvexHull

            hull = ConvexHull(points)
            a = hull.equations[:, :-1]
            b = -hull.equations[:, -1]
            return lambda x: bool(np.all(a @ x <= b + tol))
        except Exception:  # degenerate (flat) configurations
            pass
    poly = Polytope(points)

    def check(x):
        return poly.membership_residual(x) <= tol

    return check


def biconjugate(f: SampledFunction, dual_grid=None) -> SampledFunction:
    """Values of f** at the original sites."""
    grid = default_dual_grid(f) if dual_grid is None else _as_points(dual_grid)
    fstar = conjugate(f, grid).values
    vals = np.max(f.sites @ grid.T - fstar[None, :], axis=1)
    return SampledFunction(f.sites, vals)


def inf_convolution(f: SampledFunction, g: SampledFunction, queries,
                    dual_grid=None) -> SampledFunction:
    """(f box g)(x) = min over finite sites y of g of f(x-y) + g(y).

    f is evaluated exactly at its own sites and through the biconjugate
    representation elsewhere.
    """
    if f.dim != g.dim:
        raise StructuralError("dimension mismatch")
    q = _as_points(queries)
    ev = envelope_evaluator(f, dual_grid)
    keep = g.finite_mask()
    ys = g.sites[keep]
    gv = g.values[keep]
    out = np.empty(q.shape[0])
    for k in range(q.shape[0]):
        best = math.inf
        for y, gy in zip(ys, gv):
            val = ev(q[k] - y) + gy
            if val < best:
                best = val
        out[k] = best
    return SampledFunction(q, out)


def moreau_prox(psi: SampledFunction, x, lam: float):
    """Moreau envelope value and proximal point over the sample sites."""
    if lam <= 0:
        raise ValueError("lambda must be positive")
    x = np.atleast_1d(np.asarray(x, dtype=float))
    keep = psi.finite_mask()
    ys = psi.sites[keep]
    vals = psi.values[keep]
    objective = np.sum((x[None, :] - ys) ** 2, axis=1) / (2.0 * lam) + vals
    i = int(np.argmin(objective))  # argmin of np picks the smallest index on ties
    return float(objective[i]), ys[i].copy()


@dataclass(frozen=True)
class Polytope:
    vertices: np.ndarray
    facets: tuple | None  # ((normal, offset), ...) meaning <normal,x> <= offset

    def __init__(self, vertices, facets=None):
        v = _as_points(vertices)
        uniq = []
        for p in v:
            if not any(np.linalg.norm(p - u) <= 1e-12 for u in uniq):
                uniq.append(p)
        v = np.array(uniq)
        v.setflags(write=False)
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "facets", tuple(facets) if facets is not None else None)

    @property
    def dim(self) -> int:
        return self.vertices.shape[1]

    def facet_inequalities(self):
        """Return (A, b) with K = {x : A x <= b}."""
        if self.facets is not None:
            a = np.array([f[0] for f in self.facets], dtype=float)
            b = np.array([f[1] for f in self.facets], dtype=float)
            return a, b
        if self.dim == 1:
            lo = float(self.vertices.min())
            hi = float(self.vertices.max())
            return np.array([[1.0], [-1.0]]), np.array([hi, -lo])
        if self.vertices.shape[0] <= self.dim:
            raise StructuralError("degenerate polytope: supply facets explicitly")
        from scipy.spatial import ConvexHull

        hull = ConvexHull(self.vertices)
        return hull.equations[:, :-1].copy(), -hull.equations[:, -1].copy()

    def membership_residual(self, point) -> float:
        """l1 distance from the convex hull of the vertices, via an LP."""
        p = np.atleast_1d(np.asarray(point, dtype=float))
        k, d = self.vertices.shape
        # variables: lambda (k) >= 0, s+ (d) >= 0, s- (d) >= 0
        c = np.concatenate([np.zeros(k), np.ones(2 * d)])
        a_eq = np.zeros((d + 1, k + 2 * d))
        a_eq[:d, :k] = self.vertices.T
        a_eq[:d, k : k + d] = np.eye(d)
        a_eq[:d, k + d :] = -np.eye(d)
        a_eq[d, :k] = 1.0
        b_eq = np.concatenate([p, [1.0]])
        sol = lp_solve(c, a_eq=a_eq, b_eq=b_eq)
        return sol.value if sol.status == "optimal" else math.inf

    @staticmethod
    def interval(lo: float, hi: float) -> "Polytope":
        return Polytope(np.array([[float(lo)], [float(hi)]]))

    @staticmethod
    def regular_ball(radius: float = 1.0, facet_count: int = 64) -> "Polytope":
        """Inner polygonal approximation of the d=2 Euclidean ball."""
        ang = 2.0 * np.pi * np.arange(facet_count) / facet_count
        return Polytope(radius * np.stack([np.cos(ang), np.sin(ang)], axis=1))

    def reflected(self) -> "Polytope":
        return Polytope(-self.vertices)


def support_function(k: Polytope, x) -> float:
    x = np.atleast_1d(np.asarray(x, dtype=float))
    return float(np.max(k.vertices @ x))


def is_convex_1d(f: SampledFunction, tol: float = 1e-10) -> bool:
    """Slope monotonicity of the finite samples (d=1 only)."""
    if f.dim != 1:
        raise StructuralError("convexity check available only in d=1")
    keep = f.finite_mask()
    order = np.argsort(f.sites[keep, 0])
    z = f.sites[keep, 0][order]
    v = f.values[keep][order]
    slopes = np.diff(v) / np.diff(z)
    return bool(np.all(np.diff(slopes) >= -tol))


def subgradient_select(f: SampledFunction, index: int) -> np.ndarray:
    """Vertex of the subdifferential of the sampled envelope at a site.

    Selection rule: minimal-norm vertex of the supporting set, found by LP
    (in d=1 the vertices are the attained one-sided slopes). The returned
    vector is validated against every site before return; boundary sites
    have half-line subdifferentials whose only vertex is the inner slope.
    """
    if not math.isfinite(f.values[index]):
        raise NotConvexError("no subgradient at a +inf site")
    if f.dim == 1 and not is_convex_1d(f):
        raise NotConvexError("not convex at site: slope test failed")
    d = f.dim
    x = f.sites[index]
    fx = f.values[index]
    keep = f.finite_mask()
    rows = []
    rhs = []
    for z, fz in zip(f.sites[keep], f.values[keep]):
        if np.array_equal(z, x):
            continue
        rows.append(z - x)
        rhs.append(fz - fx)

    def _validate(g):
        return max((float(g @ row - r) for row, r in zip(rows, rhs)), default=0.0)

    if d == 1:
        lefts = [r / row[0] for row, r in zip(rows, rhs) if row[0] < 0]
        rights = [r / row[0] for row, r in zip(rows, rhs) if row[0] > 0]
        cands = []
        if lefts:
            cands.append(max(lefts))
        if rights:
            cands.append(min(rights))
        cands = [np.array([s]) for s in cands if _validate(np.array([s])) <= 1e-8]
        if not cands:
            raise NotConvexError("not convex at site: no supporting slope")
        return min(cands, key=lambda g: abs(float(g[0])))

    # d >= 2: minimize the l1 norm, then crash onto a vertex of the optimal
    # face with a fixed generic objective. variables: g (free), u (>= 0).
    c = np.concatenate([np.zeros(d), np.ones(d)])
    a_ub = []
    b_ub = []
    for row, r in zip(rows, rhs):
        a_ub.append(np.concatenate([row, np.zeros(d)]))
        b_ub.append(r)
    for i in range(d):
        e = np.zeros(2 * d)
        e[i], e[d + i] = 1.0, -1.0
        a_ub.append(e.copy())
        b_ub.append(0.0)
        e = np.zeros(2 * d)
        e[i], e[d + i] = -1.0, -1.0
        a_ub.append(e)
        b_ub.append(0.0)
    bounds = [(None, None)] * d + [(0.0, None)] * d
    sol = lp_solve(c, a_ub=np.array(a_ub), b_ub=np.array(b_ub), bounds=bounds)
    if sol.status != "optimal":
        raise NotConvexError("not convex at site: supporting LP infeasible")
    rstar = sol.value
    tilt = np.concatenate([np.array([3.0 ** -(k + 1) for k in range(d)]), np.zeros(d)])
    a_ub.append(c.copy())
    b_ub.append(rstar + 1e-9)
    sol2 = lp_solve(tilt, a_ub=np.array(a_ub), b_ub=np.array(b_ub), bounds=bounds)
    g = (sol2.primal if sol2.status == "optimal" else sol.primal)[:d]
    viol = _validate(g)
    if viol > 1e-8:
        raise NotConvexError(f"not convex at site: residual {viol}")
    return g
