"""Finitely supported measures, conditional laws, couplings and lifted plans.

All containers are immutable after construction (arrays are set read-only),
so they can be shared freely between threads. The operations below are pure.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .config import ATOM_MERGE_TOL, MARGINAL_TOL, WEIGHT_SUM_TOL


class StructuralError(ValueError):
    """Shapes or supports of the inputs do not line up."""


class DomainError(ValueError):
    """Inputs are structurally fine but outside the mathematical domain."""


def _as_points(points) -> np.ndarray:
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = pts[:, None]
    if pts.ndim != 2 or pts.shape[0] == 0:
        raise StructuralError(f"expected a nonempty (n, d) point array, got shape {pts.shape}")
    return pts


def _freeze(*arrays: np.ndarray) -> None:
    for a in arrays:
        a.setflags(write=False)


@dataclass(frozen=True)
class DiscreteMeasure:
    """Probability measure with finite support in R^d.

    Construction canonicalizes: atoms closer than ``ATOM_MERGE_TOL`` are
    merged (weights summed), zero-weight atoms are dropped, and the support
    is sorted lexicographically so equal measures have identical storage.
    """

    points: np.ndarray
    weights: np.ndarray

    def __init__(self, points, weights):
        pts = _as_points(points)
        w = np.asarray(weights, dtype=float)
        if w.shape != (pts.shape[0],):
            raise StructuralError("points and weights lengths differ")
        if np.any(w < 0):
            raise StructuralError("negative weight")
        total = float(w.sum())
        if abs(total - 1.0) > WEIGHT_SUM_TOL:
            raise StructuralError(f"weights sum to {total!r}, not 1")
        pts, w = _merge_atoms(pts, w)
        keep = w > 0.0
        pts, w = pts[keep], w[keep]
        order = np.lexsort(pts.T[::-1])
        pts, w = pts[order].copy(), w[order].copy()
        _freeze(pts, w)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "weights", w)

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def mean(self) -> np.ndarray:
        return self.weights @ self.points

    def integrate(self, values) -> float:
        values = np.asarray(values, dtype=float)
        if values.shape != (self.n,):
            raise StructuralError("value vector does not match support size")
        return float(self.weights @ values)

    @staticmethod
    def dirac(point) -> "DiscreteMeasure":
        return DiscreteMeasure([np.atleast_1d(np.asarray(point, dtype=float))], [1.0])

    def almost_equal(self, other: "DiscreteMeasure", tol: float = 1e-9) -> bool:
        return (
            self.n == other.n
            and self.dim == other.dim
            and np.allclose(self.points, other.points, atol=tol, rtol=0)
            and np.allclose(self.weights, other.weights, atol=tol, rtol=0)
        )


def _merge_atoms(pts: np.ndarray, w: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    # O(n^2) pairwise merge; supports are desk scale.
    n = pts.shape[0]
    parent = list(range(n))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i in range(n):
        for j in range(i + 1, n):
            if np.linalg.norm(pts[i] - pts[j]) <= ATOM_MERGE_TOL:
                ri, rj = find(i), find(j)
                if ri != rj:
                    parent[max(ri, rj)] = min(ri, rj)
    roots = sorted({find(i) for i in range(n)})
    out_pts = np.array([pts[r] for r in roots])
    out_w = np.array([sum(w[i] for i in range(n) if find(i) == r) for r in roots])
    return out_pts, out_w


@dataclass(frozen=True)
class ConditionalLaw:
    """Probability vector over the atoms of a fixed reference support."""

    probabilities: np.ndarray

    def __init__(self, probabilities):
        p = np.asarray(probabilities, dtype=float).copy()
        if p.ndim != 1 or p.size == 0:
            raise StructuralError("probabilities must be a nonempty vector")
        if np.any(p < 0):
            raise StructuralError("negative probability")
        total = float(p.sum())
        if abs(total - 1.0) > WEIGHT_SUM_TOL:
            raise StructuralError(f"probabilities sum to {total!r}, not 1")
        _freeze(p)
        object.__setattr__(self, "probabilities", p)

    @property
    def m(self) -> int:
        return self.probabilities.size

    def __len__(self) -> int:
        return self.m


@dataclass(frozen=True)
class Coupling:
    """Nonnegative matrix with prescribed row and column marginals."""

    mu: DiscreteMeasure
    nu: DiscreteMeasure
    matrix: np.ndarray

    def __init__(self, mu: DiscreteMeasure, nu: DiscreteMeasure, matrix):
        mat = np.asarray(matrix, dtype=float).copy()
        if mat.shape != (mu.n, nu.n):
            raise StructuralError(f"matrix shape {mat.shape} does not match supports ({mu.n}, {nu.n})")
        if np.any(mat < -MARGINAL_TOL):
            raise StructuralError("negative coupling entry")
        mat = np.maximum(mat, 0.0)
        if np.max(np.abs(mat.sum(axis=1) - mu.weights)) > MARGINAL_TOL:
            raise StructuralError("row sums do not match mu weights")
        if np.max(np.abs(mat.sum(axis=0) - nu.weights)) > MARGINAL_TOL:
            raise StructuralError("column sums do not match nu weights")
        _freeze(mat)
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "nu", nu)
        object.__setattr__(self, "matrix", mat)

    @property
    def row_support(self) -> np.ndarray:
        return self.mu.points

    @property
    def col_support(self) -> np.ndarray:
        return self.nu.points

    def rows(self) -> list[ConditionalLaw]:
        """mu-disintegration: conditional laws of the second coordinate."""
        return [ConditionalLaw(self.matrix[i] / self.mu.weights[i]) for i in range(self.mu.n)]

    def row_array(self) -> np.ndarray:
        return self.matrix / self.mu.weights[:, None]

    @staticmethod
    def from_rows(mu: DiscreteMeasure, nu: DiscreteMeasure, rows) -> "Coupling":
        mat = np.stack([np.asarray(getattr(r, "probabilities", r), dtype=float) for r in rows])
        return Coupling(mu, nu, mat * mu.weights[:, None])

    @staticmethod
    def identity(mu: DiscreteMeasure) -> "Coupling":
        return Coupling(mu, mu, np.diag(mu.weights))

    @staticmethod
    def product(mu: DiscreteMeasure, nu: DiscreteMeasure) -> "Coupling":
        return Coupling(mu, nu, np.outer(mu.weights, nu.weights))

    def conditional_means(self) -> np.ndarray:
        """Barycenter of every row's conditional law; shape (n, d)."""
        return self.row_array() @ self.nu.points


@dataclass(frozen=True)
class LiftedAtom:
    x_index: int
    rho: ConditionalLaw
    weight: float


@dataclass(frozen=True)
class LiftedPlan:
    """Probability on supp(mu) x P(supp(nu)): first marginal mu, intensity nu."""

    mu: DiscreteMeasure
    nu: DiscreteMeasure
    atoms: tuple[LiftedAtom, ...] = field(default_factory=tuple)

    def __init__(self, mu: DiscreteMeasure, nu: DiscreteMeasure, atoms):
        atoms = tuple(atoms)
        if not atoms:
            raise StructuralError("lifted plan needs at least one atom")
        mass = np.zeros(mu.n)
        intensity = np.zeros(nu.n)
        for a in atoms:
            if not (0 <= a.x_index < mu.n):
                raise StructuralError("x_index out of range")
            if a.rho.m != nu.n:
                raise StructuralError("conditional law support size mismatch")
            if a.weight < 0:
                raise StructuralError("negative atom weight")
            mass[a.x_index] += a.weight
            intensity += a.weight * a.rho.probabilities
        if np.max(np.abs(mass - mu.weights)) > MARGINAL_TOL:
            raise StructuralError("per-x masses do not match mu")
        if np.max(np.abs(intensity - nu.weights)) > MARGINAL_TOL:
            raise StructuralError("intensity of second marginal does not match nu")
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "nu", nu)
        object.__setattr__(self, "atoms", atoms)

    def to_coupling(self) -> Coupling:
        """Project to an ordinary coupling by averaging the conditional laws."""
        mat = np.zeros((self.mu.n, self.nu.n))
        for a in self.atoms:
            mat[a.x_index] += a.weight * a.rho.probabilities
        return Coupling(self.mu, self.nu, mat)

    @staticmethod
    def from_coupling(pi: Coupling) -> "LiftedPlan":
        atoms = [
            LiftedAtom(i, rho, float(pi.mu.weights[i]))
            for i, rho in enumerate(pi.rows())
        ]
        return LiftedPlan(pi.mu, pi.nu, atoms)


def barycenter(rho: ConditionalLaw | np.ndarray, support) -> np.ndarray:
    """Mean of a conditional law over the given support points."""
    p = np.asarray(getattr(rho, "probabilities", rho), dtype=float)
    pts = _as_points(support)
    if p.shape[0] != pts.shape[0]:
        raise StructuralError("conditional law and support lengths differ")
    return p @ pts


def relative_entropy(rho: ConditionalLaw | np.ndarray, nu_weights) -> float:
    """H(rho | nu) with 0 log 0 = 0; +inf off absolute continuity."""
    p = np.asarray(getattr(rho, "probabilities", rho), dtype=float)
    q = np.asarray(nu_weights, dtype=float)
    if p.shape != q.shape:
        raise StructuralError("index sets differ")
    pos = p > 0
    if np.any(q[pos] == 0):
        return math.inf
    return float(np.sum(p[pos] * np.log(p[pos] / q[pos])))


def restrict_normalize(rho: ConditionalLaw, mask) -> ConditionalLaw:
    """Condition rho on an index subset: scale inside, zero outside."""
    p = rho.probabilities
    sel = np.zeros(p.size, dtype=bool)
    sel[np.asarray(list(mask), dtype=int)] = True
    total = float(p[sel].sum())
    if total <= 0:
        raise DomainError("conditional law puts no mass on the mask")
    out = np.where(sel, p / total, 0.0)
    return ConditionalLaw(out)


def glue_conditionals(base: Coupling, kernel: Coupling) -> Coupling:
    """Conditionally independent gluing of mu->eta with eta->nu.

    pi_{ij} = sum_k base_{ik} kernel_{kj} / eta_k, skipping eta_k = 0.
    """
    if not base.nu.almost_equal(kernel.mu, tol=1e-12):
        raise StructuralError("intermediate supports do not match")
    eta_w = base.nu.weights
    scale = np.where(eta_w > 0, 1.0 / np.where(eta_w > 0, eta_w, 1.0), 0.0)
    mat = base.matrix @ (kernel.matrix * scale[:, None])
    return Coupling(base.mu, kernel.nu, mat)
