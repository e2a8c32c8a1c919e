"""Classical Monge-Kantorovich LP, dual potentials and Wasserstein distances."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .lp import LPError, lp_solve
from .measures import Coupling, DiscreteMeasure, StructuralError


@dataclass(frozen=True)
class OTResult:
    coupling: Coupling
    f: np.ndarray  # potential on supp(mu)
    g: np.ndarray  # potential on supp(nu), normalized to nu(g) = 0
    value: float


def cost_matrix(mu: DiscreteMeasure, nu: DiscreteMeasure, cost) -> np.ndarray:
    """Assemble c(x_i, y_j). `cost` is a matrix, a callable, or a builtin name."""
    if isinstance(cost, str):
        diff = mu.points[:, None, :] - nu.points[None, :, :]
        dist = np.linalg.norm(diff, axis=2)
        if cost == "euclidean":
            return dist
        if cost == "sqeuclidean":
            return dist ** 2
        raise StructuralError(f"unknown builtin cost {cost!r}")
    if callable(cost):
        return np.array([[float(cost(x, y)) for y in nu.points] for x in mu.points])
    c = np.asarray(cost, dtype=float)
    if c.shape != (mu.n, nu.n):
        raise StructuralError("cost matrix shape mismatch")
    return c


def transport_lp(mu_w: np.ndarray, nu_w: np.ndarray, c: np.ndarray):
    """Solve the transport LP; returns (matrix, f, g, value).

    Dual potentials are read off the marginal constraints and shifted so
    that nu(g) = 0, which makes outputs reproducible across bases.
    """
    n, m = c.shape
    cvec = c.ravel()
    a_eq = np.zeros((n + m, n * m))
    for i in range(n):
        a_eq[i, i * m : (i + 1) * m] = 1.0
    for j in range(m):
        a_eq[n + j, j::m] = 1.0
    b_eq = np.concatenate([mu_w, nu_w])
    sol = lp_solve(cvec, a_eq=a_eq, b_eq=b_eq)
    if sol.status != "optimal":  # pragma: no cover - transport LPs are feasible
        raise LPError(f"transport LP returned status {sol.status}")
    pi = sol.primal.reshape(n, m)
    f = sol.dual_eq[:n].copy()
    g = sol.dual_eq[n:].copy()
    shift = float(nu_w @ g)
    f += shift
    g -= shift
    return pi, f, g, sol.value


def ot_solve(mu: DiscreteMeasure, nu: DiscreteMeasure, cost) -> OTResult:
    c = cost_matrix(mu, nu, cost)
    if not np.isfinite(c).all():
        raise StructuralError("cost matrix must be finite")
    pi, f, g, value = transport_lp(mu.weights, nu.weights, c)
    # Clean tiny marginal drift before constructing the coupling.
    pi = np.maximum(pi, 0.0)
    return OTResult(Coupling(mu, nu, pi), f, g, value)


def wasserstein(mu: DiscreteMeasure, nu: DiscreteMeasure, p: float = 2.0) -> float:
    if p < 1:
        raise StructuralError("p must be at least 1")
    diff = mu.points[:, None, :] - nu.points[None, :, :]
    c = np.linalg.norm(diff, axis=2) ** p
    _, _, _, value = transport_lp(mu.weights, nu.weights, c)
    return float(max(value, 0.0) ** (1.0 / p))


def kantorovich_rubinstein_check(mu: DiscreteMeasure, nu: DiscreteMeasure):
    """W1 via the 1-Lipschitz dual LP on the joint support.

    Returns (value, psi, support) where psi maximizes nu(psi) - mu(psi)
    subject to |psi(z) - psi(z')| <= |z - z'| on all joint-support pairs.
    """
    pts = np.vstack([mu.points, nu.points])
    uniq: list[np.ndarray] = []
    for p in pts:
        if not any(np.linalg.norm(p - u) <= 1e-12 for u in uniq):
            uniq.append(p)
    support = np.array(uniq)
    k = support.shape[0]
    w = np.zeros(k)
    for pt, wt in zip(mu.points, mu.weights):
        idx = next(i for i, u in enumerate(support) if np.linalg.norm(pt - u) <= 1e-12)
        w[idx] -= wt
    for pt, wt in zip(nu.points, nu.weights):
        idx = next(i for i, u in enumerate(support) if np.linalg.norm(pt - u) <= 1e-12)
        w[idx] += wt
    a_ub = []
    b_ub = []
    for i in range(k):
        for j in range(k):
            if i == j:
                continue
            row = np.zeros(k)
            row[i], row[j] = 1.0, -1.0
            a_ub.append(row)
            b_ub.append(float(np.linalg.norm(support[i] - support[j])))
    # Pin psi at the first point: the objective is shift invariant.
    a_eq = np.zeros((1, k))
    a_eq[0, 0] = 1.0
    sol = lp_solve(-w, a_eq=a_eq, b_eq=[0.0], a_ub=np.array(a_ub), b_ub=np.array(b_ub),
                   bounds=[(None, None)] * k)
    if sol.status != "optimal":  # pragma: no cover
        raise LPError(f"KR LP returned status {sol.status}")
    return -sol.value, sol.primal.copy(), support
