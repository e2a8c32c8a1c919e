"""Shared instance generators for the test suite (seeded, deterministic)."""

import numpy as np

from wot.measures import DiscreteMeasure


def floored_weights(rng, n, floor=0.5):
    """Dirichlet weights mixed with uniform so min weight >= floor/(n(1+floor))."""
    w = rng.dirichlet(np.ones(n))
    return (w + floor) / (1.0 + floor * n)


def random_measure(rng, n, d=1, floor=0.0):
    w = floored_weights(rng, n, floor) if floor else rng.dirichlet(np.ones(n))
    return DiscreteMeasure(rng.uniform(-1, 1, (n, d)), w)


def random_pair(rng, nmax=5, d=1, floor=0.0):
    n = int(rng.integers(1, nmax + 1))
    m = int(rng.integers(1, nmax + 1))
    return random_measure(rng, n, d, floor), random_measure(rng, m, d, floor)


def mps_pair(rng, n, d=1, floor=0.0, spread=(0.1, 0.5)):
    """Martingale-feasible pair: nu is a mean-preserving spread of mu."""
    mu = random_measure(rng, n, d, floor)
    pts = []
    w = []
    for p, wt in zip(mu.points, mu.weights):
        delta = rng.uniform(*spread, d)
        pts.append(p + delta)
        w.append(wt / 2)
        pts.append(p - delta)
        w.append(wt / 2)
    return mu, DiscreteMeasure(np.array(pts), np.array(w))


def emt_attainable(eta, nu) -> bool:
    """No martingale-polytope entry is forced to zero.

    Tight convex-order contact forces zero entries in every martingale
    coupling; the entropic optimum is then an unattained infimum (the Gibbs
    tilts diverge), so EMT test instances are screened with this LP check.
    """
    from wot.lp import lp_solve

    k, m = eta.n, nu.n
    d = eta.dim
    rows = []
    rhs = []
    for i in range(k):
        r = np.zeros(k * m)
        r[i * m:(i + 1) * m] = 1.0
        rows.append(r)
        rhs.append(eta.weights[i])
    for j in range(m):
        r = np.zeros(k * m)
        r[j::m] = 1.0
        rows.append(r)
        rhs.append(nu.weights[j])
    for i in range(k):
        for dd in range(d):
            r = np.zeros(k * m)
            r[i * m:(i + 1) * m] = nu.points[:, dd] - eta.points[i, dd]
            rows.append(r)
            rhs.append(0.0)
    a_eq = np.array(rows)
    b_eq = np.array(rhs)
    sol0 = lp_solve(np.zeros(k * m), a_eq=a_eq, b_eq=b_eq)
    if sol0.status != "optimal":
        return False
    for idx in range(k * m):
        c = np.zeros(k * m)
        c[idx] = -1.0
        if -lp_solve(c, a_eq=a_eq, b_eq=b_eq).value < 1e-9:
            return False
    return True


def emt_pair(rng, n, d=1, max_tries=50):
    """Martingale pair screened for entropic attainability."""
    for _ in range(max_tries):
        eta, nu = mps_pair(rng, n, d, spread=(0.6, 1.2))
        if emt_attainable(eta, nu):
            return eta, nu
    raise RuntimeError("could not draw an attainable martingale pair")
