"""Iterative optimization engines shared by the transport solvers.

All engines are stateless between calls and deterministic: no internal
randomness, fixed tie-breaking, caller-supplied iteration budgets.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .measures import DomainError

_INVGOLD = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass
class SolveReport:
    value: float
    iterations: int
    gap: float
    converged: bool
    trace: list[float] | None = None
    extra: dict = field(default_factory=dict)


def golden_section(phi, lo: float, hi: float, tol: float = 1e-11, max_iter: int = 120):
    """Minimize a unimodal function on [lo, hi]; returns (argmin, min)."""
    a, b = float(lo), float(hi)
    x1 = b - _INVGOLD * (b - a)
    x2 = a + _INVGOLD * (b - a)
    f1, f2 = phi(x1), phi(x2)
    it = 0
    while (b - a) > tol * (1.0 + abs(a) + abs(b)) and it < max_iter:
        if f1 <= f2:
            b, x2, f2 = x2, x1, f1
            x1 = b - _INVGOLD * (b - a)
            f1 = phi(x1)
        else:
            a, x1, f1 = x1, x2, f2
            x2 = a + _INVGOLD * (b - a)
            f2 = phi(x2)
        it += 1
    cands = [(phi(a), a), (f1, x1), (f2, x2), (phi(b), b)]
    fbest, tbest = min(cands, key=lambda p: (p[0], p[1]))
    return tbest, fbest


def quadratic_step(phi, lo: float, hi: float):
    """Exact line search for objectives that are quadratic along the segment."""
    f0 = phi(lo)
    f1 = phi(hi)
    mid = 0.5 * (lo + hi)
    fm = phi(mid)
    # Fit f(t) = a t^2 + b t + c through the three samples.
    a = 2.0 * (f0 + f1 - 2.0 * fm) / (hi - lo) ** 2
    if a <= 1e-15:
        return (lo, f0) if f0 <= f1 else (hi, f1)
    b = (f1 - f0) / (hi - lo) - a * (lo + hi)
    t = min(max(-b / (2.0 * a), lo), hi)
    ft = phi(t)
    cands = [(f0, lo), (fm, mid), (f1, hi), (ft, t)]
    fbest, tbest = min(cands, key=lambda p: (p[0], p[1]))
    return tbest, fbest


def brent_step(phi, lo: float, hi: float):
    """Bounded Brent line search (smooth objectives): few evaluations."""
    from scipy.optimize import minimize_scalar

    res = minimize_scalar(phi, bounds=(lo, hi), method="bounded",
                          options={"xatol": 1e-11})
    t, ft = float(res.x), float(res.fun)
    f_lo, f_hi = phi(lo), phi(hi)
    cands = [(f_lo, lo), (ft, t), (f_hi, hi)]
    fbest, tbest = min(cands, key=lambda p: (p[0], p[1]))
    return tbest, fbest


def _line_search(kind):
    if callable(kind):
        return kind
    if kind == "golden":
        return golden_section
    if kind == "quadratic":
        return quadratic_step
    if kind == "brent":
        return brent_step
    raise ValueError(f"unknown line search {kind!r}")


def frank_wolfe(oracle, lmo, start, tol: float = 1e-7, max_iters: int = 2000,
                away_steps: bool = False, line_search="golden",
                trace: bool = False):
    """Minimize a convex function over a polytope given by its linear oracle.

    oracle(x) -> (value, gradient); lmo(gradient) -> vertex minimizing the
    linearization. Stops when the Frank-Wolfe gap <grad, x - s> falls below
    tol * (1 + |value|). Away steps (optional) keep an explicit vertex
    decomposition of the iterate and give linear convergence on polytopes.
    """
    ls = _line_search(line_search)
    x = np.array(start, dtype=float)
    active: dict[bytes, tuple[np.ndarray, float]] = {}
    if away_steps:
        key = _vertex_key(x)
        active[key] = (x.copy(), 1.0)
    hist: list[float] = []
    gap = math.inf
    value = math.inf
    it = 0
    for it in range(1, max_iters + 1):
        value, grad = oracle(x)
        if trace:
            hist.append(value)
        s = lmo(grad)
        gap = float(grad.ravel() @ (x - s).ravel())
        if gap <= tol * (1.0 + abs(value)):
            return x, SolveReport(value, it, gap, True, hist if trace else None)
        use_away = False
        if away_steps and active:
            away_key = max(active, key=lambda k: (float(grad.ravel() @ active[k][0].ravel()), k))
            v_away, alpha = active[away_key]
            away_gap = float(grad.ravel() @ (v_away - x).ravel())
            if away_gap > gap and alpha < 1.0 - 1e-14:
                use_away = True
        if use_away:
            d = x - v_away
            t_max = alpha / (1.0 - alpha)
        else:
            d = s - x
            t_max = 1.0
        if float(np.abs(d).max(initial=0.0)) <= 1e-16:
            return x, SolveReport(value, it, gap, gap <= tol * (1.0 + abs(value)),
                                  hist if trace else None)
        phi = lambda t: oracle(x + t * d)[0]
        t, _ = ls(phi, 0.0, t_max)
        if t <= 0.0:
            # Line search refused the descent direction: numerical floor.
            return x, SolveReport(value, it, gap, False, hist if trace else None)
        x = x + t * d
        if away_steps:
            _update_active(active, use_away, t,
                           v_away if use_away else s, away_key if use_away else None)
            x = _recombine(active)
    value, grad = oracle(x)
    s = lmo(grad)
    gap = float(grad.ravel() @ (x - s).ravel())
    return x, SolveReport(value, it, gap, gap <= tol * (1.0 + abs(value)),
                          hist if trace else None)


def _vertex_key(v: np.ndarray) -> bytes:
    return np.round(v, 12).tobytes()


def _update_active(active, was_away, t, vertex, away_key):
    if was_away:
        for k in list(active):
            v, a = active[k]
            active[k] = (v, a * (1.0 + t))
        v, a = active[away_key]
        active[away_key] = (v, a - t)
    else:
        for k in list(active):
            v, a = active[k]
            active[k] = (v, a * (1.0 - t))
        key = _vertex_key(vertex)
        v0, a0 = active.get(key, (np.array(vertex, dtype=float), 0.0))
        active[key] = (v0, a0 + t)
    for k in list(active):
        if active[k][1] <= 1e-14:
            del active[k]
    total = sum(a for _, a in active.values())
    for k in list(active):
        v, a = active[k]
        active[k] = (v, a / total)


def _recombine(active) -> np.ndarray:
    vs = list(active.values())
    out = vs[0][0] * vs[0][1]
    for v, a in vs[1:]:
        out = out + v * a
    return out


def supergradient_ascent(oracle, project=None, iters: int = 1000,
                         step_a: float = 1.0, step_b: float = 10.0,
                         anchor=None, start=None, trace: bool = False):
    """Maximize a concave function by projected supergradient steps a/(b+k).

    oracle(g) -> (value, supergradient). The best iterate (not the last) is
    returned. `anchor` renormalizes the iterate after every step (used for
    the nu-mean-zero normalization of dual potentials).
    """
    g = np.array(start, dtype=float)
    if anchor is not None:
        g = anchor(g)
    best_val = -math.inf
    best_g = g.copy()
    hist: list[float] = []
    k = 0
    for k in range(iters):
        value, sg = oracle(g)
        if trace:
            hist.append(value)
        if value > best_val:
            best_val = value
            best_g = g.copy()
        step = step_a / (step_b + k)
        g = g + step * sg
        if project is not None:
            g = project(g)
        if anchor is not None:
            g = anchor(g)
    value, _ = oracle(g)
    if value > best_val:
        best_val = value
        best_g = g.copy()
    report = SolveReport(best_val, iters, math.nan, True, hist if trace else None)
    return best_g, report


def root_find_monotone(f, target: float, bracket=(0.0, 1.0),
                       value_tol: float = 1e-11, width_tol: float = 1e-13,
                       max_expand: int = 60) -> float:
    """Solve f(x) = target for nondecreasing f by bracketed bisection."""
    lo, hi = float(bracket[0]), float(bracket[1])
    if lo > hi:
        lo, hi = hi, lo
    flo, fhi = f(lo), f(hi)
    width = max(hi - lo, 1.0)
    expand = 0
    while flo > target and expand < max_expand:
        lo -= width
        width *= 2.0
        flo = f(lo)
        expand += 1
    width = max(hi - lo, 1.0)
    while fhi < target and expand < max_expand:
        hi += width
        width *= 2.0
        fhi = f(hi)
        expand += 1
    if flo > target or fhi < target:
        raise DomainError("could not bracket the target of the monotone equation")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        fm = f(mid)
        if abs(fm - target) <= value_tol:
            return mid
        if fm < target:
            lo = mid
        else:
            hi = mid
        if hi - lo <= width_tol:
            break
    return 0.5 * (lo + hi)


def newton_moment_match(oracle, m_target, start=None, eps: float = 1.0,
                        tol: float = 1e-10, max_iters: int = 200):
    """Find the exponential tilt whose tilted mean hits the target.

    oracle(delta) -> (mean, covariance) of the measure with density
    proportional to exp(<delta, y>/eps) against the base. The Jacobian of
    the mean map is covariance/eps; damped Newton with step halving on the
    residual norm. The caller guarantees the target lies in the relative
    interior of the convex hull of the base support.
    """
    m_target = np.atleast_1d(np.asarray(m_target, dtype=float))
    d = m_target.size
    delta = np.zeros(d) if start is None else np.array(start, dtype=float)
    mean, cov = oracle(delta)
    res = float(np.linalg.norm(mean - m_target))
    for _ in range(max_iters):
        if res <= tol:
            return delta
        jac = cov / eps + 1e-12 * np.eye(d)
        try:
            step = np.linalg.solve(jac, m_target - mean)
        except np.linalg.LinAlgError as exc:  # pragma: no cover
            raise DomainError("singular tilt Jacobian") from exc
        t = 1.0
        for _ in range(60):
            cand = delta + t * step
            mean_c, cov_c = oracle(cand)
            res_c = float(np.linalg.norm(mean_c - m_target))
            if res_c < res * (1.0 - 1e-4 * t) or res_c <= tol:
                delta, mean, cov, res = cand, mean_c, cov_c, res_c
                break
            t *= 0.5
        else:
            raise DomainError(
                "moment matching stalled; target must lie in the relative interior "
                "of the convex hull of the base support")
    if res > tol:
        raise DomainError("moment matching did not reach tolerance")
    return delta
