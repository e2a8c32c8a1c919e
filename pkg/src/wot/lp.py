"""Dense two-phase simplex with Farkas certificates.

Minimizes c.x subject to A_eq x = b_eq, A_ub x <= b_ub and box bounds.
Pivoting uses Dantzig's rule with smallest-index tie-breaks and switches to
Bland's rule permanently once the objective stalls, so the method cannot
cycle and the pivot sequence is reproducible. Desk-scale problems only: the
tableau is dense and no effort is spent on sparsity.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

PIVOT_TOL = 1e-10
STALL_LIMIT = 40


class LPError(RuntimeError):
    pass


@dataclass
class LPSolution:
    primal: np.ndarray | None
    dual_eq: np.ndarray | None
    dual_ub: np.ndarray | None
    value: float
    status: str  # "optimal" | "infeasible" | "unbounded"
    farkas: tuple[np.ndarray, np.ndarray] | None = None  # (y_eq, y_ub) infeasibility certificate
    ray: np.ndarray | None = None  # improving direction when unbounded
    residuals: dict | None = None


def lp_solve(c, a_eq=None, b_eq=None, a_ub=None, b_ub=None, bounds=None, tol=1e-9) -> LPSolution:
    c = np.asarray(c, dtype=float)
    n = c.size
    a_eq = np.zeros((0, n)) if a_eq is None else np.asarray(a_eq, dtype=float).reshape(-1, n)
    b_eq = np.zeros(0) if b_eq is None else np.asarray(b_eq, dtype=float).ravel()
    a_ub = np.zeros((0, n)) if a_ub is None else np.asarray(a_ub, dtype=float).reshape(-1, n)
    b_ub = np.zeros(0) if b_ub is None else np.asarray(b_ub, dtype=float).ravel()
    if bounds is None:
        bounds = [(0.0, None)] * n
    for arr in (c, a_eq, b_eq, a_ub, b_ub):
        if not np.isfinite(arr).all():
            raise LPError("non-finite coefficient in LP data")
    return _Problem(c, a_eq, b_eq, a_ub, b_ub, bounds).solve(tol)


class _Problem:
    """Carries the reduction to standard form min c.z, Az = b, z >= 0."""

    def __init__(self, c, a_eq, b_eq, a_ub, b_ub, bounds):
        self.c_orig, self.a_eq, self.b_eq, self.a_ub, self.b_ub = c, a_eq, b_eq, a_ub, b_ub
        self.bounds = [
            (-math.inf if lo is None else float(lo), math.inf if hi is None else float(hi))
            for lo, hi in bounds
        ]
        n = c.size
        self.n_orig = n
        self.m_eq = a_eq.shape[0]
        self.m_ub = a_ub.shape[0]

        # Variable transforms: x_j = off_j + sign_j * z_k (free vars split).
        cols = []
        offsets = np.zeros(n)
        upper_rows = []  # (std col, cap) for two-sided bounds
        for j, (lo, hi) in enumerate(bounds):
            lo = -math.inf if lo is None else float(lo)
            hi = math.inf if hi is None else float(hi)
            if lo > hi:
                raise LPError("empty bound interval")
            if math.isfinite(lo):
                offsets[j] = lo
                cols.append((j, 1.0))
                if math.isfinite(hi):
                    upper_rows.append((len(cols) - 1, hi - lo))
            elif math.isfinite(hi):
                offsets[j] = hi
                cols.append((j, -1.0))
            else:
                cols.append((j, 1.0))
                cols.append((j, -1.0))
        self.cols = cols
        self.offsets = offsets

        ns = len(cols)
        a_full = np.vstack([a_eq, a_ub])
        trans = np.zeros((a_full.shape[0], ns))
        c_std = np.zeros(ns)
        for k, (j, s) in enumerate(cols):
            trans[:, k] = s * a_full[:, j]
            c_std[k] += s * c[j]
        rhs = np.concatenate([b_eq, b_ub]) - a_full @ offsets

        m_caps = len(upper_rows)
        m = self.m_eq + self.m_ub + m_caps
        a_std = np.zeros((m, ns + self.m_ub + m_caps))
        a_std[: self.m_eq + self.m_ub, :ns] = trans
        b_std = np.zeros(m)
        b_std[: self.m_eq + self.m_ub] = rhs
        for r in range(self.m_ub):
            a_std[self.m_eq + r, ns + r] = 1.0
        for r, (k, cap) in enumerate(upper_rows):
            row = self.m_eq + self.m_ub + r
            a_std[row, k] = 1.0
            a_std[row, ns + self.m_ub + r] = 1.0
            b_std[row] = cap
        self.cost = np.concatenate([c_std, np.zeros(self.m_ub + m_caps)])

        self.flip = np.where(b_std < 0, -1.0, 1.0)
        self.a = a_std * self.flip[:, None]
        self.b = b_std * self.flip
        self.const = float(c @ offsets)

    def solve(self, tol) -> LPSolution:
        m, nt = self.a.shape
        tab = np.hstack([self.a, np.eye(m), self.b[:, None]])
        basis = np.arange(nt, nt + m)

        cost1 = np.concatenate([np.zeros(nt), np.ones(m)])
        status, _ = _run_simplex(tab, basis, cost1, allowed=nt + m)
        if status != "optimal":  # pragma: no cover - phase 1 is bounded below by 0
            raise LPError("phase 1 failed")
        infeas = float(cost1[basis] @ tab[:, -1])
        if infeas > max(tol, 1e-7 * (1.0 + float(np.abs(self.b).max(initial=0.0)))):
            y = cost1[basis] @ tab[:, nt : nt + m]
            y = y * self.flip
            return LPSolution(None, None, None, math.inf, "infeasible",
                              farkas=(y[: self.m_eq].copy(),
                                      y[self.m_eq : self.m_eq + self.m_ub].copy()))

        # Drive remaining artificials out of the basis; drop redundant rows.
        keep_rows = []
        for i in range(tab.shape[0]):
            if basis[i] < nt:
                keep_rows.append(i)
                continue
            structural = np.abs(tab[i, :nt])
            j = int(np.argmax(structural))
            if structural[j] > 1e-9:
                _pivot(tab, basis, i, j)
                keep_rows.append(i)
            # else: redundant constraint, row dropped (multiplier 0)
        keep_rows = np.array(keep_rows, dtype=int)
        if keep_rows.size < tab.shape[0]:
            tab = tab[keep_rows]
            basis = basis[keep_rows]

        cost2 = np.concatenate([self.cost, np.zeros(m)])
        status, j_ray = _run_simplex(tab, basis, cost2, allowed=nt)
        if status == "unbounded":
            d = np.zeros(nt + m)
            d[j_ray] = 1.0
            d[basis] = -tab[:, j_ray]
            ray = np.zeros(self.n_orig)
            for k, (jj, s) in enumerate(self.cols):
                ray[jj] += s * d[k]
            return LPSolution(None, None, None, -math.inf, "unbounded", ray=ray)

        z = np.zeros(nt + m)
        z[basis] = tab[:, -1]
        x = self.offsets.copy()
        for k, (j, s) in enumerate(self.cols):
            x[j] += s * z[k]
        # Duals recomputed from scratch on the kept rows: B^T y = c_B (the
        # tableau's artificial block stops tracking B^{-1} once redundant
        # rows are dropped). Degenerate terminal bases can be numerically
        # rank-deficient; the system is still consistent at optimality, so
        # least squares applies and the residual gate below stays the judge.
        y = np.zeros(m)
        basis_mat = self.a[np.ix_(keep_rows, basis)]
        y[keep_rows] = np.linalg.lstsq(basis_mat.T, cost2[basis], rcond=None)[0]
        y = y * self.flip
        y_eq = y[: self.m_eq].copy()
        y_ub = y[self.m_eq : self.m_eq + self.m_ub].copy()
        value = float(self.c_orig @ x)
        sol = LPSolution(x, y_eq, y_ub, value, "optimal")
        sol.residuals = self._residuals(x, y_eq, y_ub, value)
        scale = 1.0 + abs(value)
        if sol.residuals["primal"] > 1e-7 * scale or sol.residuals["gap"] > 1e-7 * scale:
            raise LPError(f"simplex terminated with residuals {sol.residuals}")
        return sol

    def _residuals(self, x, y_eq, y_ub, value) -> dict:
        res_p = 0.0
        if self.m_eq:
            res_p = max(res_p, float(np.abs(self.a_eq @ x - self.b_eq).max()))
        if self.m_ub:
            res_p = max(res_p, float(np.maximum(self.a_ub @ x - self.b_ub, 0.0).max()))
        # Reduced costs and the dual objective including active-bound terms.
        r = self.c_orig - self.a_eq.T @ y_eq - self.a_ub.T @ y_ub
        dual_val = float(self.b_eq @ y_eq + self.b_ub @ y_ub)
        res_d = float(np.maximum(y_ub, 0.0).max(initial=0.0))
        for j, (lo, hi) in enumerate(self.bounds):
            lo_f = math.isfinite(lo)
            hi_f = math.isfinite(hi)
            if lo_f and hi_f:
                dual_val += lo * max(r[j], 0.0) + hi * min(r[j], 0.0)
            elif lo_f:
                dual_val += lo * r[j]
                res_d = max(res_d, -r[j])
            elif hi_f:
                dual_val += hi * r[j]
                res_d = max(res_d, r[j])
            else:
                res_d = max(res_d, abs(r[j]))
        return {"primal": res_p, "dual": res_d, "gap": abs(value - dual_val)}


def _pivot(tab, basis, i, j):
    piv = tab[i, j]
    tab[i] /= piv
    coef = tab[:, j].copy()
    coef[i] = 0.0
    tab -= np.outer(coef, tab[i])
    tab[:, j] = 0.0
    tab[i, j] = 1.0
    basis[i] = j


def _run_simplex(tab, basis, cost, allowed):
    """Pivot tab/basis in place to optimality of `cost`.

    `allowed` is the number of leading columns permitted to enter. Entering
    rule: Dantzig with smallest-index tie-break, switching permanently to
    Bland's rule once the objective stalls (anti-cycling). Leaving rule:
    min-ratio; ties resolved by the largest pivot element in Dantzig mode
    (numerical stability) and by the smallest basis index in Bland mode.
    Returns (status, entering_column) with the column set when unbounded.
    """
    stall = 0
    bland = False
    last = math.inf
    m = tab.shape[0]
    guard = 20000 + 200 * (m + allowed)
    for _ in range(guard):
        r = cost[:allowed] - cost[basis] @ tab[:, :allowed]
        if bland:
            negs = np.nonzero(r < -PIVOT_TOL)[0]
            if negs.size == 0:
                return "optimal", -1
            j = int(negs[0])
        else:
            j = int(np.argmin(r))
            if r[j] >= -PIVOT_TOL:
                return "optimal", -1
        col = tab[:, j]
        pos = col > PIVOT_TOL
        if not pos.any():
            return "unbounded", j
        ratios = np.where(pos, tab[:, -1] / np.where(pos, col, 1.0), math.inf)
        best = float(ratios.min())
        tie = np.nonzero(ratios <= best + PIVOT_TOL * (1 + abs(best)))[0]
        if bland:
            i = int(tie[np.argmin(basis[tie])])
        else:
            i = int(tie[np.argmax(col[tie])])
        _pivot(tab, basis, i, j)
        obj = float(cost[basis] @ tab[:, -1])
        if obj < last - 1e-12 * (1 + abs(last)):
            stall = 0
        else:
            stall += 1
            if stall >= STALL_LIMIT:
                bland = True
        last = obj
    raise LPError("simplex iteration guard exceeded")
