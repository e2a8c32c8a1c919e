import math

import numpy as np
import pytest

from wot.measures import DomainError
from wot.optim import (frank_wolfe, golden_section, newton_moment_match,
                       quadratic_step, root_find_monotone, supergradient_ascent)


def _simplex_lmo(grad):
    v = np.zeros(grad.size)
    v[int(np.argmin(grad))] = 1.0
    return v


def test_fw_linear_objective_one_iteration():
    c = np.array([0.3, -1.0, 0.5])
    oracle = lambda x: (float(c @ x), c)
    x, rep = frank_wolfe(oracle, _simplex_lmo, np.full(3, 1 / 3), tol=1e-12)
    assert rep.iterations <= 2
    assert np.allclose(x, [0, 1, 0])


def test_fw_projection_onto_simplex():
    # min 0.5|x - c|^2 over the simplex with c inside: optimum is c, value 0
    c = np.array([0.2, 0.5, 0.3])
    oracle = lambda x: (0.5 * float(np.sum((x - c) ** 2)), x - c)
    x, rep = frank_wolfe(oracle, _simplex_lmo, np.full(3, 1 / 3), tol=1e-10,
                         line_search="quadratic", away_steps=True)
    assert rep.value < 1e-10


def test_fw_projection_of_outside_point_matches_kkt():
    # 0.5|x-(2,2)|^2 over the unit simplex in R^2: KKT by hand gives
    # x = (1/2, 1/2) (equal coordinates, mass 1), value = 0.5*(2*(3/2)^2).
    c = np.array([2.0, 2.0])
    oracle = lambda x: (0.5 * float(np.sum((x - c) ** 2)), x - c)
    x, rep = frank_wolfe(oracle, _simplex_lmo, np.array([1.0, 0.0]), tol=1e-12,
                         line_search="quadratic", away_steps=True)
    assert np.allclose(x, [0.5, 0.5], atol=1e-8)
    assert abs(rep.value - 0.5 * 2 * 1.5 ** 2) < 1e-10


def test_fw_trace_monotone_after_line_search():
    rng = np.random.default_rng(5)
    c = rng.uniform(0, 1, 4)
    c /= c.sum()
    oracle = lambda x: (0.5 * float(np.sum((x - c) ** 2)), x - c)
    x, rep = frank_wolfe(oracle, _simplex_lmo, np.array([1.0, 0, 0, 0]),
                         tol=1e-12, trace=True, line_search="quadratic")
    tr = rep.trace
    assert all(tr[i + 1] <= tr[i] + 1e-14 for i in range(len(tr) - 1))


def test_supergradient_ascent_concave_quadratic():
    oracle = lambda g: (-float((g[0] - 0.7) ** 2), np.array([-2 * (g[0] - 0.7)]))
    g, rep = supergradient_ascent(oracle, iters=10000, start=np.zeros(1))
    assert abs(g[0] - 0.7) < 1e-4


def test_supergradient_ascent_box_projection():
    oracle = lambda g: (float(g[0]), np.array([1.0]))
    project = lambda g: np.clip(g, -1.0, 1.0)
    g, rep = supergradient_ascent(oracle, project=project, iters=500, start=np.zeros(1))
    assert abs(g[0] - 1.0) < 1e-12


def test_golden_and_quadratic_line_search():
    t, ft = golden_section(lambda t: (t - 0.3) ** 2, 0.0, 1.0)
    assert abs(t - 0.3) < 1e-9
    t2, _ = quadratic_step(lambda t: 2 * (t - 0.25) ** 2 + 1, 0.0, 1.0)
    assert abs(t2 - 0.25) < 1e-12


def test_root_find_monotone_examples():
    assert abs(root_find_monotone(lambda x: x, 2.0, (0, 1)) - 2.0) < 1e-11
    assert abs(root_find_monotone(math.exp, 1.0, (0.5, 2.0))) < 1e-10
    # piecewise-linear equation: nu uniform on 2 atoms, g = (0, 1):
    # 0.5 (s)_+ + 0.5 (s+1)_+ = 1  =>  s = 0.5 (both terms active): check
    f = lambda s: 0.5 * max(s, 0.0) + 0.5 * max(s + 1.0, 0.0)
    s = root_find_monotone(f, 1.0, (-2.0, 2.0))
    assert abs(s - 0.5) < 1e-10
    with pytest.raises(DomainError):
        root_find_monotone(lambda x: 0.0, 1.0, (0, 1))


def _tilt_oracle(ys, w, eps):
    def oracle(delta):
        logits = (ys @ delta) / eps + np.log(w)
        logits -= logits.max()
        p = np.exp(logits)
        p /= p.sum()
        mean = p @ ys
        centered = ys - mean
        cov = centered.T @ (p[:, None] * centered)
        return mean, cov

    return oracle


def test_newton_moment_match_examples():
    ys = np.array([[-1.0], [1.0]])
    w = np.array([0.5, 0.5])
    # symmetric base, target 0 -> delta 0
    d = newton_moment_match(_tilt_oracle(ys, w, 1.0), [0.0], eps=1.0)
    assert abs(d[0]) < 1e-9
    # logistic mean formula: m = tanh(delta/eps * 1) with eps=1
    d = newton_moment_match(_tilt_oracle(ys, w, 1.0), [math.tanh(1.0)], eps=1.0)
    assert abs(d[0] - 1.0) < 1e-8
    # base uniform on {0,1,2}, m=1 -> delta=0 by symmetry about 1
    ys3 = np.array([[0.0], [1.0], [2.0]])
    d = newton_moment_match(_tilt_oracle(ys3, np.full(3, 1 / 3), 1.0), [1.0], eps=1.0)
    assert abs(d[0]) < 1e-9


def test_newton_moment_match_outside_hull_fails():
    ys = np.array([[-1.0], [1.0]])
    with pytest.raises(DomainError):
        newton_moment_match(_tilt_oracle(ys, np.array([0.5, 0.5]), 1.0), [1.5], eps=1.0)


def test_newton_residual_decreases_monotonically():
    ys = np.array([[-1.0], [0.5], [2.0]])
    w = np.array([0.3, 0.3, 0.4])
    oracle = _tilt_oracle(ys, w, 0.7)
    seen = []

    def spy(delta):
        mean, cov = oracle(delta)
        seen.append(abs(mean[0] - 1.2))
        return mean, cov

    newton_moment_match(spy, [1.2], eps=0.7)
    accepted = [seen[0]]
    for r in seen[1:]:
        if r < accepted[-1]:
            accepted.append(r)
    assert accepted[-1] <= 1e-10
