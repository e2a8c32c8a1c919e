import numpy as np

from _gen import random_measure, random_pair
from wot.classical import kantorovich_rubinstein_check, ot_solve, wasserstein
from wot.measures import DiscreteMeasure


def test_identity_coupling_zero_cost():
    rng = np.random.default_rng(0)
    mu = random_measure(rng, 4, 2)
    res = ot_solve(mu, mu, "euclidean")
    assert abs(res.value) < 1e-12


def test_forced_coupling_between_diracs():
    mu = DiscreteMeasure([[0.0]], [1.0])
    nu = DiscreteMeasure([[1.0]], [1.0])
    res = ot_solve(mu, nu, lambda x, y: 7.25)
    assert abs(res.value - 7.25) < 1e-12


def test_2x2_permutation_instance():
    mu = DiscreteMeasure([[0.0], [1.0]], [0.5, 0.5])
    res = ot_solve(mu, mu, np.array([[0.0, 1.0], [1.0, 0.0]]))
    assert abs(res.value) < 1e-12
    assert np.allclose(res.coupling.matrix, np.diag([0.5, 0.5]), atol=1e-10)


def test_strong_duality_and_slackness_random():
    rng = np.random.default_rng(4)
    for _ in range(40):
        mu, nu = random_pair(rng, nmax=8, d=int(rng.integers(1, 4)))
        cost = rng.uniform(0, 2, (mu.n, nu.n))
        res = ot_solve(mu, nu, cost)
        dual = float(mu.weights @ res.f + nu.weights @ res.g)
        assert abs(res.value - dual) <= 1e-8 * (1 + abs(res.value))
        slack = res.f[:, None] + res.g[None, :] - cost
        assert slack.max() <= 1e-8
        on = res.coupling.matrix > 1e-12
        if on.any():
            assert np.abs(slack[on]).max() <= 1e-8
        # normalization nu(g) = 0
        assert abs(nu.weights @ res.g) < 1e-9


def test_wasserstein_examples_and_triangle():
    rng = np.random.default_rng(5)
    mu = random_measure(rng, 3, 1)
    assert wasserstein(mu, mu, 2) == 0.0
    a = DiscreteMeasure([[0.0]], [1.0])
    b = DiscreteMeasure([[0.7]], [1.0])
    assert abs(wasserstein(a, b, 3.0) - 0.7) < 1e-10
    m = DiscreteMeasure([[0.0], [2.0]], [0.5, 0.5])
    nu = DiscreteMeasure([[1.0]], [1.0])
    assert abs(wasserstein(m, nu, 2) - 1.0) < 1e-10
    for _ in range(15):
        x = random_measure(rng, 3, 2)
        y = random_measure(rng, 3, 2)
        z = random_measure(rng, 3, 2)
        p = float(rng.choice([1.0, 2.0]))
        assert wasserstein(x, z, p) <= wasserstein(x, y, p) + wasserstein(y, z, p) + 1e-9


def test_kantorovich_rubinstein_matches_primal():
    rng = np.random.default_rng(6)
    mu = random_measure(rng, 3, 2)
    nu = random_measure(rng, 3, 2)
    val, psi, support = kantorovich_rubinstein_check(mu, nu)
    assert abs(val - ot_solve(mu, nu, "euclidean").value) <= 1e-8
    # psi is 1-Lipschitz on the joint support
    for i in range(len(support)):
        for j in range(len(support)):
            assert psi[i] - psi[j] <= np.linalg.norm(support[i] - support[j]) + 1e-9
    same = random_measure(rng, 3, 1)
    val0, _, _ = kantorovich_rubinstein_check(same, same)
    assert abs(val0) < 1e-10
    a = DiscreteMeasure([[0.0]], [1.0])
    b = DiscreteMeasure([[1.0]], [1.0])
    val1, psi1, sup1 = kantorovich_rubinstein_check(a, b)
    assert abs(val1 - 1.0) < 1e-10
