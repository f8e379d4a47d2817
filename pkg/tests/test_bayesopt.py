import numpy as np
import pytest

from duo.bayesopt import GaussianProcess, bayes_optimize, expected_improvement


def test_gp_interpolates_training_points():
    X = np.linspace(0, 1, 9)[:, None]
    y = np.sin(6 * X[:, 0])
    gp = GaussianProcess().fit(X, y)
    mu, sd = gp.predict(X)
    assert np.allclose(mu, y, atol=1e-3)
    assert np.all(sd < 0.05)
    _, sd_far = gp.predict([[2.0]])
    assert sd_far[0] > sd.max()


def test_expected_improvement_shape():
    mu = np.array([0.0, 1.0, 2.0])
    ei = expected_improvement(mu, np.ones(3), best=1.0)
    assert np.all(ei > 0) and np.all(np.diff(ei) > 0)
    assert expected_improvement(np.array([0.0]), np.array([1e-9]), 1.0)[0] == pytest.approx(0.0)


def test_finds_interior_maximum_in_2d():
    calls = []

    def f(p):
        calls.append(p)
        return -((p["a"] - 0.3) ** 2) - 0.5 * (p["b"] + 1.0) ** 2

    best, score, trace = bayes_optimize(f, {"a": (0.0, 1.0), "b": (-2.0, 2.0)}, n_init=8, n_iter=16, seed=1)
    assert len(trace) == len(calls) == 24
    assert abs(best["a"] - 0.3) < 0.1 and abs(best["b"] + 1.0) < 0.2
    assert score == max(s for _, s in trace)
    assert all(0 <= p["a"] <= 1 and -2 <= p["b"] <= 2 for p, _ in trace)


def test_deterministic_per_seed():
    def f(p):
        return np.cos(3 * p["x"])

    r1 = bayes_optimize(f, {"x": (0.0, 2.0)}, 4, 4, seed=5)
    r2 = bayes_optimize(f, {"x": (0.0, 2.0)}, 4, 4, seed=5)
    r3 = bayes_optimize(f, {"x": (0.0, 2.0)}, 4, 4, seed=6)
    assert r1 == r2 and r1[2] != r3[2]


def test_empty_range_rejected():
    with pytest.raises(ValueError):
        bayes_optimize(lambda p: 0.0, {"x": (1.0, 1.0)})
