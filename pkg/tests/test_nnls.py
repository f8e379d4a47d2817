import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from duo.nnls import NNLSIterationError, nnls, nnls_gram
from oracles import nnls_projected_gradient


@given(st.integers(0, 2**32 - 1), st.integers(2, 30), st.integers(1, 12))
def test_kkt_and_agreement(seed, m, n):
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((m, n))
    b = rng.standard_normal(m)
    x, rnorm = nnls(A, b)
    g = A.T @ (A @ x - b)
    assert np.all(x >= 0)
    assert np.all(g >= -1e-7)
    assert np.all(np.abs(x * g) <= 1e-7)
    assert rnorm == pytest.approx(np.linalg.norm(A @ x - b))
    if m >= n:
        # full column rank: the minimizer is unique and both forms agree on it
        xg = nnls_gram(A.T @ A, A.T @ b)
        assert np.allclose(xg, x, atol=1e-8)


@given(st.integers(0, 2**32 - 1))
def test_warm_start_reaches_same_minimizer(seed):
    rng = np.random.default_rng(seed)
    A = np.abs(rng.standard_normal((30, 10)))
    b = A @ np.maximum(rng.standard_normal(10), 0) + 0.05 * rng.standard_normal(30)
    G, c = A.T @ A, A.T @ b
    cold = nnls_gram(G, c)
    for _ in range(5):
        warm = nnls_gram(G, c, support=rng.integers(2, size=10).astype(bool))
        assert np.allclose(warm, cold, atol=1e-9)


def test_objective_matches_projected_gradient():
    rng = np.random.default_rng(3)
    A = rng.standard_normal((20, 8))
    b = rng.standard_normal(20)
    x, _ = nnls(A, b)
    xp = nnls_projected_gradient(A, b, iters=5000)
    f, fp = np.sum((A @ x - b) ** 2), np.sum((A @ xp - b) ** 2)
    assert f <= fp * (1 + 1e-10)
    assert abs(f - fp) / fp < 1e-8


def test_ill_conditioned_case_is_optimal():
    # an input on which scipy 1.15's nnls stops at a non-KKT point
    A = np.array([[-0.75619305, -1.29759643], [0.82815539, 1.26403941]])
    b = np.array([-0.6380366, 1.95236735])
    x, r = nnls(A, b)
    xp = nnls_projected_gradient(A, b, iters=20000)
    assert r <= np.linalg.norm(A @ xp - b) + 1e-9
    assert np.allclose(x, [1.66923246, 0.0], atol=1e-7)


def test_degenerate_inputs():
    x, r = nnls(np.zeros((4, 3)), np.ones(4))
    assert np.array_equal(x, np.zeros(3)) and r == pytest.approx(2.0)
    x, _ = nnls(np.eye(3), -np.ones(3))
    assert np.array_equal(x, np.zeros(3))
    with pytest.raises(ValueError):
        nnls(np.eye(3), np.ones(4))
    with pytest.raises(ValueError):
        nnls_gram(np.eye(3), np.ones(4))


def test_iteration_cap_raises():
    rng = np.random.default_rng(0)
    A = np.abs(rng.standard_normal((20, 8)))
    b = A @ np.ones(8)
    with pytest.raises(NNLSIterationError):
        nnls(A, b, max_iter=2)
