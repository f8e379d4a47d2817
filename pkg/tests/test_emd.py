import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from duo.emd import EMDSmoother, contiguous_runs, emd, local_extrema, reconstruct_slow, slow_component


@given(st.integers(0, 2**32 - 1), st.integers(8, 400))
def test_decomposition_is_complete(seed, n):
    x = np.cumsum(np.random.default_rng(seed).standard_normal(n))
    s = emd(x)
    assert np.allclose(s.reconstruct(), x, rtol=0, atol=1e-9 * max(1, np.abs(x).max()))
    assert len(s) <= int(np.log2(n))


def test_imfs_are_zero_mean_oscillations():
    t = np.arange(1000) / 100
    x = np.sin(2 * np.pi * 5 * t) + 2 * np.sin(2 * np.pi * 0.4 * t)
    s = emd(x)
    first = s.imfs[0]
    mx, mn = local_extrema(first)
    assert abs(mx.size - mn.size) <= 1
    assert abs(first.mean()) < 0.05


def test_constant_and_short_series_pass_through():
    assert len(emd(np.ones(50))) == 0
    assert len(emd(np.arange(5.0))) == 0
    s = emd(np.arange(30.0))
    assert len(s) == 0 and np.array_equal(s.residue, np.arange(30.0))


def test_slow_reconstruction_index_and_residue():
    rng = np.random.default_rng(0)
    s = emd(rng.standard_normal(256))
    assert len(s) >= 3
    full = reconstruct_slow(s, 1)
    assert np.allclose(full, s.reconstruct())
    no_res = reconstruct_slow(s, 3, include_residue=False)
    assert np.allclose(no_res + s.residue, reconstruct_slow(s, 3))
    assert np.allclose(reconstruct_slow(s, 3), np.sum(s.imfs[2:], axis=0) + s.residue)
    with pytest.raises(ValueError):
        reconstruct_slow(s, 0)


def test_slow_component_runs_and_mask():
    rng = np.random.default_rng(1)
    v = rng.standard_normal(60)
    mask = np.ones(60, bool)
    mask[20:25] = False
    mask[50:55] = False
    out, parts = slow_component(v, mask, return_parts=True)
    assert np.all(np.isnan(out[~mask]))
    assert [(a, b) for a, b, _ in parts] == [(0, 20), (25, 50), (55, 60)]
    # the five-beat run is too short to decompose and passes through
    assert parts[2][2] is None and np.array_equal(out[55:], v[55:])
    assert np.allclose(out[0:20], reconstruct_slow(emd(v[0:20]), 3))
    assert contiguous_runs(np.array([1, 1, 0, 1], bool)) == [(0, 2), (3, 4)]


def test_smoother_estimator_columns():
    rng = np.random.default_rng(2)
    X = rng.standard_normal((64, 3))
    X[10:12, 1] = np.nan
    out = EMDSmoother().fit(X).transform(X)
    assert out.shape == X.shape
    assert np.all(np.isnan(out[10:12, 1])) and np.isfinite(out[:, 0]).all()
    assert np.allclose(out[:, 0], slow_component(X[:, 0], np.ones(64, bool)))
