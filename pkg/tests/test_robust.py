import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from duo.robust import HuberLine, LineFit, mad, residual_outliers, robust_fit


def test_mad_hand_computed():
    assert mad([1, 2, 3, 4, 100]) == 1.0
    assert mad([5, 5, 5]) == 0.0


@given(st.floats(-5, 5), st.floats(-5, 5), st.integers(0, 2**32 - 1))
def test_noiseless_line_recovered(a, b, seed):
    x = np.random.default_rng(seed).uniform(-3, 3, 40)
    fit = robust_fit(x, a + b * x)
    assert fit.intercept == pytest.approx(a, abs=1e-8) and fit.slope == pytest.approx(b, abs=1e-8)
    rep = residual_outliers(x, a + b * x, fit)
    assert rep.degenerate and not rep.flags.any()


def test_huber_resists_gross_outliers():
    rng = np.random.default_rng(0)
    x = rng.uniform(0, 10, 200)
    y = 1.0 + 0.5 * x + 0.1 * rng.standard_normal(200)
    y[:10] += 50
    est = HuberLine().fit(x[:, None], y)
    ols = np.polyfit(x, y, 1)
    assert abs(est.coef_ - 0.5) < 0.02 and abs(est.intercept_ - 1.0) < 0.1
    assert abs(ols[1] - 1.0) > 1.0
    assert est.converged_
    assert np.allclose(est.predict(x[:3, None]), est.intercept_ + est.coef_ * x[:3])
    assert est.score(x[10:, None], y[10:]) > 0.95


def test_residual_z_and_labels():
    x = np.arange(12.0)
    y = 2 * x + np.array([0.1, -0.1] * 6)
    y[5] += 5.0
    fit = LineFit(0.0, 2.0)
    rep = residual_outliers(x, y, fit, beats=np.arange(12), sections=["A"] * 6 + ["B"] * 6,
                            phrases=[f"p{k // 4}" for k in range(12)], pair=("x", "y"))
    # residuals are +-0.1 except beat 5: median 0.1 or -0.1, MAD 0.2 * 1.4826 scale
    assert rep.outliers == [(5, pytest.approx(rep.z[5]), 1, "A", "p1")]
    assert rep.z[5] > 2.5
    assert np.all(np.abs(np.delete(rep.z, 5)) <= 2.5)


def test_nan_entries_are_skipped_and_support_checked():
    x = np.arange(20.0)
    y = 3 * x
    y[4] = np.nan
    rep = residual_outliers(x, y, robust_fit(x, y))
    assert 4 not in rep.beats.tolist() and rep.beats.size == 19
    with pytest.raises(ValueError):
        robust_fit(x[:5], y[:5])
    with pytest.raises(ValueError):
        HuberLine().fit(np.ones((10, 1)), np.arange(10.0))
