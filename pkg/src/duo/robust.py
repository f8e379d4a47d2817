"""Huber IRLS line fits and MAD-standardized residual outliers."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_is_fitted, check_X_y, column_or_1d

logger = logging.getLogger(__name__)

MAD_TO_SIGMA = 1.4826


def mad(x) -> float:
    x = np.asarray(x, dtype=float)
    return float(np.median(np.abs(x - np.median(x))))


class HuberLine(RegressorMixin, BaseEstimator):
    """Straight-line fit ``y = a + b x`` by iteratively reweighted least squares.

    Residuals are scaled by ``1.4826 * MAD`` and weighted with Huber's
    ``min(1, c / |u|)``. Starts from ordinary least squares and stops when
    no coefficient moves by more than ``tol``.

    Attributes
    ----------
    intercept_, coef_ : float
    n_iter_ : int
    converged_ : bool
    """

    def __init__(self, c=1.345, tol=1e-6, max_iter=50):
        self.c = c
        self.tol = tol
        self.max_iter = max_iter

    def fit(self, X, y):
        X, y = check_X_y(X, y, ensure_min_samples=2, y_numeric=True)
        if X.shape[1] != 1:
            raise ValueError("HuberLine fits a single predictor")
        x = X[:, 0]
        if np.ptp(x) == 0:
            raise ValueError("predictor is constant")
        A = np.column_stack([np.ones_like(x), x])
        beta = np.linalg.lstsq(A, y, rcond=None)[0]
        self.converged_ = False
        self.n_iter_ = 0
        for it in range(1, self.max_iter + 1):
            resid = y - A @ beta
            scale = MAD_TO_SIGMA * mad(resid)
            tiny = 1e-12 * max(1.0, np.abs(y).max())
            if scale <= tiny:
                exact = np.abs(resid) <= tiny
                if exact.all() or exact.sum() < 2 or np.ptp(x[exact]) == 0:
                    self.converged_ = True
                    self.n_iter_ = it - 1
                    break
                w = exact.astype(float)
            else:
                u = np.abs(resid) / scale
                w = np.minimum(1.0, self.c / np.maximum(u, 1e-300))
            sw = np.sqrt(w)
            new = np.linalg.lstsq(A * sw[:, None], y * sw, rcond=None)[0]
            step = np.max(np.abs(new - beta))
            beta = new
            self.n_iter_ = it
            if step < self.tol:
                self.converged_ = True
                break
        if not self.converged_:
            logger.warning("Huber IRLS did not converge in %d iterations", self.max_iter)
        self.intercept_, self.coef_ = float(beta[0]), float(beta[1])
        self.n_features_in_ = 1
        return self

    def predict(self, X):
        check_is_fitted(self, "coef_")
        x = np.asarray(X, dtype=float).reshape(-1)
        return self.intercept_ + self.coef_ * x


@dataclass(frozen=True)
class LineFit:
    intercept: float
    slope: float
    converged: bool = True


def robust_fit(x, y, min_support: int = 8, **kw) -> LineFit:
    x = column_or_1d(x).astype(float)
    y = column_or_1d(y).astype(float)
    ok = np.isfinite(x) & np.isfinite(y)
    if ok.sum() < min_support:
        raise ValueError(f"need {min_support} joint samples, have {ok.sum()}")
    est = HuberLine(**kw).fit(x[ok, None], y[ok])
    return LineFit(est.intercept_, est.coef_, est.converged_)


@dataclass
class ResidualReport:
    """Standardized residuals of one descriptor pair.

    ``beats`` indexes the jointly active beats; ``z`` and ``flags`` align
    with it. ``sign`` is +1 above the fitted line, -1 below, 0 unflagged.
    """

    pair: tuple
    fit: LineFit
    beats: np.ndarray
    residuals: np.ndarray
    z: np.ndarray
    flags: np.ndarray
    sign: np.ndarray
    sections: list
    phrases: list
    degenerate: bool = False

    @property
    def outliers(self):
        """``(beat, z, sign, section, phrase)`` per flagged beat."""
        return [
            (int(self.beats[i]), float(self.z[i]), int(self.sign[i]), self.sections[i], self.phrases[i])
            for i in np.flatnonzero(self.flags)
        ]


def residual_outliers(x, y, fit: LineFit, threshold: float = 2.5, beats=None,
                      sections=None, phrases=None, pair=("x", "y")) -> ResidualReport:
    """Flag beats whose MAD-standardized residual exceeds ``threshold`` in magnitude.

    A zero MAD leaves every z at 0 and the report marked degenerate.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    ok = np.isfinite(x) & np.isfinite(y)
    beats = np.flatnonzero(ok) if beats is None else np.asarray(beats)[ok]
    eps = y[ok] - fit.intercept - fit.slope * x[ok]
    centre = np.median(eps)
    spread = MAD_TO_SIGMA * mad(eps)
    degenerate = spread <= 1e-12 * max(1.0, np.abs(y[ok]).max(initial=0.0))
    z = np.zeros_like(eps) if degenerate else (eps - centre) / spread
    flags = np.abs(z) > threshold
    sign = np.where(flags, np.sign(z), 0).astype(int)

    def labels(seq):
        return [seq[b] for b in beats] if seq is not None else [""] * beats.size

    return ResidualReport(tuple(pair), fit, beats, eps, z, flags, sign, labels(sections),
                          labels(phrases), degenerate)
