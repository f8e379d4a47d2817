"""Empirical mode decomposition and the slow (IMF >= 3) reconstruction of descriptor series."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.interpolate import CubicSpline
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array

MIN_RUN = 8


@dataclass(frozen=True)
class IMFSet:
    imfs: tuple  # each an ndarray of the input length
    residue: np.ndarray

    def __len__(self):
        return len(self.imfs)

    def reconstruct(self) -> np.ndarray:
        return np.sum(self.imfs, axis=0) + self.residue if self.imfs else self.residue.copy()


def local_extrema(x):
    """Indices of strict local maxima and minima; a plateau counts once at its centre."""
    x = np.asarray(x, dtype=float)
    d = np.diff(x)
    nz = np.flatnonzero(d != 0)
    if nz.size < 2:
        return np.empty(0, int), np.empty(0, int)
    s = np.sign(d[nz])
    turn = np.flatnonzero(s[1:] != s[:-1])
    # the extremum sits between the last step of one sign and the first of the other
    left = nz[turn] + 1
    right = nz[turn + 1]
    pos = (left + right) // 2
    is_max = s[turn] > 0
    return pos[is_max], pos[~is_max]


def _mirror(idx, vals, n, nbsym=2):
    """Reflect the first/last ``nbsym`` extrema about the series ends."""
    li, lv = idx[:nbsym], vals[:nbsym]
    ri, rv = idx[-nbsym:], vals[-nbsym:]
    left = -li[::-1]
    right = 2 * (n - 1) - ri[::-1]
    t = np.concatenate([left, idx, right]).astype(float)
    v = np.concatenate([lv[::-1], vals, rv[::-1]])
    t, keep = np.unique(t, return_index=True)
    return t, v[keep]


def _envelope(x, idx):
    t, v = _mirror(idx, x[idx], x.size)
    if t.size < 2:
        return None
    if t.size < 4:
        return np.interp(np.arange(x.size), t, v)
    return CubicSpline(t, v, bc_type="not-a-knot")(np.arange(x.size))


def sift(x, sd_threshold: float = 0.2, max_sifts: int = 10):
    """Extract one IMF candidate from ``x``; ``None`` if envelopes cannot be formed."""
    h = np.asarray(x, dtype=float).copy()
    for _ in range(max_sifts):
        maxima, minima = local_extrema(h)
        if maxima.size < 1 or minima.size < 1 or maxima.size + minima.size < 3:
            return None if _ == 0 else h
        upper, lower = _envelope(h, maxima), _envelope(h, minima)
        if upper is None or lower is None:
            return None if _ == 0 else h
        new = h - 0.5 * (upper + lower)
        denom = np.sum(h**2)
        sd = np.sum((h - new) ** 2) / denom if denom > 0 else 0.0
        h = new
        if sd < sd_threshold:
            break
    return h


def emd(x, sd_threshold: float = 0.2, max_sifts: int = 10, max_imfs: int | None = None) -> IMFSet:
    """Decompose ``x`` into IMFs plus a residue by cubic-spline sifting.

    Decomposition stops when the residue has fewer than three extrema or
    ``floor(log2 N)`` IMFs exist. The residue is ``x`` minus the IMFs, so
    the sum reconstructs the input up to rounding.
    """
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise ValueError("emd expects a 1-D series")
    n = x.size
    if n < MIN_RUN or np.ptp(x) == 0:
        return IMFSet((), x.copy())
    limit = int(np.floor(np.log2(n))) if max_imfs is None else max_imfs
    imfs = []
    residue = x.copy()
    while len(imfs) < limit:
        maxima, minima = local_extrema(residue)
        if maxima.size + minima.size < 3:
            break
        imf = sift(residue, sd_threshold, max_sifts)
        if imf is None:
            break
        imfs.append(imf)
        residue = residue - imf
    return IMFSet(tuple(imfs), x - np.sum(imfs, axis=0) if imfs else x.copy())


def reconstruct_slow(s: IMFSet, start_index: int = 3, include_residue: bool = True) -> np.ndarray:
    """Sum of IMFs numbered ``start_index`` and above (1-based), plus the residue by default."""
    if start_index < 1:
        raise ValueError("start_index is 1-based")
    parts = list(s.imfs[start_index - 1 :])
    out = np.sum(parts, axis=0) if parts else np.zeros_like(s.residue)
    return out + s.residue if include_residue else out


def contiguous_runs(mask):
    """``(start, stop)`` pairs of the True runs in ``mask``."""
    m = np.concatenate([[False], np.asarray(mask, bool), [False]])
    d = np.diff(m.astype(int))
    return list(zip(np.flatnonzero(d == 1), np.flatnonzero(d == -1)))


def slow_component(values, mask, start_index: int = 3, include_residue: bool = True,
                   min_run: int = MIN_RUN, return_parts: bool = False, **emd_kw):
    """Slow reconstruction of a masked series, run by run.

    Every contiguous active run of at least ``min_run`` beats is decomposed
    on its own; shorter runs pass through unchanged. Masked beats stay NaN.
    With ``return_parts`` also returns ``[(start, stop, IMFSet | None)]``.
    """
    values = np.asarray(values, dtype=float)
    out = np.full(values.size, np.nan)
    parts = []
    for a, b in contiguous_runs(mask):
        seg = values[a:b]
        if b - a >= min_run:
            s = emd(seg, **emd_kw)
            out[a:b] = reconstruct_slow(s, start_index, include_residue)
        else:
            s = None
            out[a:b] = seg
        parts.append((int(a), int(b), s))
    return (out, parts) if return_parts else out


class EMDSmoother(TransformerMixin, BaseEstimator):
    """Column-wise slow reconstruction of a ``(beats, descriptors)`` table.

    NaN marks masked beats; each column is processed independently with
    :func:`slow_component`.
    """

    def __init__(self, start_index=3, include_residue=True, min_run=MIN_RUN,
                 sd_threshold=0.2, max_sifts=10):
        self.start_index = start_index
        self.include_residue = include_residue
        self.min_run = min_run
        self.sd_threshold = sd_threshold
        self.max_sifts = max_sifts

    def fit(self, X, y=None):
        X = check_array(X, ensure_all_finite="allow-nan", ensure_min_samples=1)
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        X = check_array(X, ensure_all_finite="allow-nan", ensure_min_samples=1)
        out = np.empty_like(X)
        for j in range(X.shape[1]):
            col = X[:, j]
            out[:, j] = slow_component(
                np.nan_to_num(col), np.isfinite(col), self.start_index, self.include_residue,
                self.min_run, sd_threshold=self.sd_threshold, max_sifts=self.max_sifts,
            )
        return out
