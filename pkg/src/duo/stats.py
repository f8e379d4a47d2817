"""Commonality statistics: masked Pearson matrices, Fisher-z aggregation, gating, block bootstrap."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

MIN_SUPPORT = 8
R_CLAMP = 1.0 - 1e-7


def masked_pearson(x, y, mask_x=None, mask_y=None, min_support: int = MIN_SUPPORT):
    """Pearson r over beats active in both series.

    Returns ``(r, n)``; ``r`` is ``None`` when fewer than ``min_support``
    joint beats exist or either series is constant on them.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    joint = np.isfinite(x) & np.isfinite(y)
    if mask_x is not None:
        joint &= np.asarray(mask_x, bool)
    if mask_y is not None:
        joint &= np.asarray(mask_y, bool)
    n = int(joint.sum())
    if n < min_support:
        return None, n
    xc = x[joint] - x[joint].mean()
    yc = y[joint] - y[joint].mean()
    sxx, syy = np.dot(xc, xc), np.dot(yc, yc)
    scale = max(np.abs(x[joint]).max(), np.abs(y[joint]).max(), 1.0)
    if sxx <= (1e-12 * scale) ** 2 * n or syy <= (1e-12 * scale) ** 2 * n:
        return None, n
    r = float(np.dot(xc, yc) / np.sqrt(sxx * syy))
    return max(-1.0, min(1.0, r)), n


def fisher_aggregate(rs) -> float:
    """Back-transformed unweighted mean of Fisher z over correlations.

    Accepts plain values or ``(r, n)`` pairs; ``n`` does not weight the mean.
    """
    vals = [r[0] if isinstance(r, (tuple, list)) else r for r in rs]
    if not vals:
        raise ValueError("nothing to aggregate")
    z = np.arctanh(np.clip(np.asarray(vals, dtype=float), -R_CLAMP, R_CLAMP))
    return float(np.tanh(z.mean()))


@dataclass
class CorrelationReport:
    """Pairwise correlations for a set of descriptor names.

    ``r`` and ``n`` map sorted name pairs to values; absent pairs have
    ``None`` in ``r``. For aggregated reports ``r`` holds the Fisher mean and
    ``members`` counts the contributing pieces per pair.
    """

    names: list
    r: dict = field(default_factory=dict)
    n: dict = field(default_factory=dict)
    members: dict = field(default_factory=dict)
    ci: dict = field(default_factory=dict)

    def pairs(self):
        return list(itertools.combinations(self.names, 2))

    def get(self, a, b):
        if a == b:
            return 1.0
        return self.r.get(tuple(sorted((a, b))))

    def matrix(self) -> list:
        """Square nested list with ``None`` for undefined cells."""
        out = []
        for a in self.names:
            row = []
            for b in self.names:
                v = self.get(a, b)
                if a == b and not any(self.get(a, c) is not None for c in self.names if c != a):
                    v = None
                row.append(v)
            out.append(row)
        return out


def correlation_matrix(table: dict, min_support: int = MIN_SUPPORT) -> CorrelationReport:
    """Masked Pearson correlation over a ``name -> (values, mask)`` table."""
    names = sorted(table)
    rep = CorrelationReport(names)
    for a, b in rep.pairs():
        (xa, ma), (xb, mb) = table[a], table[b]
        r, n = masked_pearson(xa, xb, ma, mb, min_support)
        rep.r[(a, b)] = r
        rep.n[(a, b)] = n
    return rep


def aggregate_reports(reports) -> CorrelationReport:
    """Fisher-z aggregation of per-piece reports over the union of names."""
    reports = list(reports)
    names = sorted(set().union(*(rep.names for rep in reports))) if reports else []
    out = CorrelationReport(names)
    for a, b in out.pairs():
        rs = [(rep.get(a, b), rep.n.get((a, b), 0)) for rep in reports]
        rs = [(r, n) for r, n in rs if r is not None]
        out.r[(a, b)] = fisher_aggregate(rs) if rs else None
        out.n[(a, b)] = int(sum(n for _, n in rs))
        out.members[(a, b)] = len(rs)
    return out


def gate_pairs(report: CorrelationReport, threshold: float = 0.6):
    """Pairs whose (aggregated) correlation magnitude strictly exceeds ``threshold``."""
    return [(a, b, r) for (a, b), r in sorted(report.r.items()) if r is not None and abs(r) > threshold]


def _rows_pearson(X, Y):
    xc = X - X.mean(axis=1, keepdims=True)
    yc = Y - Y.mean(axis=1, keepdims=True)
    num = np.einsum("ij,ij->i", xc, yc)
    den = np.sqrt(np.einsum("ij,ij->i", xc, xc) * np.einsum("ij,ij->i", yc, yc))
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.clip(num / den, -1.0, 1.0)


def block_bootstrap_ci(x, y, B: int = 1000, block_len: int = 8, seed=0, level: float = 0.95,
                       mask=None):
    """Percentile CI of Pearson r under the moving-block bootstrap.

    Overlapping blocks of paired values are drawn with replacement and
    concatenated to the sample length. Replicates with a constant resample
    are discarded. ``seed`` (int or Generator) makes the result
    reproducible.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    joint = np.isfinite(x) & np.isfinite(y)
    if mask is not None:
        joint &= np.asarray(mask, bool)
    x, y = x[joint], y[joint]
    n = x.size
    if block_len < 1 or n < 3 * block_len:
        raise ValueError(f"need at least {3 * block_len} joint samples, have {n}")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    n_blocks = -(-n // block_len)
    starts = rng.integers(0, n - block_len + 1, size=(B, n_blocks))
    idx = (starts[:, :, None] + np.arange(block_len)).reshape(B, -1)[:, :n]
    r = _rows_pearson(x[idx], y[idx])
    r = r[np.isfinite(r)]
    if r.size == 0:
        raise ValueError("every bootstrap replicate was degenerate")
    tail = 100 * (1 - level) / 2
    lo, hi = np.percentile(r, [tail, 100 - tail])
    return float(lo), float(hi)
