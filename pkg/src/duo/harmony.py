"""Physics-informed guitar dictionary, NNLS chroma and tonal interval vectors."""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace

import numpy as np
from scipy.ndimage import median_filter
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .ingest import BeatGrid, ChromaSeries
from .nnls import NNLSIterationError, nnls_gram
from .spectral import CQTMatrix, cqt_frequencies

logger = logging.getLogger(__name__)

# consonance weights for audio chroma, as published with the TIV.lib reference code
TIV_WEIGHTS = (3.0, 8.0, 11.5, 15.0, 14.5, 7.5)
BODY_RESONANCES = ((120.0, 30.0, 1.0), (470.0, 80.0, 1.0), (1000.0, 150.0, 1.0))
E2, E6 = 82.4069, 1318.5102


def midi_to_hz(m):
    return 440.0 * 2.0 ** ((np.asarray(m, dtype=float) - 69.0) / 12.0)


def hz_to_pitch_class(f):
    return (np.round(12.0 * np.log2(np.asarray(f, dtype=float) / 440.0)).astype(int) + 9) % 12


@dataclass(frozen=True)
class DictionaryParams:
    """Template model parameters plus the six ablation toggles.

    A toggle that is off replaces its component by the identity: ``s=1``
    for ``decay``, ``gamma=1`` for ``odd``, ``beta=0`` for
    ``inharmonicity`` and ``g(f)=1`` for ``resonance``. ``whiten`` and
    ``median`` gate CQT preprocessing.
    """

    s: float = 0.5
    gamma: float = 0.95
    beta: float = 0.0
    s_res: float = 1.4
    resonances: tuple = BODY_RESONANCES
    n_partials: int = 20
    pitch_range: tuple = (E2, E6)
    detune_cents: float = 0.0
    deposit_width: float = 0.25
    decay: bool = True
    odd: bool = True
    inharmonicity: bool = True
    resonance: bool = True
    whiten: bool = True
    median: bool = True

    def __post_init__(self):
        if not 0 < self.s <= 1:
            raise ValueError("decay rate s must lie in (0, 1]")
        if self.gamma <= 0 or self.beta < 0 or self.s_res <= 0:
            raise ValueError("need gamma > 0, beta >= 0 and s_res > 0")
        if self.n_partials < 1:
            raise ValueError("need at least one partial")
        lo, hi = self.pitch_range
        if not 0 < lo <= hi:
            raise ValueError("pitch range must be positive and ordered")
        for f_r, sigma, gain in self.resonances:
            if f_r <= 0 or sigma <= 0 or gain < 0:
                raise ValueError("resonances need positive centre, width and non-negative gain")
        object.__setattr__(self, "resonances", tuple(tuple(map(float, r)) for r in self.resonances))
        object.__setattr__(self, "pitch_range", tuple(map(float, self.pitch_range)))

    def with_toggles(self, **toggles) -> "DictionaryParams":
        return replace(self, **toggles)

    def template_f0s(self) -> np.ndarray:
        """Semitone grid across ``pitch_range``, shifted by ``detune_cents``."""
        lo, hi = self.pitch_range
        # bounds given to a few decimals still snap to their semitone
        m_lo = int(np.ceil(12 * np.log2(lo / 440.0) + 69 - 1e-3))
        m_hi = int(np.floor(12 * np.log2(hi / 440.0) + 69 + 1e-3))
        if m_hi < m_lo:
            raise ValueError("pitch range holds no semitone")
        return midi_to_hz(np.arange(m_lo, m_hi + 1)) * 2.0 ** (self.detune_cents / 1200.0)


def resonance_gain(p: DictionaryParams, f) -> np.ndarray:
    f = np.asarray(f, dtype=float)
    if not p.resonance:
        return np.ones_like(f)
    g = np.zeros_like(f)
    for f_r, sigma, gain in p.resonances:
        g += gain * np.exp(-((f - f_r) ** 2) / (2.0 * sigma**2))
    return p.s_res * g


def partial_amplitudes(p: DictionaryParams, f0: float, ceiling: float = np.inf):
    """Frequencies and amplitudes of the partials of one template.

    Returns ``(f_k, A_k)`` for ``k = 1..K``, dropping partials above
    ``ceiling``.
    """
    lo, hi = p.pitch_range
    if not lo * (1 - 1e-9) <= f0 <= hi * (1 + 1e-9):
        raise ValueError(f"f0 {f0} Hz outside pitch range {p.pitch_range}")
    k = np.arange(1, p.n_partials + 1, dtype=float)
    s = p.s if p.decay else 1.0
    gamma = p.gamma if p.odd else 1.0
    beta = p.beta if p.inharmonicity else 0.0
    a = s ** (k - 1)
    f = f0 * k * np.sqrt(1.0 + beta * k**2)
    a = np.where(k % 2 == 1, a * gamma, a)
    amp = a * resonance_gain(p, f)
    keep = f <= ceiling
    return f[keep], amp[keep]


@dataclass(frozen=True)
class Dictionary:
    matrix: np.ndarray  # CQT bins x templates
    template_f0s: np.ndarray

    @property
    def gram(self) -> np.ndarray:
        g = self.__dict__.get("_gram")
        if g is None:
            g = self.matrix.T @ self.matrix
            object.__setattr__(self, "_gram", g)
        return g


def build_dictionary(p: DictionaryParams, bin_freqs) -> Dictionary:
    """Deposit every template's partials onto the CQT bins and L2-normalize.

    Each partial spreads over bins as a Gaussian in fractional bin position
    with standard deviation ``p.deposit_width``.
    """
    bin_freqs = np.asarray(bin_freqs, dtype=float)
    bpo = 1.0 / np.log2(bin_freqs[1] / bin_freqs[0])
    ceiling = bin_freqs[-1] * 2.0 ** (0.5 / bpo)
    f0s = p.template_f0s()
    bins = np.arange(bin_freqs.size)[:, None]
    D = np.zeros((bin_freqs.size, f0s.size))
    for j, f0 in enumerate(f0s):
        f, amp = partial_amplitudes(replace(p, pitch_range=(f0, f0)), f0, ceiling)
        pos = bpo * np.log2(f / bin_freqs[0])
        D[:, j] = (amp * np.exp(-((bins - pos) ** 2) / (2.0 * p.deposit_width**2))).sum(axis=1)
    norms = np.linalg.norm(D, axis=0)
    D[:, norms > 0] /= norms[norms > 0]
    return Dictionary(D, f0s)


def whiten(c: CQTMatrix) -> CQTMatrix:
    """Divide each frame by its moving-mean envelope over +-1 octave of bins."""
    m = c.magnitudes
    half = int(round(c.bins_per_octave))
    csum = np.vstack([np.zeros((1, m.shape[1])), np.cumsum(m, axis=0)])
    lo = np.clip(np.arange(m.shape[0]) - half, 0, m.shape[0])
    hi = np.clip(np.arange(m.shape[0]) + half + 1, 0, m.shape[0])
    env = (csum[hi] - csum[lo]) / (hi - lo)[:, None]
    eps = 1e-6 * m.max(axis=0)
    with np.errstate(invalid="ignore", divide="ignore"):
        out = m / (env + eps)
    out[:, m.max(axis=0) <= 0] = 0.0
    return c.with_magnitudes(out)


def denoise_median(c: CQTMatrix, width: int = 5) -> CQTMatrix:
    """Per-bin temporal median filter of odd ``width``."""
    if width < 1 or width % 2 == 0:
        raise ValueError("median width must be odd and positive")
    if width == 1:
        return c
    return c.with_magnitudes(median_filter(c.magnitudes, size=(1, width), mode="nearest"))


def nnls_decompose(frame, d: Dictionary, tol: float = 1e-8, support=None):
    """Non-negative template activations of one spectrum frame.

    Returns ``(activations, ok)``; a frame that hits the iteration cap
    comes back flagged with zero activations. ``support`` warm-starts the
    solver (see :func:`nnls_gram`).
    """
    frame = np.asarray(frame, dtype=float)
    if frame.shape != (d.matrix.shape[0],):
        raise ValueError("frame length must equal the dictionary row count")
    if not np.any(frame):
        return np.zeros(d.matrix.shape[1]), True
    try:
        x = nnls_gram(d.gram, d.matrix.T @ frame, tol=tol, support=support)
    except NNLSIterationError:
        return np.zeros(d.matrix.shape[1]), False
    return x, True


def fold_matrix(template_f0s) -> np.ndarray:
    pcs = hz_to_pitch_class(template_f0s)
    F = np.zeros((12, pcs.size))
    F[pcs, np.arange(pcs.size)] = 1.0
    return F


def fold_to_chroma(activations, template_f0s) -> np.ndarray:
    """Sum activations into pitch classes (A440, pc 0 = C)."""
    return fold_matrix(template_f0s) @ np.asarray(activations, dtype=float)


def beat_chroma(frame_chroma, frame_times, g: BeatGrid) -> ChromaSeries:
    """Per-beat, per-pitch-class median of the frames inside each beat."""
    frame_chroma = np.asarray(frame_chroma, dtype=float)
    owner = g.assign(frame_times)
    out = np.zeros((12, len(g)))
    valid = np.zeros(len(g), dtype=bool)
    for beat in range(len(g)):
        cols = frame_chroma[:, owner == beat]
        if cols.shape[1]:
            out[:, beat] = np.median(cols, axis=1)
            valid[beat] = True
    return ChromaSeries(out, valid)


class NNLSChroma(TransformerMixin, BaseEstimator):
    """Frame chroma from CQT magnitudes through the physics-informed dictionary.

    ``fit`` builds the dictionary for the CQT bin layout implied by
    ``f_min``/``bins_per_octave`` and the number of columns of ``X``;
    ``transform`` maps a time-ordered ``(frames, bins)`` magnitude matrix
    to ``(frames, 12)`` chroma, applying median denoising and whitening
    first when enabled.
    """

    def __init__(self, f_min=32.70, bins_per_octave=36, s=0.5, gamma=0.95, beta=0.0,
                 s_res=1.4, resonances=BODY_RESONANCES, n_partials=20, pitch_range=(E2, E6),
                 detune_cents=0.0, deposit_width=0.25, decay=True, odd=True,
                 inharmonicity=True, resonance=True, whiten=True, median=True, median_width=5):
        self.f_min = f_min
        self.bins_per_octave = bins_per_octave
        self.s = s
        self.gamma = gamma
        self.beta = beta
        self.s_res = s_res
        self.resonances = resonances
        self.n_partials = n_partials
        self.pitch_range = pitch_range
        self.detune_cents = detune_cents
        self.deposit_width = deposit_width
        self.decay = decay
        self.odd = odd
        self.inharmonicity = inharmonicity
        self.resonance = resonance
        self.whiten = whiten
        self.median = median
        self.median_width = median_width

    @classmethod
    def from_params(cls, p: DictionaryParams, **kw) -> "NNLSChroma":
        fields = {k: getattr(p, k) for k in DictionaryParams.__dataclass_fields__}
        return cls(**fields, **kw)

    def dictionary_params(self) -> DictionaryParams:
        return DictionaryParams(**{
            k: getattr(self, k) for k in DictionaryParams.__dataclass_fields__
        })

    def fit(self, X, y=None):
        X = check_array(X, ensure_min_samples=1)
        self.n_features_in_ = X.shape[1]
        freqs = cqt_frequencies(self.f_min, self.bins_per_octave, X.shape[1])
        self.dictionary_ = build_dictionary(self.dictionary_params(), freqs)
        self.fold_ = fold_matrix(self.dictionary_.template_f0s)
        return self

    def _preprocess(self, X):
        c = CQTMatrix(X.T, np.arange(X.shape[0], dtype=float),
                      cqt_frequencies(self.f_min, self.bins_per_octave, X.shape[1]))
        if self.median:
            c = denoise_median(c, self.median_width)
        if self.whiten:
            c = whiten(c)
        return c.magnitudes

    def activations(self, X):
        """Template activations, shape ``(frames, templates)``; also sets ``failed_frames_``."""
        check_is_fitted(self, "dictionary_")
        X = check_array(X)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"expected {self.n_features_in_} CQT bins, got {X.shape[1]}")
        if np.any(X < 0):
            raise ValueError("CQT magnitudes must be non-negative")
        M = self._preprocess(X)
        acts = np.zeros((X.shape[0], self.dictionary_.matrix.shape[1]))
        failed = np.zeros(X.shape[0], dtype=bool)
        support = None
        for t in range(X.shape[0]):
            acts[t], ok = nnls_decompose(M[:, t], self.dictionary_, support=support)
            failed[t] = not ok
            # consecutive frames share most of their support
            support = acts[t] > 0 if ok else None
        if failed.any():
            logger.warning("%d frame(s) hit the NNLS iteration cap", failed.sum())
        self.failed_frames_ = failed
        return acts

    def transform(self, X):
        return self.activations(X) @ self.fold_.T

    def beat_chroma(self, c: CQTMatrix, g: BeatGrid) -> ChromaSeries:
        """Fit (if needed) on ``c``'s layout and aggregate frame chroma to beats."""
        X = c.magnitudes.T
        if not hasattr(self, "dictionary_") or self.n_features_in_ != X.shape[1]:
            self.fit(X)
        return beat_chroma(self.transform(X).T, c.frame_times, g)


@dataclass(frozen=True)
class TIVector:
    coeffs: np.ndarray  # six complex coefficients, k = 1..6
    weights: np.ndarray

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.coeffs))


def tiv(chroma, weights=TIV_WEIGHTS) -> TIVector:
    """Weighted DFT coefficients 1..6 of the unit-mass chroma."""
    c = np.asarray(chroma, dtype=float)
    if c.shape != (12,) or np.any(c < 0):
        raise ValueError("chroma must be a non-negative 12-vector")
    total = c.sum()
    if total <= 0:
        raise ValueError("TIV undefined for an all-zero chroma")
    w = np.asarray(weights, dtype=float)
    n = np.arange(12)
    k = np.arange(1, 7)[:, None]
    coeffs = w * (np.exp(-2j * np.pi * k * n / 12.0) @ (c / total))
    return TIVector(coeffs, w)


def tonal_dissonance(t: TIVector) -> float:
    return 1.0 - t.norm / float(np.linalg.norm(t.weights))


def tonal_dispersion(t: TIVector, center: TIVector) -> float:
    return float(np.linalg.norm(t.coeffs - center.coeffs))


def tiv_series(chroma: ChromaSeries, weights=TIV_WEIGHTS):
    """TIV per beat as a ``(beats, 6)`` complex array plus a validity mask."""
    T = np.zeros((len(chroma), 6), dtype=complex)
    valid = chroma.valid & (chroma.values.sum(axis=0) > 0)
    for b in np.flatnonzero(valid):
        T[b] = tiv(chroma.values[:, b], weights).coeffs
    return T, valid


def harmonic_center(T, valid, beats, weights=TIV_WEIGHTS) -> TIVector:
    """Complex mean of the valid TIVs among ``beats``."""
    beats = np.asarray(beats, dtype=int)
    sel = beats[np.asarray(valid)[beats]]
    if sel.size == 0:
        raise ValueError("no valid TIV in the reference section")
    return TIVector(np.asarray(T)[sel].mean(axis=0), np.asarray(weights, dtype=float))
