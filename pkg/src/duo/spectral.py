"""Time-frequency transforms: STFT, constant-Q, median-filter HPSS, flux novelty."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.fft
import scipy.signal
from scipy.ndimage import uniform_filter1d

from .ingest import AudioBuffer


class SpectralError(ValueError):
    pass


@dataclass(frozen=True)
class Spectrogram:
    magnitudes: np.ndarray  # bins x frames
    frame_times: np.ndarray
    bin_freqs: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.magnitudes, dtype=float)
        t = np.asarray(self.frame_times, dtype=float)
        if m.ndim != 2 or m.shape[1] != t.size:
            raise SpectralError("magnitudes must be bins x frames with one time per frame")
        if np.any(m < 0) or not np.all(np.isfinite(m)):
            raise SpectralError("magnitudes must be finite and non-negative")
        if t.size > 1 and np.any(np.diff(t) <= 0):
            raise SpectralError("frame times must be strictly increasing")
        object.__setattr__(self, "magnitudes", m)
        object.__setattr__(self, "frame_times", t)
        object.__setattr__(self, "bin_freqs", np.asarray(self.bin_freqs, dtype=float))

    @property
    def n_frames(self) -> int:
        return self.magnitudes.shape[1]

    def with_magnitudes(self, m) -> "Spectrogram":
        return type(self)(m, self.frame_times, self.bin_freqs)


class CQTMatrix(Spectrogram):
    """Constant-Q magnitudes; ``bin_freqs`` is a geometric sequence."""

    @property
    def bins_per_octave(self) -> float:
        return 1.0 / np.log2(self.bin_freqs[1] / self.bin_freqs[0])


def _frames(x, frame_len, hop):
    n = 1 + (x.size - frame_len) // hop
    return np.lib.stride_tricks.sliding_window_view(x, frame_len)[::hop][:n]


def stft(a: AudioBuffer, frame_len: int = 2048, hop: int = 512) -> Spectrogram:
    """Hann-windowed magnitude STFT without padding.

    Frame ``j`` covers samples ``[j*hop, j*hop + frame_len)`` and is stamped
    at its centre.
    """
    if not 0 < hop <= frame_len:
        raise SpectralError("need 0 < hop <= frame_len")
    if a.samples.size < frame_len:
        raise SpectralError("audio shorter than one frame")
    frames = _frames(a.samples, frame_len, hop)
    win = scipy.signal.get_window("hann", frame_len, fftbins=False)
    mags = np.abs(scipy.fft.rfft(frames * win, axis=1)).T
    times = (np.arange(frames.shape[0]) * hop + frame_len / 2) / a.sample_rate
    freqs = np.fft.rfftfreq(frame_len, 1.0 / a.sample_rate)
    return Spectrogram(mags, times, freqs)


def frame_rms(a: AudioBuffer, frame_len: int = 2048, hop: int = 512):
    """RMS of each STFT-aligned frame and the frame-centre times."""
    if a.samples.size < frame_len:
        raise SpectralError("audio shorter than one frame")
    frames = _frames(a.samples, frame_len, hop)
    rms = np.sqrt(np.mean(frames**2, axis=1))
    times = (np.arange(frames.shape[0]) * hop + frame_len / 2) / a.sample_rate
    return rms, times


def cqt_frequencies(f_min: float, bins_per_octave: int, n_bins: int) -> np.ndarray:
    return f_min * 2.0 ** (np.arange(n_bins) / bins_per_octave)


def cqt_kernel(f: float, sample_rate: int, bins_per_octave: int) -> np.ndarray:
    """Complex analysis kernel for one CQT bin.

    Hann window of ``ceil(Q * sr / f)`` samples times a complex exponential,
    scaled so a unit-amplitude sinusoid at ``f`` yields magnitude 0.5.
    """
    q = 1.0 / (2.0 ** (1.0 / bins_per_octave) - 1.0)
    n = int(np.ceil(q * sample_rate / f))
    win = scipy.signal.get_window("hann", n, fftbins=False)
    phase = np.exp(-2j * np.pi * f * np.arange(n) / sample_rate)
    return win * phase / win.sum()


def cqt(
    a: AudioBuffer,
    f_min: float = 32.70,
    bins_per_octave: int = 36,
    n_bins: int = 252,
    hop: int = 512,
) -> CQTMatrix:
    """Constant-Q magnitudes by per-bin windowed complex correlation.

    Frame ``j`` is the correlation of the bin kernel centred on sample
    ``j*hop`` (zero padding outside the signal), evaluated directly; the
    bins of each octave are batched into one matrix product.
    """
    freqs = cqt_frequencies(f_min, bins_per_octave, n_bins)
    if f_min <= 0:
        raise SpectralError("f_min must be positive")
    if freqs[-1] >= a.sample_rate / 2:
        raise SpectralError(
            f"highest CQT bin {freqs[-1]:.1f} Hz reaches Nyquist {a.sample_rate / 2:.1f} Hz"
        )
    kernels = [cqt_kernel(f, a.sample_rate, bins_per_octave) for f in freqs]
    x = a.samples
    n_frames = x.size // hop + 1
    out = np.empty((n_bins, n_frames))
    # bins of one octave share a frame matrix; each kernel sits centred in it
    for lo in range(0, n_bins, bins_per_octave):
        group = kernels[lo : lo + bins_per_octave]
        L = max(k.size for k in group)
        K = np.zeros((L, 2 * len(group)))
        for i, kern in enumerate(group):
            off = L // 2 - kern.size // 2
            K[off : off + kern.size, i] = kern.real
            K[off : off + kern.size, len(group) + i] = kern.imag
        xpad = np.zeros(L // 2 + (n_frames - 1) * hop + L)
        xpad[L // 2 : L // 2 + x.size] = x
        frames = np.lib.stride_tricks.sliding_window_view(xpad, L)[::hop][:n_frames]
        step = max(1, (1 << 21) // L)
        for j in range(0, n_frames, step):
            R = np.ascontiguousarray(frames[j : j + step]) @ K
            out[lo : lo + len(group), j : j + step] = np.hypot(R[:, : len(group)], R[:, len(group) :]).T
    times = np.arange(n_frames) * hop / a.sample_rate
    return CQTMatrix(out, times, freqs)


def cqt_bin_naive(a: AudioBuffer, f: float, bins_per_octave: int, centres) -> np.ndarray:
    """Direct evaluation of one CQT bin at the given centre samples."""
    kern = cqt_kernel(f, a.sample_rate, bins_per_octave)
    half = kern.size // 2
    out = []
    for c in centres:
        acc = 0j
        for n in range(kern.size):
            i = c - half + n
            if 0 <= i < a.samples.size:
                acc += a.samples[i] * kern[n]
        out.append(abs(acc))
    return np.array(out)


def _check_kernel(k, name):
    if k < 3 or k % 2 == 0:
        raise SpectralError(f"{name} must be odd and >= 3")


def running_median(x: np.ndarray, k: int, axis: int = -1) -> np.ndarray:
    """Median over a centred window of odd length ``k`` with reflected edges.

    Same values as ``scipy.ndimage.median_filter`` with a 1-D footprint and
    ``mode="reflect"``, computed by partitioning strided windows in chunks.
    """
    x = np.moveaxis(np.asarray(x, dtype=float), axis, -1)
    h = k // 2
    pad = [(0, 0)] * (x.ndim - 1) + [(h, h)]
    w = np.lib.stride_tricks.sliding_window_view(np.pad(x, pad, mode="symmetric"), k, axis=-1)
    flat_w = w.reshape(-1, x.shape[-1], k)
    out = np.empty(flat_w.shape[:2])
    step = max(1, (1 << 22) // (k * x.shape[-1]))
    for i in range(0, flat_w.shape[0], step):
        out[i : i + step] = np.partition(flat_w[i : i + step], h, axis=-1)[..., h]
    return np.moveaxis(out.reshape(x.shape), -1, axis)


def hpss_masks(mags: np.ndarray, time_kernel: int = 31, freq_kernel: int = 31, power: float = 2.0):
    """Soft harmonic/percussive masks from median-filtered enhancements.

    Cells where both enhancements vanish are split evenly so the masks sum
    to one everywhere.
    """
    _check_kernel(time_kernel, "time_kernel")
    _check_kernel(freq_kernel, "freq_kernel")
    if mags.shape[0] < freq_kernel or mags.shape[1] < time_kernel:
        raise SpectralError("spectrogram smaller than the median kernels")
    harm = running_median(mags, time_kernel, axis=1)
    perc = running_median(mags, freq_kernel, axis=0)
    hp, pp = harm**power, perc**power
    total = hp + pp
    with np.errstate(invalid="ignore", divide="ignore"):
        mask_h = np.where(total > 0, hp / total, 0.5)
    return mask_h, 1.0 - mask_h


def hpss(s: Spectrogram, time_kernel: int = 31, freq_kernel: int = 31):
    """Split a magnitude spectrogram into (harmonic, percussive) parts."""
    mask_h, mask_p = hpss_masks(s.magnitudes, time_kernel, freq_kernel)
    return s.with_magnitudes(mask_h * s.magnitudes), s.with_magnitudes(mask_p * s.magnitudes)


def hpss_audio(a: AudioBuffer, frame_len: int = 2048, hop: int = 512,
               time_kernel: int = 31, freq_kernel: int = 31):
    """Time-domain harmonic and percussive stems via masked STFT resynthesis."""
    kw = dict(fs=a.sample_rate, window="hann", nperseg=frame_len, noverlap=frame_len - hop)
    _, _, Z = scipy.signal.stft(a.samples, **kw)
    mask_h, mask_p = hpss_masks(np.abs(Z), time_kernel, freq_kernel)
    n = a.samples.size
    out = []
    for mask in (mask_h, mask_p):
        _, y = scipy.signal.istft(Z * mask, **kw)
        y = np.pad(y[:n], (0, max(0, n - y.size)))
        out.append(AudioBuffer(y, a.sample_rate))
    return tuple(out)


def spectral_flux_novelty(s: Spectrogram) -> np.ndarray:
    """Half-wave rectified magnitude increase summed over bins, peak-normalized.

    Frame 0 has no predecessor and is zero.
    """
    m = s.magnitudes
    if m.shape[1] < 2:
        raise SpectralError("novelty needs at least two frames")
    nov = np.zeros(m.shape[1])
    nov[1:] = np.maximum(np.diff(m, axis=1), 0.0).sum(axis=0)
    peak = nov.max()
    return nov / peak if peak > 0 else nov


def pick_onsets(novelty, frame_times, delta: float = 0.07, window_s: float = 0.5,
                min_gap_s: float = 0.05) -> np.ndarray:
    """Onset times at local novelty maxima above a moving-mean threshold.

    A frame qualifies when it is a local maximum (first frame of a plateau)
    and exceeds the mean over +-``window_s`` plus ``delta``; accepted onsets
    are at least ``min_gap_s`` apart, earlier ones winning.
    """
    nov = np.asarray(novelty, dtype=float)
    times = np.asarray(frame_times, dtype=float)
    if nov.size == 0 or not np.any(nov > 0):
        return np.empty(0)
    step = np.median(np.diff(times)) if times.size > 1 else 1.0
    half = int(round(window_s / step))
    thresh = uniform_filter1d(nov, size=2 * half + 1, mode="constant") + delta
    prev = np.concatenate(([-np.inf], nov[:-1]))
    nxt = np.concatenate((nov[1:], [-np.inf]))
    peaks = np.flatnonzero((nov > prev) & (nov >= nxt) & (nov > thresh))
    onsets = []
    for p in peaks:
        if not onsets or times[p] - onsets[-1] >= min_gap_s:
            onsets.append(times[p])
    return np.array(onsets)


def spectral_centroid(c: Spectrogram) -> np.ndarray:
    """Per-frame magnitude-weighted mean bin index; NaN where a frame is empty."""
    m = c.magnitudes
    total = m.sum(axis=0)
    k = np.arange(m.shape[0])[:, None]
    with np.errstate(invalid="ignore", divide="ignore"):
        cen = (k * m).sum(axis=0) / total
    cen[total <= 0] = np.nan
    return cen


def matrix_to_csv(path, s: Spectrogram) -> None:
    """Debug dump: one row per bin, one column per frame."""
    np.savetxt(path, s.magnitudes, delimiter=",", fmt="%.10g")
