"""Monophonic voice transcription: YIN f0 candidates, two-state Viterbi voicing, note splitting."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.fft
from scipy.signal import medfilt

from .ingest import AudioBuffer


@dataclass(frozen=True)
class NoteEvents:
    """Time-ordered, non-overlapping ``(onset_s, offset_s, f0_hz)`` notes."""

    notes: tuple[tuple[float, float, float], ...] = ()

    def __post_init__(self):
        notes = tuple((float(a), float(b), float(f)) for a, b, f in self.notes)
        for i, (on, off, f0) in enumerate(notes):
            if not on < off:
                raise ValueError(f"note {i}: onset must precede offset")
            if f0 <= 0:
                raise ValueError(f"note {i}: f0 must be positive")
            if i and on < notes[i - 1][1]:
                raise ValueError(f"note {i} overlaps its predecessor")
        object.__setattr__(self, "notes", notes)

    def __len__(self):
        return len(self.notes)

    @property
    def onsets(self) -> np.ndarray:
        return np.array([n[0] for n in self.notes])


def read_notes(path) -> NoteEvents:
    """Load an externally produced ``onset_s,offset_s,f0_hz`` note list."""
    with open(Path(path), newline="") as fh:
        rows = [r for r in csv.reader(fh, skipinitialspace=True) if r and not r[0].startswith("#")]
    if rows and rows[0][0].strip().lower() == "onset_s":
        rows = rows[1:]
    return NoteEvents(tuple(tuple(float(c) for c in r[:3]) for r in rows))


def yin_frames(x, sr, frame_len=2048, hop=256, fmin=60.0, fmax=1000.0):
    """Cumulative-mean-normalized difference minima per frame.

    Each frame compares a window of ``frame_len // 2`` samples with its
    lagged copies. Returns ``(times, cmnd, (tau_min, tau_max))`` with one
    normalized difference row per frame.
    """
    w = frame_len // 2
    n_frames = max(0, 1 + (x.size - frame_len) // hop)
    tau_min = max(2, int(sr / fmax))
    tau_max = min(w - 1, int(np.ceil(sr / fmin)))
    times = (np.arange(n_frames) * hop + w / 2) / sr
    if n_frames == 0:
        return times, np.full(0, np.nan), np.ones(0)
    frames = np.lib.stride_tricks.sliding_window_view(x, frame_len)[::hop][:n_frames]
    nfft = scipy.fft.next_fast_len(frame_len + w)
    # d(tau) = e(0) + e(tau) - 2 r(tau) with r the cross-correlation of the window and the frame
    A = scipy.fft.rfft(frames[:, :w][:, ::-1], nfft, axis=1)
    B = scipy.fft.rfft(frames, nfft, axis=1)
    r = scipy.fft.irfft(A * B, nfft, axis=1)[:, w - 1 : w - 1 + w]
    csq = np.concatenate([np.zeros((n_frames, 1)), np.cumsum(frames**2, axis=1)], axis=1)
    taus = np.arange(w)
    e0 = csq[:, w][:, None]
    etau = csq[:, taus + w] - csq[:, taus]
    d = np.maximum(e0 + etau - 2.0 * r, 0.0)
    d[:, 0] = 0.0
    cum = np.cumsum(d[:, 1:], axis=1)
    cmnd = np.ones_like(d)
    with np.errstate(invalid="ignore", divide="ignore"):
        cmnd[:, 1:] = np.where(cum > 0, d[:, 1:] * taus[1:] / cum, 1.0)
    return times, cmnd, (tau_min, tau_max)


def _pick_period(row, tau_min, tau_max, threshold):
    seg = row[tau_min : tau_max + 1]
    below = np.flatnonzero(seg < threshold)
    if below.size:
        i = below[0]
        while i + 1 < seg.size and seg[i + 1] < seg[i]:
            i += 1
    else:
        i = int(np.argmin(seg))
    tau = i + tau_min
    val = row[tau]
    if tau_min < tau < tau_max:
        a, b, c = row[tau - 1], row[tau], row[tau + 1]
        den = a - 2 * b + c
        if den > 0:
            tau = tau + 0.5 * (a - c) / den
    return float(tau), float(val)


def viterbi_voicing(p_voiced, stay: float = 0.98) -> np.ndarray:
    """Most likely voiced/unvoiced state sequence of a two-state HMM."""
    p = np.clip(np.asarray(p_voiced, dtype=float), 1e-6, 1 - 1e-6)
    n = p.size
    if n == 0:
        return np.zeros(0, dtype=bool)
    logA = np.log(np.array([[stay, 1 - stay], [1 - stay, stay]]))
    emit = np.log(np.stack([1 - p, p], axis=1))
    score = np.log(0.5) + emit[0]
    back = np.zeros((n, 2), dtype=int)
    for t in range(1, n):
        cand = score[:, None] + logA
        back[t] = np.argmax(cand, axis=0)
        score = cand[back[t], [0, 1]] + emit[t]
    states = np.zeros(n, dtype=int)
    states[-1] = int(np.argmax(score))
    for t in range(n - 1, 0, -1):
        states[t - 1] = back[t, states[t]]
    return states.astype(bool)


def transcribe_voice(voice: AudioBuffer, frame_len: int = 2048, hop: int = 256,
                     threshold: float = 0.15, fmin: float = 60.0, fmax: float = 1000.0,
                     silence_db: float = -50.0, split_semitones: float = 0.6,
                     min_note_s: float = 0.08, smooth_frames: int = 5) -> NoteEvents:
    """Segment a monophonic stem into notes.

    Frames with a YIN dip below ``threshold`` and energy within
    ``silence_db`` of the loudest frame are voicing evidence; Viterbi
    smoothing yields voiced runs, which are split where the median-filtered
    pitch leaves the running note median by more than ``split_semitones``.
    Notes shorter than ``min_note_s`` are dropped.
    """
    x = voice.samples
    sr = voice.sample_rate
    times, cmnd, lags = yin_frames(x, sr, frame_len, hop, fmin, fmax)
    if times.size == 0:
        return NoteEvents()
    tau_min, tau_max = lags
    frames = np.lib.stride_tricks.sliding_window_view(x, frame_len)[::hop][: times.size]
    rms = np.sqrt(np.mean(frames**2, axis=1))
    peak = rms.max()
    if peak <= 0:
        return NoteEvents()
    loud = 20 * np.log10(np.maximum(rms, 1e-12) / peak) > silence_db
    period = np.full(times.size, np.nan)
    prob = np.full(times.size, 0.02)
    for t in np.flatnonzero(loud):
        tau, val = _pick_period(cmnd[t], tau_min, tau_max, threshold)
        period[t] = tau / sr
        prob[t] = 0.9 if val < threshold else 0.2
    voiced = viterbi_voicing(prob) & np.isfinite(period)
    midi = np.full(times.size, np.nan)
    midi[voiced] = 69 + 12 * np.log2(1.0 / period[voiced] / 440.0)
    notes = []
    frame_dt = hop / sr

    def _close(start, stop):
        # a split note ends exactly where its successor starts
        on = times[start]
        off = times[stop] if stop < times.size else times[stop - 1] + frame_dt
        if off - on >= min_note_s - 1e-9:
            f0 = 440.0 * 2 ** ((np.median(midi[start:stop]) - 69) / 12)
            notes.append((on, off, f0))

    t = 0
    while t < times.size:
        if not voiced[t]:
            t += 1
            continue
        end = t
        while end < times.size and voiced[end]:
            end += 1
        k = smooth_frames if smooth_frames % 2 else smooth_frames + 1
        run = midi[t:end]
        smooth = medfilt(run, k) if run.size >= k else run
        start = 0
        for i in range(1, run.size):
            if abs(smooth[i] - np.median(smooth[start:i])) > split_semitones:
                _close(t + start, t + i)
                start = i
        _close(t + start, end)
        t = end
    return NoteEvents(tuple(notes))
