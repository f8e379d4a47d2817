"""Beat-level descriptor series: loudness, activity, tempo, rhythmic density, contours."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .ingest import AudioBuffer, BeatGrid
from .pitch import NoteEvents
from .spectral import CQTMatrix, frame_rms, pick_onsets, spectral_centroid, spectral_flux_novelty, stft

logger = logging.getLogger(__name__)

SILENCE_DB = -120.0
UNITS = ("dB", "BPM", "onsets/beat", "CQT-bin", "dimensionless")


@dataclass(frozen=True)
class DescriptorSeries:
    """One value and one activity bit per beat; masked values carry no meaning."""

    name: str
    values: np.ndarray
    unit: str
    mask: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        m = np.asarray(self.mask, dtype=bool)
        if v.ndim != 1 or m.shape != v.shape:
            raise ValueError("values and mask must be 1-D and of equal length")
        if self.unit not in UNITS:
            raise ValueError(f"unknown unit {self.unit!r}")
        if not np.all(np.isfinite(v[m])):
            raise ValueError(f"{self.name}: active entries must be finite")
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "mask", m)

    def __len__(self):
        return self.values.size

    def masked(self, mask) -> "DescriptorSeries":
        """Same series with ``mask`` ANDed into its own."""
        return DescriptorSeries(self.name, self.values, self.unit, self.mask & np.asarray(mask, bool))

    def renamed(self, name: str) -> "DescriptorSeries":
        return DescriptorSeries(name, self.values, self.unit, self.mask)

    def as_nan(self) -> np.ndarray:
        return np.where(self.mask, self.values, np.nan)


def beat_median(values, times, g: BeatGrid):
    """Median of the frame values whose times fall in each beat interval (NaN if none)."""
    values = np.asarray(values, dtype=float)
    owner = g.assign(times)
    out = np.full(len(g), np.nan)
    for beat in range(len(g)):
        v = values[(owner == beat) & np.isfinite(values)]
        if v.size:
            out[beat] = np.median(v)
    return out


def loudness_db(a: AudioBuffer, g: BeatGrid, frame_len: int = 2048, hop: int = 512,
                name: str = "loudness") -> DescriptorSeries:
    """Per-beat median frame RMS in dB relative to the stem's loudest frame.

    Digital silence is clamped to -120 dB. Beats without any frame centre
    are masked.
    """
    rms, times = frame_rms(a, frame_len, hop)
    peak = rms.max()
    if peak <= 0:
        db = np.full(rms.size, SILENCE_DB)
    else:
        with np.errstate(divide="ignore"):
            db = np.maximum(20.0 * np.log10(rms / peak), SILENCE_DB)
    vals = beat_median(db, times, g)
    ok = np.isfinite(vals)
    return DescriptorSeries(name, np.where(ok, vals, SILENCE_DB), "dB", ok)


def activity_mask(level: DescriptorSeries, threshold: float = -40.0) -> np.ndarray:
    """Active where the beat loudness is at least ``threshold`` dB."""
    if level.unit != "dB":
        raise ValueError("activity mask needs a dB series")
    return level.mask & (level.values >= threshold)


def tempo_curve(g: BeatGrid) -> DescriptorSeries:
    """BPM from each inter-beat interval; the last beat repeats the previous value."""
    ibi = np.diff(g.beat_times)
    if np.any(ibi <= 0):
        raise ValueError("duplicate beat times")
    bpm = 60.0 / ibi
    bpm = np.append(bpm, bpm[-1])
    return DescriptorSeries("tempo", bpm, "BPM", np.ones(bpm.size, bool))


def first_interaction_section(g: BeatGrid, voice_mask, guitar_mask, min_fraction: float = 0.5):
    """Beat indices of the first section where both stems are jointly active.

    Returns ``None`` when no section reaches ``min_fraction`` joint activity.
    """
    joint = np.asarray(voice_mask, bool) & np.asarray(guitar_mask, bool)
    for _, beats in g.section_beats():
        if joint[beats].mean() >= min_fraction:
            return beats
    return None


def baseline_tempo(t: DescriptorSeries, g: BeatGrid, voice_mask, guitar_mask,
                   min_fraction: float = 0.5):
    """Median BPM of the first interaction section.

    Returns ``(bpm, fell_back)``; with no qualifying section the global
    median is used and ``fell_back`` is True.
    """
    beats = first_interaction_section(g, voice_mask, guitar_mask, min_fraction)
    if beats is None:
        logger.warning("no section with joint voice/guitar activity; using the global median tempo")
        return float(np.median(t.values)), True
    return float(np.median(t.values[beats])), False


def tempo_deviation(t: DescriptorSeries, baseline: float) -> DescriptorSeries:
    if baseline <= 0:
        raise ValueError("baseline tempo must be positive")
    return DescriptorSeries("tempo_deviation", t.values / baseline - 1.0, "dimensionless", t.mask)


def count_per_beat(times, g: BeatGrid) -> np.ndarray:
    owner = g.assign(np.asarray(times, dtype=float))
    return np.bincount(owner[owner >= 0], minlength=len(g)).astype(float)


def guitar_onsets(percussive: AudioBuffer, frame_len: int = 2048, hop: int = 512, **pick) -> np.ndarray:
    s = stft(percussive, frame_len, hop)
    return pick_onsets(spectral_flux_novelty(s), s.frame_times, **pick)


def guitar_rhythmic_density(percussive: AudioBuffer, g: BeatGrid, frame_len: int = 2048,
                            hop: int = 512, **pick) -> DescriptorSeries:
    """Flux-novelty onsets of the percussive guitar stem counted per beat."""
    counts = count_per_beat(guitar_onsets(percussive, frame_len, hop, **pick), g)
    return DescriptorSeries("guitar_density", counts, "onsets/beat", np.ones(len(g), bool))


def voice_rhythmic_density(n: NoteEvents, g: BeatGrid) -> DescriptorSeries:
    counts = count_per_beat(n.onsets, g)
    return DescriptorSeries("voice_density", counts, "onsets/beat", np.ones(len(g), bool))


def contour(c: CQTMatrix, g: BeatGrid, mask, name: str = "contour") -> DescriptorSeries:
    """Per-beat median CQT centroid (fractional bin index), masked by activity."""
    vals = beat_median(spectral_centroid(c), c.frame_times, g)
    ok = np.isfinite(vals) & np.asarray(mask, bool)
    return DescriptorSeries(name, np.where(ok, vals, 0.0), "CQT-bin", ok)
