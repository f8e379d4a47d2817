"""Synthetic voice/guitar duo pieces with known chords, onsets and planted couplings.

Guitar strums are rendered from the same partial model the chroma
dictionary uses (with exponential temporal decay and light noise); the
voice is a legato harmonic tone sequence. Each descriptor is driven by one
latent process so tests can tell planted from accidental correlation.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.ndimage import gaussian_filter1d

from .harmony import DictionaryParams, midi_to_hz, partial_amplitudes
from .ingest import AnnotationSet, AudioBuffer, PC_NAMES, write_annotations, write_audio

QUALITY_POOL = ("maj", "min", "dom7")
QUALITY_STEPS = {"maj": (0, 4, 7), "min": (0, 3, 7), "dom7": (0, 4, 7, 10)}

# latent causes reaching each descriptor in the generator, including paths
# through the measurement: strum count and chord size move the guitar RMS,
# and faster note changes pull the CQT centroid of the voice down (long
# low-bin windows still hold the previous note)
def descriptor_causes(planted: bool = True) -> dict:
    rhythm = "guitar_level" if planted else "voice_rhythm"
    return {
        "tempo": {"tempo"},
        "tempo_deviation": {"tempo"},
        "guitar_loudness": {"guitar_level", "strum_pattern", "chords"},
        "guitar_density": {"strum_pattern"},
        "harmonic_contour": {"chords"},
        "tonal_dissonance": {"chords"},
        "tonal_dispersion": {"chords"},
        "voice_density": {rhythm},
        "melodic_contour": {"melody", rhythm},
        "voice_loudness": {"voice_level"},
    }


def coupled_by_construction(a: str, b: str, planted: bool = True) -> bool:
    """True when the generator gives ``a`` and ``b`` a common latent cause."""
    causes = descriptor_causes(planted)
    return bool(causes.get(a, set()) & causes.get(b, set()))


@dataclass
class SynthPiece:
    piece_id: str
    voice: AudioBuffer
    guitar: AudioBuffer
    annotations: AnnotationSet
    strum_times: np.ndarray
    note_onsets: np.ndarray
    chord_per_beat: list
    truth: dict = field(default_factory=dict)


def _smooth_walk(rng, n, sigma, scale):
    w = gaussian_filter1d(rng.standard_normal(n), sigma, mode="nearest")
    w -= w.mean()
    peak = np.abs(w).max()
    return scale * w / peak if peak > 0 else w


def render_pluck(f0, dur, sr, params: DictionaryParams, tau=0.5, rng=None):
    """One guitar note: model partials with exponential decay and a short release."""
    n = int(round(dur * sr))
    t = np.arange(n) / sr
    f, amp = partial_amplitudes(params, f0, ceiling=0.45 * sr)
    phases = rng.uniform(0, 2 * np.pi, f.size) if rng is not None else np.zeros(f.size)
    x = (amp[:, None] * np.sin(2 * np.pi * f[:, None] * t + phases[:, None])).sum(axis=0)
    env = np.exp(-t / tau)
    rel = min(n, int(0.02 * sr))
    env[n - rel :] *= np.linspace(1, 0, rel)
    att = min(n, int(0.002 * sr))
    env[:att] *= np.linspace(0, 1, att)
    return x * env


def synth_piece(piece_id="piece", seed=0, n_beats=128, sr=22050, bpm=120.0, intro_beats=8,
                planted=True, voice_silent=False, tempo_drift=0.05, level_range_db=12.0,
                level_period=(32.0, 56.0), density_jitter=0.35, max_notes=4, mid_sigma=2.0,
                mid_db=5.0, mid_notes=0.6, fast_sigma=1.0, noise=3e-4,
                params: DictionaryParams | None = None) -> SynthPiece:
    """Render one duo piece.

    The guitar strums chords (one per bar) 1-2 times per beat under a level
    swelling sinusoidally with a period drawn from ``level_period`` beats; when
    ``planted``, the voice sings 1 to ``max_notes`` legato notes per beat,
    more when the guitar is quieter, with phrase-scale wander and per-beat
    jitter on top. Tempo drift and voice level vary on the
    ``fast_sigma`` scale and the melody draws scale degrees independently,
    so their slow components stay close to noise. The voice enters after
    ``intro_beats``.
    """
    rng = np.random.default_rng(seed)
    params = params or DictionaryParams()
    # beat grid with a smooth random tempo drift
    drift = _smooth_walk(rng, n_beats, fast_sigma, tempo_drift)
    ibi = 60.0 / (bpm * (1 + drift))
    beats = 0.5 + np.concatenate([[0.0], np.cumsum(ibi[:-1])])
    end = beats[-1] + ibi[-1] + 0.5
    n = int(np.ceil(end * sr))

    # guitar level: a slow swell with a random period, in dB below full scale
    period = rng.uniform(*level_period)
    level01 = 0.5 + 0.5 * np.sin(2 * np.pi * np.arange(n_beats) / period + rng.uniform(0, 2 * np.pi))
    level_db = -2.0 - level_range_db * (1 - level01)
    # phrase-scale accents, independent of everything else
    level_db = np.minimum(level_db + _smooth_walk(rng, n_beats, mid_sigma, mid_db), 0.0)

    # chords, one per bar
    n_bars = -(-n_beats // 4)
    chords = []
    for _ in range(n_bars):
        root = int(rng.integers(12))
        qual = QUALITY_POOL[int(rng.integers(len(QUALITY_POOL)))]
        chords.append((root, qual))
    chord_per_beat = [chords[i // 4] for i in range(n_beats)]

    guitar = np.zeros(n)
    strums = []
    strum_counts = rng.integers(1, 3, size=n_beats)
    for i in range(n_beats):
        root, qual = chord_per_beat[i]
        midis = [48 + root + step for step in QUALITY_STEPS[qual]]
        gain = 10 ** (level_db[i] / 20) / len(midis)
        k = int(strum_counts[i])
        for j in range(k):
            t0 = beats[i] + 0.03 + j * ibi[i] / k
            nxt = beats[i] + 0.03 + (j + 1) * ibi[i] / k
            strums.append(t0)
            for m_i, m in enumerate(midis):
                start = t0 + 0.008 * m_i
                dur = nxt - start + 0.02
                s0 = int(round(start * sr))
                x = render_pluck(float(midi_to_hz(m)), dur, sr, params, rng=rng)
                stop = min(n, s0 + x.size)
                guitar[s0:stop] += gain * x[: stop - s0]
            # pick attack: a few milliseconds of broadband noise
            b0 = int(round(t0 * sr))
            burst = rng.standard_normal(int(0.004 * sr)) * np.hanning(int(0.004 * sr))
            guitar[b0 : b0 + burst.size] += 0.5 * gain * burst

    voice = np.zeros(n)
    onsets = []
    if not voice_silent:
        if planted:
            # beat- and phrase-scale variation keep the swell out of the fastest EMD modes
            jitter = rng.normal(0.0, density_jitter, n_beats)
            span = max_notes - 1
            wander = _smooth_walk(rng, n_beats, mid_sigma, mid_notes)
            drive = span * (1 - level01) + wander + jitter
            per_beat = np.clip(1 + np.round(drive), 1, max_notes).astype(int)
        else:
            per_beat = rng.integers(1, max_notes + 1, size=n_beats)
        vlevel_db = -6.0 + _smooth_walk(rng, n_beats, fast_sigma, 4.0)
        # melody: independent scale degrees, never repeating a pitch back to back
        scale = np.array([0, 2, 4, 5, 7, 9, 11, 12, 14, 16, 17, 19])
        deg = -1
        f_track = np.zeros(n)
        a_track = np.zeros(n)
        for i in range(intro_beats, n_beats):
            k = int(per_beat[i])
            for j in range(k):
                t0 = beats[i] + 0.04 + j * ibi[i] / k
                t1 = beats[i] + 0.04 + (j + 1) * ibi[i] / k
                nxt_deg = int(rng.integers(scale.size - 1))
                deg = nxt_deg + 1 if nxt_deg >= deg >= 0 else nxt_deg
                onsets.append(t0)
                s0, s1 = int(round(t0 * sr)), min(n, int(round(t1 * sr)))
                f_track[s0:s1] = midi_to_hz(55 + scale[deg])
                a_track[s0:s1] = 10 ** (vlevel_db[i] / 20)
        on = a_track > 0
        # smooth amplitude edges only; pitch steps stay sharp for note splitting
        a_track = gaussian_filter1d(a_track, 0.005 * sr)
        phase_acc = 2 * np.pi * np.cumsum(np.where(on, f_track, 0.0)) / sr
        harm = sum(np.sin(h * phase_acc) / h**1.5 for h in range(1, 9))
        voice = 0.4 * a_track * harm * on

    guitar += noise * rng.standard_normal(n)
    voice += noise * rng.standard_normal(n) if not voice_silent else 0.0
    peak = max(np.abs(guitar).max(), 1e-12)
    guitar *= 0.9 / peak
    if not voice_silent:
        voice *= 0.9 / np.abs(voice).max()

    sections = [("intro", beats[0]), ("A", beats[intro_beats])]
    b_start = intro_beats + 4 * ((n_beats - intro_beats) // 8)
    if b_start < n_beats:
        sections.append(("B", beats[b_start]))
    phrases = [(f"p{k + 1}", beats[i]) for k, i in enumerate(range(0, n_beats, 8))]
    chord_rows = [(beats[4 * b], frozenset((r + s) % 12 for s in QUALITY_STEPS[q]))
                  for b, (r, q) in enumerate(chords)]
    ann = AnnotationSet(
        beats=[(float(t), i // 4 + 1) for i, t in enumerate(beats)],
        sections=sections,
        phrases=phrases,
        chords=chord_rows,
    )
    truth = {
        "level_db": level_db.tolist(),
        "strums_per_beat": strum_counts.tolist(),
        "chords": [f"{PC_NAMES[r]}:{q}" for r, q in chords],
        "planted": bool(planted),
        "seed": int(seed),
    }
    return SynthPiece(piece_id, AudioBuffer(voice, sr), AudioBuffer(guitar, sr), ann,
                      np.array(strums), np.array(onsets), chord_per_beat, truth)


def write_piece(folder, piece: SynthPiece) -> dict:
    """Write stems, annotation CSVs and ground truth; return the manifest entry."""
    folder = Path(folder)
    folder.mkdir(parents=True, exist_ok=True)
    write_audio(folder / "voice.wav", piece.voice)
    write_audio(folder / "guitar.wav", piece.guitar)
    write_annotations(folder / "annotations", piece.annotations)
    truth = dict(piece.truth, strum_times=piece.strum_times.tolist(),
                 note_onsets=piece.note_onsets.tolist())
    (folder / "truth.json").write_text(json.dumps(truth, indent=1, sort_keys=True) + "\n")
    return {"id": piece.piece_id, "voice": f"{folder.name}/voice.wav",
            "guitar": f"{folder.name}/guitar.wav", "annotations": f"{folder.name}/annotations"}


def synth_corpus(out, collaborations=None, seed=0, n_beats=128, sr=22050, **kw) -> Path:
    """Write a corpus of synthetic pieces and its ``manifest.json``.

    ``collaborations`` maps a label to its piece count (two collaborations
    of two pieces by default).
    """
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    collaborations = collaborations or {"duo1": 2, "duo2": 2}
    pieces = []
    k = 0
    for label, count in collaborations.items():
        for j in range(count):
            pid = f"{label}_{j + 1}"
            piece = synth_piece(pid, seed=seed * 1000 + k, n_beats=n_beats, sr=sr, **kw)
            entry = write_piece(out / pid, piece)
            entry["collaboration"] = label
            pieces.append(entry)
            k += 1
    manifest = out / "manifest.json"
    manifest.write_text(json.dumps({"pieces": pieces}, indent=1) + "\n")
    return manifest
