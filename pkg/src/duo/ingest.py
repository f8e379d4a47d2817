"""Stem audio loading and the four annotation layers (beats, sections, phrases, chords)."""

from __future__ import annotations

import csv
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.io import wavfile

PRE_LABEL = "pre"

NOTE_NAMES = {"C": 0, "D": 2, "E": 4, "F": 5, "G": 7, "A": 9, "B": 11}
QUALITIES = {
    "maj": (0, 4, 7),
    "min": (0, 3, 7),
    "dom7": (0, 4, 7, 10),
    "dim": (0, 3, 6),
    "aug": (0, 4, 8),
}
PC_NAMES = ("C", "C#", "D", "Eb", "E", "F", "F#", "G", "Ab", "A", "Bb", "B")


class AnnotationError(ValueError):
    """Raised when an annotation layer violates its invariants."""


class AudioError(ValueError):
    """Raised when a stem cannot be read as PCM audio."""


@dataclass(frozen=True)
class AudioBuffer:
    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        x = np.asarray(self.samples, dtype=float)
        if x.ndim != 1 or x.size == 0:
            raise AudioError("audio must be a non-empty mono sequence")
        if not np.all(np.isfinite(x)):
            raise AudioError("audio contains non-finite samples")
        if int(self.sample_rate) <= 0:
            raise AudioError("sample rate must be positive")
        x.setflags(write=False)
        object.__setattr__(self, "samples", x)
        object.__setattr__(self, "sample_rate", int(self.sample_rate))

    @property
    def duration(self) -> float:
        return self.samples.size / self.sample_rate

    def scaled(self, gain: float) -> "AudioBuffer":
        return AudioBuffer(self.samples * gain, self.sample_rate)


@dataclass(frozen=True)
class AnnotationSet:
    """Expert annotation layers of one piece.

    ``beats`` holds ``(time_s, bar_index)`` rows, ``sections`` and
    ``phrases`` hold ``(label, start_s)`` and ``chords`` holds
    ``(start_s, pitch_class_frozenset)``.
    """

    beats: tuple[tuple[float, int], ...]
    sections: tuple[tuple[str, float], ...] = ()
    phrases: tuple[tuple[str, float], ...] = ()
    chords: tuple[tuple[float, frozenset], ...] = ()

    def __post_init__(self):
        beats = tuple((float(t), int(b)) for t, b in self.beats)
        if not beats:
            raise AnnotationError("beat layer is empty")
        times = np.array([t for t, _ in beats])
        if np.any(np.diff(times) <= 0):
            bad = int(np.flatnonzero(np.diff(times) <= 0)[0]) + 1
            raise AnnotationError(f"beat times not strictly increasing at row {bad}")
        lo, hi = times[0], times[-1]

        def _check_starts(rows, layer):
            for row in rows:
                t = row[1] if layer != "chords" else row[0]
                if not lo <= t <= hi:
                    raise AnnotationError(f"{layer} start {t} outside beat range [{lo}, {hi}]")

        sections = tuple((str(lab), float(t)) for lab, t in self.sections)
        phrases = tuple((str(lab), float(t)) for lab, t in self.phrases)
        chords = tuple((float(t), frozenset(int(p) for p in pcs)) for t, pcs in self.chords)
        for name, rows in (("sections", sections), ("phrases", phrases)):
            _check_starts(rows, name)
            starts = [t for _, t in rows]
            if starts != sorted(starts):
                raise AnnotationError(f"{name} are not in time order")
        _check_starts(chords, "chords")
        if [t for t, _ in chords] != sorted(t for t, _ in chords):
            raise AnnotationError("chords are not in time order")
        for t, pcs in chords:
            if not pcs or not pcs <= set(range(12)):
                raise AnnotationError(f"chord at {t} has an invalid pitch-class set")
        object.__setattr__(self, "beats", beats)
        object.__setattr__(self, "sections", sections)
        object.__setattr__(self, "phrases", phrases)
        object.__setattr__(self, "chords", chords)

    @property
    def beat_times(self) -> np.ndarray:
        return np.array([t for t, _ in self.beats])


@dataclass(frozen=True)
class BeatGrid:
    """Beat times plus the section/phrase segment each beat falls in.

    Segment indices point into ``section_labels``/``phrase_labels``. When
    beats precede the first annotated start, a synthetic ``"pre"`` segment is
    prepended and the matching ``*_pre`` flag is set.
    """

    beat_times: np.ndarray
    section_index: np.ndarray
    phrase_index: np.ndarray
    section_labels: tuple[str, ...] = (PRE_LABEL,)
    phrase_labels: tuple[str, ...] = (PRE_LABEL,)
    section_pre: bool = False
    phrase_pre: bool = False
    _edges: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        t = np.asarray(self.beat_times, dtype=float)
        if t.ndim != 1 or t.size < 2:
            raise AnnotationError("a beat grid needs at least two beats")
        if np.any(np.diff(t) <= 0):
            raise AnnotationError("beat times must be strictly increasing")
        si = np.asarray(self.section_index, dtype=int)
        pi = np.asarray(self.phrase_index, dtype=int)
        if si.shape != t.shape or pi.shape != t.shape:
            raise AnnotationError("segment indices must have one entry per beat")
        edges = np.append(t, t[-1] + (t[-1] - t[-2]))
        for arr in (t, si, pi, edges):
            arr.setflags(write=False)
        object.__setattr__(self, "beat_times", t)
        object.__setattr__(self, "section_index", si)
        object.__setattr__(self, "phrase_index", pi)
        object.__setattr__(self, "_edges", edges)

    def __len__(self) -> int:
        return self.beat_times.size

    @property
    def edges(self) -> np.ndarray:
        """Interval boundaries; the final beat reuses the previous inter-beat duration."""
        return self._edges

    def assign(self, times) -> np.ndarray:
        """Beat index of each time under left-closed intervals, -1 outside the span."""
        times = np.asarray(times, dtype=float)
        idx = np.searchsorted(self._edges, times, side="right") - 1
        idx[(idx < 0) | (idx >= len(self))] = -1
        return idx

    def section_of(self, beat: int) -> str:
        return self.section_labels[self.section_index[beat]]

    def phrase_of(self, beat: int) -> str:
        return self.phrase_labels[self.phrase_index[beat]]

    def section_beats(self):
        """Yield ``(label, beat indices)`` per section segment in time order."""
        for k, label in enumerate(self.section_labels):
            members = np.flatnonzero(self.section_index == k)
            if members.size:
                yield label, members


def load_audio(path) -> AudioBuffer:
    """Read a 16- or 24-bit PCM WAV file as mono samples in [-1, 1]."""
    path = Path(path)
    try:
        rate, data = wavfile.read(path)
    except (OSError, ValueError) as exc:
        raise AudioError(f"cannot read {path}: {exc}") from exc
    if data.dtype == np.int16:
        x = data.astype(float) / 32768.0
    elif data.dtype == np.int32:
        # scipy left-justifies 24-bit samples in int32
        x = data.astype(float) / 2147483648.0
    else:
        raise AudioError(f"{path}: unsupported sample encoding {data.dtype}")
    if x.ndim == 2:
        x = x.mean(axis=1)
    if x.size == 0:
        raise AudioError(f"{path}: empty audio")
    return AudioBuffer(x, rate)


def write_audio(path, audio: AudioBuffer) -> None:
    """Write a 16-bit PCM WAV file (clipping to full scale)."""
    pcm = np.clip(np.round(audio.samples * 32768.0), -32768, 32767).astype(np.int16)
    wavfile.write(Path(path), audio.sample_rate, pcm)


_SET_RE = re.compile(r"^\{\s*(\d+(?:\s*,\s*\d+)*)\s*\}$")
_ROOT_RE = re.compile(r"^([A-G])([#b]*)$")


def parse_chord(label: str) -> frozenset:
    """Pitch-class set of a chord label: ``{0,4,7}`` or ``ROOT:QUALITY``."""
    label = label.strip()
    m = _SET_RE.match(label)
    if m:
        pcs = frozenset(int(p) for p in m.group(1).split(","))
        if not pcs <= set(range(12)):
            raise AnnotationError(f"pitch class out of range in {label!r}")
        return pcs
    root, sep, quality = label.partition(":")
    rm = _ROOT_RE.match(root.strip())
    if not sep or rm is None or quality.strip() not in QUALITIES:
        raise AnnotationError(f"malformed chord label {label!r}")
    pc = NOTE_NAMES[rm.group(1)] + rm.group(2).count("#") - rm.group(2).count("b")
    return frozenset((pc + iv) % 12 for iv in QUALITIES[quality.strip()])


def format_chord(pcs) -> str:
    return "{" + ",".join(str(p) for p in sorted(pcs)) + "}"


def _read_rows(path: Path, header: tuple[str, ...]) -> list[list[str]]:
    with open(path, newline="") as fh:
        rows = [
            [c.strip() for c in row]
            for row in csv.reader(fh, skipinitialspace=True)
            if row and not row[0].lstrip().startswith("#")
        ]
    if rows and tuple(c.lower() for c in rows[0]) == header:
        rows = rows[1:]
    for i, row in enumerate(rows):
        if len(row) != len(header):
            raise AnnotationError(f"{path.name}: row {i + 1} has {len(row)} fields, expected {len(header)}")
    return rows


def _float(text: str, where: str) -> float:
    try:
        return float(text)
    except ValueError:
        raise AnnotationError(f"{where}: not a number: {text!r}") from None


def parse_annotations(path) -> AnnotationSet:
    """Load ``beats.csv`` plus the optional section, phrase and chord layers.

    ``path`` is the directory holding the per-layer CSV files (or the
    ``beats.csv`` file itself). Missing optional layers are empty.
    """
    path = Path(path)
    folder = path.parent if path.is_file() else path
    beats_file = folder / "beats.csv"
    if not beats_file.exists():
        raise AnnotationError(f"missing {beats_file}")
    beats = [
        (_float(t, "beats.csv"), int(_float(b, "beats.csv")))
        for t, b in _read_rows(beats_file, ("time_s", "bar_index"))
    ]
    layers = {}
    for name in ("sections", "phrases"):
        f = folder / f"{name}.csv"
        rows = _read_rows(f, ("time_s", "label")) if f.exists() else []
        layers[name] = [(lab, _float(t, f.name)) for t, lab in rows]
    f = folder / "chords.csv"
    rows = _read_rows(f, ("time_s", "chord")) if f.exists() else []
    chords = [(_float(t, f.name), parse_chord(c)) for t, c in rows]
    return AnnotationSet(beats, layers["sections"], layers["phrases"], chords)


def write_annotations(folder, a: AnnotationSet) -> None:
    """Serialize every layer as CSV; ``parse_annotations`` inverts this."""
    folder = Path(folder)
    folder.mkdir(parents=True, exist_ok=True)

    def _dump(name, header, rows):
        with open(folder / name, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            w.writerows(rows)

    _dump("beats.csv", ("time_s", "bar_index"), [(repr(t), b) for t, b in a.beats])
    _dump("sections.csv", ("time_s", "label"), [(repr(t), lab) for lab, t in a.sections])
    _dump("phrases.csv", ("time_s", "label"), [(repr(t), lab) for lab, t in a.phrases])
    _dump("chords.csv", ("time_s", "chord"), [(repr(t), format_chord(p)) for t, p in a.chords])


def _segment(beat_times, starts, labels):
    if not starts:
        return np.zeros(beat_times.size, dtype=int), (PRE_LABEL,), True
    # latest start <= beat time; a start exactly on a beat opens the new segment
    idx = np.searchsorted(np.asarray(starts), beat_times, side="right") - 1
    pre = bool(np.any(idx < 0))
    if pre:
        return idx + 1, (PRE_LABEL, *labels), True
    return idx, tuple(labels), False


def build_beat_grid(a: AnnotationSet) -> BeatGrid:
    t = a.beat_times
    si, slabels, spre = _segment(t, [s for _, s in a.sections], [lab for lab, _ in a.sections])
    pi, plabels, ppre = _segment(t, [s for _, s in a.phrases], [lab for lab, _ in a.phrases])
    return BeatGrid(t, si, pi, slabels, plabels, spre, ppre)


@dataclass(frozen=True)
class ChromaSeries:
    """Twelve pitch-class rows by beats, with a per-beat validity mask."""

    values: np.ndarray
    valid: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        ok = np.asarray(self.valid, dtype=bool)
        if v.ndim != 2 or v.shape[0] != 12 or ok.shape != (v.shape[1],):
            raise ValueError("chroma must be 12 x beats with one validity flag per beat")
        if np.any(v[:, ok] < 0) or not np.all(np.isfinite(v[:, ok])):
            raise ValueError("valid chroma columns must be finite and non-negative")
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "valid", ok)

    def __len__(self) -> int:
        return self.values.shape[1]


def chords_to_binary_chroma(a: AnnotationSet, g: BeatGrid) -> ChromaSeries:
    """Binary reference chroma of the chord active at each beat.

    Beats before the first chord annotation are marked invalid.
    """
    if not a.chords:
        raise AnnotationError("chord layer is empty")
    starts = np.array([t for t, _ in a.chords])
    idx = np.searchsorted(starts, g.beat_times, side="right") - 1
    out = np.zeros((12, len(g)))
    for beat, k in enumerate(idx):
        if k >= 0:
            out[sorted(a.chords[k][1]), beat] = 1.0
    return ChromaSeries(out, idx >= 0)
