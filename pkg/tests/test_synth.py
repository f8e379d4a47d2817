import json

import numpy as np

from duo.ingest import build_beat_grid, load_audio, parse_annotations
from duo.synth import coupled_by_construction, synth_corpus, synth_piece


def test_deterministic_per_seed():
    a = synth_piece(seed=4, n_beats=16)
    b = synth_piece(seed=4, n_beats=16)
    c = synth_piece(seed=5, n_beats=16)
    assert np.array_equal(a.voice.samples, b.voice.samples)
    assert np.array_equal(a.guitar.samples, b.guitar.samples)
    assert not np.array_equal(a.guitar.samples, c.guitar.samples)


def test_annotations_and_levels():
    sp = synth_piece(seed=1, n_beats=32, intro_beats=8)
    g = build_beat_grid(sp.annotations)
    assert len(g) == 32 and g.section_of(0) == "intro"
    assert len(sp.annotations.chords) == 8
    assert np.abs(sp.guitar.samples).max() <= 0.9 + 1e-12
    assert sp.note_onsets.min() > g.beat_times[8]
    assert len(sp.truth["level_db"]) == 32 and max(sp.truth["level_db"]) <= 0.0


def test_silent_voice():
    sp = synth_piece(seed=2, n_beats=16, voice_silent=True)
    assert not np.any(sp.voice.samples) and sp.note_onsets.size == 0


def test_causal_graph():
    assert coupled_by_construction("guitar_loudness", "voice_density")
    assert not coupled_by_construction("guitar_loudness", "voice_density", planted=False)
    assert coupled_by_construction("tonal_dissonance", "harmonic_contour")
    assert not coupled_by_construction("tempo", "voice_loudness")


def test_corpus_files(tmp_path):
    man = synth_corpus(tmp_path, {"x": 1}, seed=0, n_beats=12, intro_beats=2)
    entry = json.loads(man.read_text())["pieces"][0]
    assert entry["collaboration"] == "x" and entry["id"] == "x_1"
    assert load_audio(tmp_path / entry["voice"]).sample_rate == 22050
    assert len(parse_annotations(tmp_path / entry["annotations"]).beats) == 12
    assert (tmp_path / "x_1" / "truth.json").exists()
