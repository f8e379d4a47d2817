import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from duo.descriptors import (
    SILENCE_DB,
    DescriptorSeries,
    baseline_tempo,
    beat_median,
    contour,
    count_per_beat,
    first_interaction_section,
    loudness_db,
    tempo_curve,
    tempo_deviation,
    voice_rhythmic_density,
)
from duo.ingest import AudioBuffer, BeatGrid
from duo.pitch import NoteEvents
from duo.spectral import CQTMatrix, cqt_frequencies


def _grid(n, step=0.5, sections=None):
    si = np.zeros(n, int) if sections is None else np.asarray(sections)
    labels = tuple(f"s{k}" for k in range(si.max() + 1))
    return BeatGrid(step * np.arange(n), si, np.zeros(n, int), labels)


def test_series_validation():
    with pytest.raises(ValueError):
        DescriptorSeries("x", np.ones(3), "furlongs", np.ones(3, bool))
    with pytest.raises(ValueError):
        DescriptorSeries("x", np.array([1.0, np.nan]), "dB", np.ones(2, bool))
    s = DescriptorSeries("x", np.array([1.0, np.nan]), "dB", np.array([True, False]))
    assert np.isnan(s.as_nan()[1]) and s.masked([False, True]).mask.tolist() == [False, False]


def test_loudness_of_silence_and_steps():
    sr = 8000
    g = _grid(4, 1.0)
    x = np.concatenate([np.zeros(sr), 0.01 * np.ones(sr), np.ones(sr), np.zeros(sr)])
    lo = loudness_db(AudioBuffer(x, sr), g, frame_len=256, hop=128)
    assert lo.values[2] == pytest.approx(0.0, abs=1e-9)
    assert lo.values[1] == pytest.approx(-40.0, abs=1e-6)
    assert lo.values[0] == SILENCE_DB and lo.values[3] == SILENCE_DB
    silent = loudness_db(AudioBuffer(np.zeros(4 * sr), sr), g, 256, 128)
    assert np.all(silent.values == SILENCE_DB)


def test_beat_median_ignores_frames_outside():
    g = _grid(3, 1.0)
    v = beat_median([1, 3, 2, 7, 100], [0.1, 0.5, 0.9, 1.5, 9.0], g)
    assert v[0] == 2.0 and v[1] == 7.0 and np.isnan(v[2])


@given(st.lists(st.floats(0.2, 2.0), min_size=2, max_size=50))
def test_tempo_is_inverse_interval(ibis):
    t = np.concatenate([[0.0], np.cumsum(ibis)])
    g = BeatGrid(t, np.zeros(t.size, int), np.zeros(t.size, int))
    tc = tempo_curve(g)
    assert np.allclose(tc.values[:-1], 60.0 / np.array(ibis))
    assert tc.values[-1] == tc.values[-2]


def test_baseline_uses_first_joint_section():
    g = _grid(12, 0.5, [0] * 4 + [1] * 4 + [2] * 4)
    voice = np.array([0] * 4 + [1] * 8, bool)
    guitar = np.ones(12, bool)
    assert first_interaction_section(g, voice, guitar).tolist() == [4, 5, 6, 7]
    t = DescriptorSeries("tempo", np.array([100.0] * 4 + [90.0] * 4 + [80.0] * 4), "BPM", np.ones(12, bool))
    assert baseline_tempo(t, g, voice, guitar) == (90.0, False)
    assert baseline_tempo(t, g, np.zeros(12, bool), guitar) == (90.0, True)
    dev = tempo_deviation(t, 90.0)
    assert dev.values[0] == pytest.approx(1 / 9) and dev.unit == "dimensionless"


@given(st.lists(st.floats(0, 9.99), max_size=60))
def test_counts_sum_to_events_inside(times):
    g = _grid(20, 0.5)
    c = count_per_beat(times, g)
    assert c.sum() == len(times)
    assert np.array_equal(c, np.histogram(times, bins=np.append(g.beat_times, 10.0))[0])


def test_voice_density_from_notes():
    g = _grid(4, 1.0)
    notes = NoteEvents([(0.1, 0.4, 220.0), (0.5, 0.9, 220.0), (2.0, 2.5, 330.0)])
    d = voice_rhythmic_density(notes, g)
    assert d.values.tolist() == [2, 0, 1, 0]


def test_contour_is_masked_centroid():
    freqs = cqt_frequencies(55.0, 12, 24)
    m = np.zeros((24, 4))
    m[6, :2] = 1.0
    m[[4, 12], 2:] = 1.0
    c = CQTMatrix(m, np.array([0.1, 0.6, 1.1, 1.6]), freqs)
    g = _grid(4, 0.5)
    s = contour(c, g, np.array([True, True, True, False]), name="melodic_contour")
    assert s.values[:3].tolist() == [6.0, 6.0, 8.0]
    assert s.mask.tolist() == [True, True, True, False]
