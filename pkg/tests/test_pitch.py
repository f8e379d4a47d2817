import numpy as np
import pytest

from duo.ingest import AudioBuffer
from duo.pitch import NoteEvents, read_notes, transcribe_voice, viterbi_voicing, yin_frames


def test_note_validation():
    with pytest.raises(ValueError):
        NoteEvents([(1.0, 1.0, 200.0)])
    with pytest.raises(ValueError):
        NoteEvents([(0.0, 1.0, 0.0)])
    with pytest.raises(ValueError):
        NoteEvents([(0.0, 1.0, 200.0), (0.5, 2.0, 200.0)])
    assert NoteEvents([(0, 1, 100), (1, 2, 100)]).onsets.tolist() == [0.0, 1.0]


def test_read_notes_skips_header_and_comments(tmp_path):
    p = tmp_path / "n.csv"
    p.write_text("# made by hand\nonset_s,offset_s,f0_hz\n0.1, 0.4, 220\n0.5,0.9,330.5\n")
    n = read_notes(p)
    assert n.notes == ((0.1, 0.4, 220.0), (0.5, 0.9, 330.5))


def test_yin_finds_period_of_sine():
    sr = 16000
    x = np.sin(2 * np.pi * 200 * np.arange(sr) / sr)
    times, cmnd, (tmin, tmax) = yin_frames(x, sr)
    row = cmnd[len(times) // 2]
    tau = tmin + int(np.argmin(row[tmin:tmax]))
    assert abs(sr / tau - 200) < 3


def test_viterbi_removes_isolated_flips():
    p = np.full(40, 0.9)
    p[20] = 0.2
    p[:5] = 0.02
    v = viterbi_voicing(p)
    assert not v[:5].any() and v[5:].all()


def test_melody_transcription():
    sr = 16000
    f0s = [220.0, 330.0, 262.0]
    seg = []
    for f in f0s:
        t = np.arange(int(0.4 * sr)) / sr
        seg += [0.5 * np.sin(2 * np.pi * f * t) * np.hanning(t.size) ** 0.1, np.zeros(int(0.2 * sr))]
    notes = transcribe_voice(AudioBuffer(np.concatenate(seg), sr))
    assert len(notes) == 3
    for (on, off, f), want, k in zip(notes.notes, f0s, range(3)):
        assert abs(12 * np.log2(f / want)) < 0.3
        assert abs(on - 0.6 * k) < 0.08 and 0.25 < off - on < 0.5


def test_silence_yields_no_notes():
    assert len(transcribe_voice(AudioBuffer(np.zeros(16000), 16000))) == 0
    assert len(transcribe_voice(AudioBuffer(np.zeros(100), 16000))) == 0
