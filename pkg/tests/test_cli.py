import json
import shutil

import numpy as np
import pytest

from duo.cli import EXIT_INPUT, EXIT_NUMERICAL, EXIT_OK, EXIT_PARTIAL, build_parser, main
from duo.io import read_descriptors, read_table
from duo.synth import synth_piece, write_piece


def _cfg(tmp_path, data):
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps(data))
    return str(p)


def test_parser_rejects_bad_seed_and_missing_pair_mode():
    with pytest.raises(SystemExit):
        build_parser().parse_args(["extract", "m.json", "--seed", "-1"])
    with pytest.raises(SystemExit):
        build_parser().parse_args(["extract", "m.json", "--seed", str(2**64)])
    with pytest.raises(SystemExit):
        build_parser().parse_args(["residuals", "out"])


def test_input_errors_exit_one(tmp_path, capsys):
    assert main(["extract", str(tmp_path / "missing.json"), "--out", str(tmp_path / "o")]) == EXIT_INPUT
    bad = tmp_path / "m.json"
    bad.write_text('{"pieces": [{"id": "x"}]}')
    assert main(["extract", str(bad), "--out", str(tmp_path / "o")]) == EXIT_INPUT
    cfg = _cfg(tmp_path, {"stats": {"bogus": 1}})
    assert main(["correlate", str(tmp_path), "--config", cfg]) == EXIT_INPUT
    assert "bogus" in capsys.readouterr().err


def test_outputs_carry_config_and_seed(small_corpus):
    _, out = small_corpus
    for name in ("descriptors.csv", "segments.csv", "chroma.csv", "tiv.csv", "notes.csv"):
        _, _, echo = read_table(out / "duo1_1" / name)
        assert echo == {"config": "f13f175ec440abed", "seed": "0"}


def test_correlate_and_residuals(small_corpus, tmp_path, capsys):
    _, out = small_corpus
    assert main(["correlate", str(out), "--out", str(tmp_path / "c")]) == EXIT_OK
    report = json.loads((tmp_path / "c" / "correlations.json").read_text())
    assert set(report["pieces"]) == {"duo1_1", "duo2_1"}
    names = {(r["a"], r["b"]) for r in report["corpus"]["retained"]}
    assert ("guitar_loudness", "voice_density") in names
    assert (tmp_path / "c" / "duo1_1" / "emd.csv").exists()
    capsys.readouterr()
    assert main(["residuals", str(out), "--retained", "--out", str(tmp_path / "r")]) == EXIT_OK
    assert (tmp_path / "r" / "outliers.json").exists()
    assert main(["residuals", str(out), "--pair", "tempo", "--out", str(tmp_path / "r")]) == EXIT_INPUT
    assert main(["residuals", str(out), "--pair", "tempo,nope", "--out", str(tmp_path / "r")]) == EXIT_INPUT


def test_partial_failure_exits_three(tmp_path):
    root = tmp_path / "corpus"
    entries = [write_piece(root / f"p{k}", synth_piece(f"p{k}", seed=k, n_beats=16, intro_beats=2))
               for k in range(2)]
    (root / "p1" / "guitar.wav").write_bytes(b"RIFF not really a wav")
    (root / "manifest.json").write_text(json.dumps({"pieces": entries}))
    out = tmp_path / "out"
    assert main(["extract", str(root / "manifest.json"), "--out", str(out)]) == EXIT_PARTIAL
    assert (out / "p0" / "descriptors.csv").exists() and not (out / "p1" / "descriptors.csv").exists()
    shutil.copy(root / "p0" / "guitar.wav", root / "p1" / "guitar.wav")
    (root / "p0" / "guitar.wav").write_bytes(b"")
    entries = entries[:1]
    (root / "manifest.json").write_text(json.dumps({"pieces": entries}))
    assert main(["extract", str(root / "manifest.json"), "--out", str(out)]) == EXIT_INPUT


def test_silent_voice_masks_voice_descriptors(tmp_path):
    root = tmp_path / "corpus"
    entry = write_piece(root / "q", synth_piece("q", seed=9, n_beats=16, intro_beats=2, voice_silent=True))
    (root / "manifest.json").write_text(json.dumps({"pieces": [entry]}))
    assert main(["extract", str(root / "manifest.json"), "--out", str(tmp_path / "o")]) == EXIT_OK
    _, table = read_descriptors(tmp_path / "o" / "q" / "descriptors.csv")
    for name in ("voice_density", "voice_loudness", "melodic_contour"):
        assert not table[name][1].any()
    assert table["guitar_loudness"][1].all()


def test_external_notes_replace_transcription(tmp_path):
    root = tmp_path / "corpus"
    entry = write_piece(root / "q", synth_piece("q", seed=9, n_beats=16, intro_beats=2))
    (root / "manifest.json").write_text(json.dumps({"pieces": [entry]}))
    notes = tmp_path / "notes.csv"
    notes.write_text("onset_s,offset_s,f0_hz\n4.1,4.2,220\n4.22,4.3,220\n4.32,4.38,330\n")
    out = tmp_path / "o"
    args = ["extract", str(root / "manifest.json"), "--out", str(out)]
    assert main(args + ["--notes", f"q={notes}"]) == EXIT_OK
    _, table = read_descriptors(out / "q" / "descriptors.csv")
    vd = table["voice_density"][0]
    assert np.nansum(vd) == 3
    assert main(args + ["--notes", f"zz={notes}"]) == EXIT_INPUT


def test_ablate_single_preset_trace(small_corpus, tmp_path, capsys):
    manifest, _ = small_corpus
    cfg = _cfg(tmp_path, {"ablation": {"n_init": 2, "n_iter": 3}})
    out = tmp_path / "a"
    assert main(["ablate", str(manifest), "--preset", "A", "--config", cfg, "--seed", "5", "--out", str(out)]) == 0
    report = json.loads((out / "ablation.json").read_text())
    assert report["components"] == ["WHI", "DEC"] and list(report["presets"]) == ["A"]
    assert report["seed"] == 5 and report["winner"] == "A"
    header, rows, echo = read_table(out / "ablation_trace.csv")
    assert len(rows) == 5 and echo["seed"] == "5"
    assert "winner A" in capsys.readouterr().out


def test_all_numerical_failures_exit_two(tmp_path, monkeypatch):
    from duo import pipeline

    def boom(*a, **k):
        raise np.linalg.LinAlgError("singular")

    root = tmp_path / "corpus"
    entry = write_piece(root / "q", synth_piece("q", seed=9, n_beats=12, intro_beats=2))
    (root / "manifest.json").write_text(json.dumps({"pieces": [entry]}))
    monkeypatch.setattr(pipeline, "analyze_piece", boom)
    assert main(["extract", str(root / "manifest.json"), "--out", str(tmp_path / "o")]) == EXIT_NUMERICAL
