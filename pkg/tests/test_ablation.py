import numpy as np
import pytest

from duo.ablation import (
    COMPONENTS,
    PRESETS,
    AblationConfig,
    AblationError,
    AblationPiece,
    beat_cosine,
    run_ablation,
    toggles_for,
)
from duo.ingest import ChromaSeries, build_beat_grid, chords_to_binary_chroma
from duo.spectral import cqt
from duo.synth import synth_piece


@pytest.fixture(scope="module")
def pieces():
    out = []
    for seed in (21, 22):
        sp = synth_piece(f"p{seed}", seed=seed, n_beats=16, intro_beats=2)
        g = build_beat_grid(sp.annotations)
        out.append(AblationPiece(sp.piece_id, cqt(sp.guitar), g, chords_to_binary_chroma(sp.annotations, g)))
    return out


def test_toggles():
    assert toggles_for(()) == {a: False for a in COMPONENTS.values()}
    t = toggles_for(PRESETS["A"])
    assert t["whiten"] and t["decay"] and not t["odd"]
    with pytest.raises(AblationError):
        toggles_for(["XYZ"])


def test_beat_cosine_masks_and_bounds():
    E = np.zeros((12, 3))
    R = np.zeros((12, 3))
    E[0, :] = 1.0
    R[0, 0] = R[0, 1] = R[4, 1] = 1.0
    R[7, 2] = 1.0
    valid = np.array([True, True, False])
    s = beat_cosine(ChromaSeries(E, valid), ChromaSeries(R, np.ones(3, bool)))
    assert s == pytest.approx((1.0 + 1 / np.sqrt(2)) / 2)
    with pytest.raises(AblationError):
        beat_cosine(ChromaSeries(E, np.zeros(3, bool)), ChromaSeries(R, np.ones(3, bool)))
    with pytest.raises(AblationError):
        beat_cosine(ChromaSeries(E[:, :2], valid[:2]), ChromaSeries(R, valid))


def test_config_validation():
    with pytest.raises(AblationError):
        AblationConfig(presets=("Z",))
    with pytest.raises(AblationError):
        AblationConfig(ranges={"s": (1.0, 0.5)})
    with pytest.raises(AblationError):
        AblationConfig(ranges={"nope": (0.0, 1.0)})


def test_table_without_optimization(pieces):
    res = run_ablation(pieces, AblationConfig(optimize=False))
    assert set(res.per_piece) == {"p21", "p22"}
    assert [row["component"] for row in res.component_table] == list(COMPONENTS)
    for row in res.component_table:
        assert row["contribution"] == pytest.approx(row["on"] - row["off"])
        assert 0 <= row["alone"] <= 1
    assert res.corpus_mean > res.identity_score
    assert res.winner in PRESETS and res.winning_params == {}
    assert all("trace" not in e for e in res.presets.values())


def test_preset_optimization_searches_owned_params(pieces):
    res = run_ablation(pieces, AblationConfig(presets=("A",), n_init=2, n_iter=2))
    entry = res.presets["A"]
    assert len(entry["trace"]) == 4
    assert set(entry["best_params"]) == {"s", "detune_cents"}
    assert entry["best_score"] >= max(t["score"] for t in entry["trace"]) - 1e-15
    assert res.winner == "A"
