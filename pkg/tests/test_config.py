import json

import pytest

from duo.config import ConfigError, RunConfig, config_from_dict, load_config


def test_defaults_digest_is_stable():
    assert RunConfig().digest() == "f13f175ec440abed"
    assert load_config(None) == RunConfig()
    assert RunConfig().with_seed(3).digest() != RunConfig().digest()


def test_partial_file_merges_over_defaults(tmp_path):
    p = tmp_path / "c.json"
    p.write_text(json.dumps({"stats": {"retain_threshold": 0.5}, "seed": 4}))
    c = load_config(p)
    assert c.stats.retain_threshold == 0.5 and c.seed == 4
    assert c.emd == RunConfig().emd
    assert config_from_dict(c.to_dict()) == c


@pytest.mark.parametrize("bad", [
    {"stats": {"nope": 1}},
    {"mystery": {}},
    {"stats": {"min_support": 2.5}},
    {"stats": {"min_support": True}},
    {"stats": {"retain_threshold": 1.5}},
    {"seed": -1},
    {"emd": {"start_index": 0}},
    {"ablation": {"presets": ["Q"]}},
    {"ablation": {"ranges": {"s": [1.0, 0.5]}}},
    {"dictionary": {"tiv_weights": [1, 2, 3]}},
    {"stats": []},
])
def test_invalid_configs_rejected(bad):
    with pytest.raises(ConfigError):
        config_from_dict(bad)


def test_unreadable_file(tmp_path):
    p = tmp_path / "c.json"
    p.write_text("{not json")
    with pytest.raises(ConfigError):
        load_config(p)
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.json")


def test_with_presets():
    c = RunConfig().with_presets(["A"])
    assert c.ablation.presets == ("A",)
