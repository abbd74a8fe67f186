from pathlib import Path

import pytest
import yaml

from attnloco.config import RunConfig, config_from_dict, dump_config, load_config
from attnloco.errors import ConfigurationError

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


@pytest.mark.parametrize(
    "data, match",
    [
        ({"colour": "red"}, "colour: unknown key"),
        ({"ppo": {"clipp": 0.2}}, "ppo.clipp: unknown key"),
        ({"seed": "one"}, "seed: expected an integer"),
        ({"seed": True}, "seed: expected an integer"),
        ({"ppo": {"clip": 2.0}}, "ppo.clip"),
        ({"env": {"commands": {"lin_x": [0.1]}}}, "env.commands.lin_x: expected 2 entries"),
        ({"model": {"dim": 18, "heads": 4}}, "model"),
        ({"robot": "hexapod"}, "robot"),
        ({"stages": {"stage1": {"families": ["lava"]}}}, "lava"),
        ({"env": [1, 2]}, "env: expected a mapping"),
        ({"model": {"hidden": [64, 0]}}, "model.hidden"),
        ({"env": {"num_envs": 5}, "ppo": {"num_minibatches": 7}}, "not divisible"),
    ],
)
def test_invalid_configs_name_the_field(data, match):
    with pytest.raises(ConfigurationError, match=match):
        config_from_dict(data)


def test_defaults_round_trip_through_yaml():
    cfg = RunConfig()
    again = config_from_dict(yaml.safe_load(dump_config(cfg)))
    assert again.to_dict() == cfg.to_dict()


def test_missing_and_malformed_files(tmp_path):
    with pytest.raises(ConfigurationError, match="not found"):
        load_config(tmp_path / "none.yaml")
    (tmp_path / "bad.yaml").write_text("a: [1,\n")
    with pytest.raises(ConfigurationError, match="YAML"):
        load_config(tmp_path / "bad.yaml")
    (tmp_path / "list.yaml").write_text("- 1\n- 2\n")
    with pytest.raises(ConfigurationError, match="mapping"):
        load_config(tmp_path / "list.yaml")


@pytest.mark.parametrize("name", sorted(p.name for p in CONFIGS.glob("*.yaml")))
def test_shipped_configs_load(name):
    cfg = load_config(CONFIGS / name)
    assert cfg.encoder_config().dim % cfg.encoder_config().heads == 0


def test_reference_config_matches_published_sizes():
    cfg = load_config(CONFIGS / "anymal_reference.yaml")
    enc = cfg.encoder_config()
    assert (enc.map_length, enc.map_width, enc.dim, enc.heads) == (26, 16, 64, 16)
    assert cfg.env.num_envs == 4096
    assert cfg.ppo.minibatch_size(cfg.env.num_envs) == 8 * 4096


def test_terrain_ramp_override_is_validated():
    cfg = config_from_dict({"terrain": {"stairs": {"step_height": [0.05, 0.15]}}})
    assert cfg.terrain["stairs"]["step_height"] == [0.05, 0.15]
    with pytest.raises(ConfigurationError, match="terrain"):
        config_from_dict({"terrain": {"stairs": {"nonsense": [0, 1]}}})
