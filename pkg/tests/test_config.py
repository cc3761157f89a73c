import dataclasses
import json
import os

import pytest

from doorpass_lab.core.config import (ExperimentConfig, RandomizationConfig, apply_overrides,
                                      config_from_dict, config_hash, config_to_dict, dump_config,
                                      freeze_randomization, load_config)
from doorpass_lab.core.exceptions import ConfigError, InvalidRangeError

CONFIG_DIR = os.path.join(os.path.dirname(__file__), os.pardir, "configs")


def test_dump_and_load_round_trip(tmp_path):
    cfg = apply_overrides(ExperimentConfig(), ["seed=7", "ppo.hidden_sizes=[32, 16]"])
    path = tmp_path / "cfg.json"
    path.write_text(dump_config(cfg), encoding='utf-8')
    assert load_config(str(path)) == cfg


def test_partial_file_keeps_defaults():
    cfg = config_from_dict({"env": {"num_envs": 8}})
    assert cfg.env.num_envs == 8
    assert cfg.ppo == ExperimentConfig().ppo


@pytest.mark.parametrize("data", [
    {"unknown": 1},
    {"env": {"num_env": 8}},
    {"env": {"num_envs": "many"}},
    {"distill": {"no_estimation_loss": 1}},
    {"env": {"num_envs": 0}},
])
def test_invalid_documents_rejected(data):
    with pytest.raises(ConfigError):
        config_from_dict(data)


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        load_config(str(tmp_path / "absent.json"))


class TestOverrides:
    def test_values_are_parsed(self):
        cfg = apply_overrides(ExperimentConfig(), ["env.num_envs=4", "ppo.observation_set=student",
                                                   "distill.no_estimation_loss=true"])
        assert cfg.env.num_envs == 4
        assert cfg.ppo.observation_set == "student"
        assert cfg.distill.no_estimation_loss is True

    def test_unknown_key(self):
        with pytest.raises(ConfigError):
            apply_overrides(ExperimentConfig(), ["env.num_env=4"])

    def test_missing_equals_sign(self):
        with pytest.raises(ConfigError):
            apply_overrides(ExperimentConfig(), ["env.num_envs"])

    def test_theta_limits_revalidated(self):
        with pytest.raises(ConfigError):
            apply_overrides(ExperimentConfig(), ["door.theta_max_deg=50"])


class TestFreeze:
    def test_midpoints_and_zero_probabilities(self):
        frozen = freeze_randomization(RandomizationConfig(), ["mass", "tau_hinge", "door_types"])
        assert frozen.mass == (45.0, 45.0)
        assert frozen.tau_hinge == (15.0, 15.0)
        assert frozen.tau_hinge_zero_prob == 0.0
        assert frozen.door_types == (0,)
        assert frozen.d_w == RandomizationConfig().d_w

    def test_door_types_keep_first_listed(self):
        ranges = RandomizationConfig(door_types=(3, 1))
        assert freeze_randomization(ranges, ["door_types"]).door_types == (3,)

    def test_unknown_name(self):
        with pytest.raises(ConfigError):
            freeze_randomization(RandomizationConfig(), ["colour"])


def test_inverted_range_rejected():
    data = config_to_dict(ExperimentConfig())
    data["randomization"]["mass"] = [75.0, 15.0]
    with pytest.raises(InvalidRangeError):
        config_from_dict(data)


class TestConfigHash:
    def test_output_location_is_ignored(self):
        cfg = ExperimentConfig()
        moved = dataclasses.replace(cfg, out_dir="/elsewhere", run_name="other")
        assert config_hash(cfg) == config_hash(moved)

    def test_content_changes_hash(self):
        cfg = ExperimentConfig()
        assert config_hash(cfg) != config_hash(dataclasses.replace(cfg, seed=1))

    def test_git_blob_format(self):
        digest = config_hash(ExperimentConfig())
        assert len(digest) == 40
        assert all(c in "0123456789abcdef" for c in digest)


def test_shipped_configs_load():
    for name in ("default.json", "smoke_push_right.json"):
        cfg = load_config(os.path.join(CONFIG_DIR, name))
        assert json.loads(dump_config(cfg))["seed"] == cfg.seed
