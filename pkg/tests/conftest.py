import dataclasses

import pytest

from doorpass_lab.core.config import ExperimentConfig, apply_overrides


@pytest.fixture
def small_config(tmp_path) -> ExperimentConfig:
    """Маленькая конфигурация: несколько сред, короткие эпизоды, узкие сети"""
    cfg = apply_overrides(ExperimentConfig(), [
        "env.num_envs=3",
        "env.episode_steps=20",
        "ppo.rollout_steps=8",
        "ppo.total_steps=48",
        "ppo.epochs=2",
        "ppo.minibatches=2",
        "ppo.hidden_sizes=[16, 16]",
        "ppo.eval_every=1",
        "ppo.eval_envs=2",
        "ppo.checkpoint_every=1",
        "distill.window=5",
        "distill.total_steps=30",
        "distill.encoder_hidden=12",
        "distill.gru_hidden=10",
        "eval.num_envs=2",
        "eval.episodes_per_env=1",
        "eval.episode_steps=15",
        "eval.repeat_trials=1",
        "eval.export_episodes=2",
    ])
    return dataclasses.replace(cfg, out_dir=str(tmp_path / "out"), run_name="test")
