import math

import numpy as np
import pytest

from doorpass_lab.sim.env import (ACTION_DIM, STUDENT_DIM, TEACHER_DIM, DoorPassEnv,
                                  episode_metrics, observation_layout,
                                  student_indices_in_teacher)
from doorpass_lab.sim.rewards import Stage


def scripted_actions(steps, n, seed=1):
    rng = np.random.default_rng(seed)
    return rng.uniform(-0.5, 0.5, size=(steps, n, ACTION_DIM))


class TestLayout:
    def test_dimensions(self):
        layout = observation_layout()
        assert TEACHER_DIM == 46 and STUDENT_DIM == 19
        assert layout["teacher_dim"] == 46
        assert layout["privileged_start"] == 34
        assert layout["teacher"]["door_type"] == [41, 45]

    def test_student_fields_are_teacher_subset(self):
        idx = student_indices_in_teacher()
        assert len(idx) == STUDENT_DIM
        assert len(set(idx.tolist())) == STUDENT_DIM
        assert idx.max() < observation_layout()["privileged_start"]


class TestReset:
    def test_initial_state(self, small_config):
        env = DoorPassEnv(small_config)
        obs = env.reset()
        assert obs["teacher"].shape == (3, TEACHER_DIM)
        assert obs["student"].shape == (3, STUDENT_DIM)
        np.testing.assert_array_equal(env.door.theta, 0.0)
        assert env.door.latched.all()
        assert np.all(env.robot.base.x <= -1.0)

    def test_same_seed_same_observation(self, small_config):
        a = DoorPassEnv(small_config).reset()
        b = DoorPassEnv(small_config).reset()
        assert a["teacher"].tobytes() == b["teacher"].tobytes()
        assert a["student"].tobytes() == b["student"].tobytes()

    def test_noise_free_student_view(self, small_config):
        env = DoorPassEnv(small_config, student_noise=False)
        obs = env.reset()
        np.testing.assert_array_equal(obs["student"], obs["teacher"][:, student_indices_in_teacher()])

    def test_doorway_relative_position(self, small_config):
        env = DoorPassEnv(small_config, num_envs=1)
        env.reset()
        env.robot.base.x[0] = 0.0
        env.robot.base.y[0] = 0.0
        env.robot.base.yaw[0] = 0.0
        obs = env.build_teacher_obs()
        layout = observation_layout()["teacher"]
        np.testing.assert_allclose(obs[0, slice(*layout["doorway_pos"])], [0.0, 0.0, 1.0],
                                   atol=1e-12)
        np.testing.assert_allclose(obs[0, slice(*layout["doorway_dir"])], [1.0, 0.0], atol=1e-12)


class TestStep:
    def test_zero_actions_leave_door_closed(self, small_config):
        env = DoorPassEnv(small_config)
        env.reset()
        for _ in range(5):
            result = env.step(np.zeros((3, ACTION_DIM)))
        np.testing.assert_array_equal(result.info["theta"], 0.0)
        assert np.all(result.info["stage"] == Stage.OPENING)
        assert not result.done.any()

    def test_horizon(self, small_config):
        env = DoorPassEnv(small_config)
        env.reset()
        horizon = small_config.env.episode_steps
        for t in range(horizon):
            result = env.step(np.zeros((3, ACTION_DIM)))
            if t < horizon - 1:
                assert not result.done.any()
        assert result.done.all()
        # автосброс начинает следующий эпизод
        assert np.all(env.book.step == 0)
        assert np.all(env.book.episode == 2)

    def test_deterministic_rollout(self, small_config):
        actions = scripted_actions(10, 3)
        traces = []
        for _ in range(2):
            env = DoorPassEnv(small_config)
            env.reset()
            trace = [env.step(a).teacher_obs.tobytes() for a in actions]
            traces.append(trace)
        assert traces[0] == traces[1]

    def test_batch_matches_single_envs(self, small_config):
        actions = scripted_actions(6, 3)
        batch = DoorPassEnv(small_config)
        batch.reset()
        batch_obs = [batch.step(a).teacher_obs for a in actions][-1]
        for i in range(3):
            single = DoorPassEnv(small_config, num_envs=1, env_offset=i)
            single.reset()
            obs = [single.step(a[i:i + 1]).teacher_obs for a in actions][-1]
            np.testing.assert_allclose(obs[0], batch_obs[i], rtol=0.0, atol=1e-9)

    def test_nan_action_aborts_episode(self, small_config):
        env = DoorPassEnv(small_config, auto_reset=False)
        env.reset()
        actions = np.zeros((3, ACTION_DIM))
        actions[1, 0] = np.nan
        result = env.step(actions)
        assert result.info["nan_abort"].tolist() == [False, True, False]
        assert result.done[1]
        assert np.all(np.isfinite(result.teacher_obs))

    def test_reward_breakdown_is_consistent(self, small_config):
        env = DoorPassEnv(small_config)
        env.reset()
        result = env.step(scripted_actions(1, 3)[0])
        terms = result.breakdown.as_dict()
        np.testing.assert_array_equal(result.reward, terms["total"])
        assert np.all(np.isfinite(result.reward))


class TestEpisodeMetrics:
    def test_thresholds(self):
        opened, passed = episode_metrics([0.0, math.radians(29.0)], [-1.0, 0.6])
        assert not opened and passed
        opened, passed = episode_metrics([math.radians(31.0)], [0.4])
        assert opened and not passed
