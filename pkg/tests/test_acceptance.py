"""Обучение в масштабе приёмки; запуск: pytest -m slow (часы на CPU)"""
import dataclasses
import os

import pytest

from doorpass_lab.analysis.evaluation import (EvalProtocol, evaluate_grid, export_type_probs,
                                              resistance_sweep, sweep_assertions)
from doorpass_lab.core.config import apply_overrides, load_config
from doorpass_lab.infra.storage import ArtifactStore
from doorpass_lab.learning.distill import train_student
from doorpass_lab.learning.policies import load_policy
from doorpass_lab.learning.ppo import train_teacher

pytestmark = pytest.mark.slow

CONFIG_DIR = os.path.join(os.path.dirname(__file__), os.pardir, "configs")


def config(name, out_dir, *overrides):
    cfg = apply_overrides(load_config(os.path.join(CONFIG_DIR, name)), list(overrides))
    return dataclasses.replace(cfg, out_dir=str(out_dir))


def teacher_run(cfg, run_name):
    cfg = dataclasses.replace(cfg, run_name=run_name)
    with ArtifactStore(cfg.out_dir, cfg.run_name) as store:
        return train_teacher(cfg, store)


def student_run(cfg, teacher_path, run_name):
    cfg = dataclasses.replace(cfg, run_name=run_name)
    with ArtifactStore(cfg.out_dir, cfg.run_name) as store:
        return train_student(cfg, teacher_path, store)


@pytest.fixture(scope="module")
def out_dir(tmp_path_factory):
    return tmp_path_factory.mktemp("acceptance")


@pytest.fixture(scope="module")
def full_config(out_dir):
    return config("default.json", out_dir)


@pytest.fixture(scope="module")
def full_teacher(full_config):
    return teacher_run(full_config, "teacher").best_path


def test_teacher_opens_fixed_push_door(out_dir):
    cfg = config("smoke_push_right.json", out_dir)
    result = teacher_run(cfg, "smoke")
    policy = load_policy(result.best_path, cfg.env.layout_version)
    grid = evaluate_grid(cfg, policy, EvalProtocol.from_config(cfg))
    assert grid.rows[-1]["open_rate"] >= 0.9


def test_privileged_teacher_beats_blind_teacher(full_config, full_teacher):
    blind_cfg = apply_overrides(full_config, ["ppo.observation_set=student"])
    blind = teacher_run(blind_cfg, "teacher-blind").best_path
    protocol = EvalProtocol.from_config(full_config)
    nominal = evaluate_grid(full_config, load_policy(full_teacher, "obs-v1"), protocol)
    ablated = evaluate_grid(blind_cfg, load_policy(blind, "obs-v1"), protocol)
    assert nominal.rows[-1]["pass_rate"] - ablated.rows[-1]["pass_rate"] >= 0.20


def test_resistance_sweep_trend(full_config, full_teacher):
    policy = load_policy(full_teacher, full_config.env.layout_version)
    rows = resistance_sweep(full_config, policy, list(full_config.eval.resistances),
                            EvalProtocol.from_config(full_config))
    failed = [c for c in sweep_assertions(rows) if not c["passed"]]
    assert not failed


class TestStudents:
    @pytest.fixture(scope="class")
    def recurrent(self, full_config, full_teacher):
        return student_run(full_config, full_teacher, "student")

    def test_recurrence_helps_imitation(self, full_config, full_teacher, recurrent):
        mlp_cfg = apply_overrides(full_config, ["distill.mlp_student=true"])
        mlp = student_run(mlp_cfg, full_teacher, "student-mlp")
        assert recurrent.curve[-1]["imitation"] < mlp.curve[-1]["imitation"]

    def test_estimation_loss_neither_helps_nor_hurts(self, full_config, full_teacher, recurrent):
        no_est_cfg = apply_overrides(full_config, ["distill.no_estimation_loss=true"])
        no_est = student_run(no_est_cfg, full_teacher, "student-no-est")
        a, b = recurrent.curve[-1]["imitation"], no_est.curve[-1]["imitation"]
        assert abs(a - b) <= 0.1 * max(a, b)

    def test_door_type_inferred_by_episode_end(self, full_config, recurrent):
        policy = load_policy(recurrent.path, full_config.env.layout_version)
        trace = export_type_probs(full_config, policy, EvalProtocol.from_config(full_config),
                                  full_config.eval.num_envs)
        assert trace.final_accuracy >= 0.9
