import dataclasses
import json
import math
import os
from contextlib import contextmanager
from typing import Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from ..analysis import evaluation
from ..decorators import log_action
from ..infra.storage import ArtifactStore, format_csv, read_csv
from ..learning.distill import StudentRunResult, train_student
from ..learning.policies import load_policy
from ..learning.ppo import TeacherRunResult, train_teacher
from ..sim.door_model import door_from_config
from ..sim.env import ACTION_DIM, DoorPassEnv, observation_layout
from ..sim.rewards import TERM_NAMES
from .config import ExperimentConfig, config_hash, dump_config
from .exceptions import ConfigError, NumericalError, ReplayMismatchError, ShapeMismatchError


def run_stamp(cfg: ExperimentConfig) -> Dict:
    return {"config_hash": config_hash(cfg), "seed": cfg.seed,
            "layout_version": cfg.env.layout_version}


@contextmanager
def run_directory(cfg: ExperimentConfig, command: str) -> Iterator[ArtifactStore]:
    """Каталог out/<run-name>/ под блокировкой; снимок конфигурации и её хеш"""
    store = ArtifactStore(cfg.out_dir, cfg.run_name, run_stamp(cfg))
    with store:
        store.write_text("config.json", dump_config(cfg))
        store.write_text("config.sha1", config_hash(cfg) + "\n")
        store.write_json("observation_layout.json", observation_layout(cfg.env.layout_version))
        store.write_json(f"run_{command}.json", {"command": command, "run_name": cfg.run_name})
        yield store


def _write_assertions(store: ArtifactStore, name: str, checks: List[Dict]):
    store.write_json(name, {"all_passed": all(c["passed"] for c in checks), "checks": checks})


class TrainingUseCases:
    @staticmethod
    @log_action(action_name="TRAIN_TEACHER")
    def train_teacher(cfg: ExperimentConfig) -> TeacherRunResult:
        """Обучить учителя PPO на привилегированных (или студенческих) наблюдениях"""
        with run_directory(cfg, "train-teacher") as store:
            result = train_teacher(cfg, store)
            rows = [[key, value] for key, value in sorted(result.final_eval.items())]
            store.write_text("summary_teacher.txt", evaluation.summary_table(
                ("metric", "value"), rows, title=f"Учитель: {result.steps} шагов") + "\n")
        return result

    @staticmethod
    @log_action(action_name="TRAIN_STUDENT")
    def train_student(cfg: ExperimentConfig, teacher_ckpt: str) -> StudentRunResult:
        """Дистиллировать ученика из замороженного учителя"""
        with run_directory(cfg, "train-student") as store:
            result = train_student(cfg, teacher_ckpt, store)
            last = result.curve[-1] if result.curve else {}
            rows = [[key, last[key]] for key in ("imitation", "estimation", "door_type",
                                                 "door_type_accuracy") if key in last]
            store.write_text("summary_student.txt", evaluation.summary_table(
                ("metric", "value"), rows, title=f"Ученик: {result.steps} шагов") + "\n")
        return result


class EvaluationUseCases:
    @staticmethod
    @log_action(action_name="EVAL")
    def evaluate(cfg: ExperimentConfig, ckpt: str,
                 protocol_path: Optional[str] = None) -> Tuple[evaluation.GridResult, str]:
        policy = load_policy(ckpt, cfg.env.layout_version)
        protocol = (evaluation.load_protocol(protocol_path, cfg) if protocol_path
                    else evaluation.EvalProtocol.from_config(cfg))
        protocol = dataclasses.replace(protocol, checkpoint=ckpt)
        with run_directory(cfg, "eval") as store:
            grid = evaluation.evaluate_grid(cfg, policy, protocol)
            store.write_json("eval_protocol.json", protocol.to_dict())
            store.write_csv("eval_grid.csv", evaluation.GRID_HEADER, grid.csv_rows())
            _write_assertions(store, "eval_assertions.json", evaluation.grid_assertions(grid.rows))
            table = evaluation.summary_table(evaluation.GRID_HEADER, grid.csv_rows(),
                                             title="Успехи по типам дверей (95% Уилсон)")
            store.write_text("summary_eval.txt", table + "\n")
        return grid, table

    @staticmethod
    @log_action(action_name="SWEEP")
    def sweep(cfg: ExperimentConfig, ckpt: str,
              levels: Sequence[float]) -> Tuple[List[Dict], List[Dict], str]:
        policy = load_policy(ckpt, cfg.env.layout_version)
        protocol = evaluation.EvalProtocol.from_config(cfg, checkpoint=ckpt)
        with run_directory(cfg, "sweep") as store:
            rows = evaluation.resistance_sweep(cfg, policy, levels, protocol)
            csv_rows = [[row["label"]] + [row[c] for c in evaluation.RATE_COLUMNS]
                        for row in rows]
            store.write_csv("sweep.csv", evaluation.SWEEP_HEADER, csv_rows)
            checks = evaluation.sweep_assertions(rows)
            _write_assertions(store, "sweep_assertions.json", checks)
            table = evaluation.summary_table(evaluation.SWEEP_HEADER, csv_rows,
                                             title="Развёртка сопротивления петли")
            store.write_text("summary_sweep.txt", table + "\n")
        return rows, checks, table

    @staticmethod
    @log_action(action_name="EXPORT_TYPE_PROBS")
    def export_type_probs(cfg: ExperimentConfig, ckpt: str,
                          episodes: Optional[int] = None) -> evaluation.TypeProbTrace:
        policy = load_policy(ckpt, cfg.env.layout_version)
        protocol = evaluation.EvalProtocol.from_config(cfg, checkpoint=ckpt)
        with run_directory(cfg, "export-type-probs") as store:
            trace = evaluation.export_type_probs(cfg, policy, protocol,
                                                 episodes or cfg.eval.export_episodes)
            store.write_csv("type_probs.csv", trace.header, trace.rows)
            store.write_json("type_probs_summary.json", trace.summary())
        return trace

    @staticmethod
    @log_action(action_name="EXPORT_HIDDEN")
    def export_hidden(cfg: ExperimentConfig, ckpt: str,
                      episodes: Optional[int] = None) -> evaluation.HiddenExport:
        policy = load_policy(ckpt, cfg.env.layout_version)
        protocol = evaluation.EvalProtocol.from_config(cfg, checkpoint=ckpt)
        with run_directory(cfg, "export-hidden") as store:
            export = evaluation.export_hidden_states(cfg, policy, protocol,
                                                     episodes or cfg.eval.export_episodes)
            store.write_csv("hidden_states.csv", export.header, export.csv_rows())
            store.write_json("hidden_summary.json", {
                "rows": int(export.hidden.shape[0]), "hidden_dim": int(export.hidden.shape[1]),
                "late_push_pull_accuracy": export.late_accuracy})
        return export

    @staticmethod
    @log_action(action_name="REPEAT")
    def repeatability(cfg: ExperimentConfig, ckpt: str, n_per_side: Optional[int] = None,
                      door_path: Optional[str] = None) -> Dict:
        policy = load_policy(ckpt, cfg.env.layout_version)
        protocol = evaluation.EvalProtocol.from_config(cfg, checkpoint=ckpt)
        door = None
        if door_path:
            door = load_door(door_path, cfg)
        with run_directory(cfg, "repeat") as store:
            result = evaluation.repeatability(cfg, policy, protocol,
                                              n_per_side or cfg.eval.repeat_trials, door)
            store.write_json("repeatability.json", result)
        return result


def load_door(path: str, cfg: ExperimentConfig):
    try:
        with open(path, 'r', encoding='utf-8') as f:
            data = json.load(f)
        return door_from_config(data, theta_max=math.radians(cfg.door.theta_max_deg),
                                unlatch_fraction=cfg.door.unlatch_fraction,
                                handle_inertia=cfg.door.handle_inertia)
    except FileNotFoundError:
        raise ConfigError(path, "файл двери не найден")
    except (json.JSONDecodeError, ValueError) as e:
        raise ConfigError(path, str(e))


REPLAY_HEADER = (("t", "time", "theta", "phi", "stage", "latched", "grasped", "base_x", "base_y",
                  "base_yaw") + TERM_NAMES + ("opened_enough", "passed_through", "nan_abort"))


def load_actions(path: str) -> np.ndarray:
    """JSON-список 9-векторов или CSV (строки '#' и заголовок пропускаются)"""
    if not os.path.isfile(path):
        raise ConfigError(path, "файл действий не найден")
    try:
        if path.endswith('.json'):
            with open(path, 'r', encoding='utf-8') as f:
                actions = np.asarray(json.load(f), dtype=np.float64)
        else:
            rows = read_csv(path)
            actions = np.asarray([[float(v) for v in row.values()] for row in rows],
                                 dtype=np.float64)
    except (json.JSONDecodeError, TypeError, ValueError) as e:
        raise ConfigError(path, f"действия не читаются: {e}")
    if actions.ndim != 2 or actions.shape[1] != ACTION_DIM:
        raise ShapeMismatchError("replay.actions", f"(T, {ACTION_DIM})", actions.shape)
    if not np.all(np.isfinite(actions)):
        raise NumericalError("replay.actions")
    return actions


class ReplayUseCases:
    @staticmethod
    @log_action(action_name="REPLAY")
    def replay(cfg: ExperimentConfig, actions_path: str, env_index: int = 0,
               record: Optional[str] = None, expect: Optional[str] = None) -> Dict:
        """Прогнать записанные действия через одну среду и выписать трассу состояний"""
        actions = load_actions(actions_path)
        env = DoorPassEnv(cfg, num_envs=1, env_offset=env_index, auto_reset=False)
        env.reset()
        rows = []
        for t, action in enumerate(actions):
            result = env.step(action[None, :])
            info = result.info
            base = env.robot.base
            rows.append([t, (t + 1) * cfg.env.control_dt, float(info["theta"][0]),
                         float(info["phi"][0]), int(info["stage"][0]), bool(info["latched"][0]),
                         bool(info["grasped"][0]), float(base.x[0]), float(base.y[0]),
                         float(base.yaw[0]), *result.breakdown.row(0),
                         bool(info["opened_enough"][0]), bool(info["passed_through"][0]),
                         bool(info["nan_abort"][0])])
            if result.done[0]:
                break

        with run_directory(cfg, "replay") as store:
            store.write_csv("replay_trace.csv", REPLAY_HEADER, rows)
            text = format_csv(REPLAY_HEADER, rows, store.stamp)
            if record:
                with open(record, 'w', encoding='utf-8', newline='') as f:
                    f.write(text)
            if expect:
                ReplayUseCases.compare_trace(text, expect)
        return {"steps": len(rows), "final_theta": rows[-1][2] if rows else 0.0,
                "opened_enough": rows[-1][-3] if rows else False,
                "passed_through": rows[-1][-2] if rows else False,
                "trace": store.path("replay_trace.csv")}

    @staticmethod
    def compare_trace(text: str, expect: str):
        if not os.path.isfile(expect):
            raise ConfigError(expect, "файл записанной трассы не найден")
        with open(expect, 'r', encoding='utf-8', newline='') as f:
            recorded = f.read()
        if recorded == text:
            return
        ours, theirs = text.splitlines(), recorded.splitlines()
        for line, (a, b) in enumerate(zip(ours, theirs), start=1):
            if a != b:
                raise ReplayMismatchError(expect, line)
        raise ReplayMismatchError(expect, min(len(ours), len(theirs)) + 1)
