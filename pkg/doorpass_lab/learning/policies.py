"""Обёртки политик над сетями: учитель (гауссов актор), рекуррентный ученик, случайная и нулевая"""
from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np

from ..core.exceptions import ShapeMismatchError
from ..sim.env import ACTION_DIM, STUDENT_DIM, TEACHER_DIM, DoorPassEnv
from .checkpoint import Checkpoint, load_checkpoint
from .nn import ActorCritic, ActorCriticSpec, Params, RunningMeanStd, Student, StudentSpec

# какое наблюдение среды видит сеть учителя
OBSERVATION_KEYS = {"privileged": "teacher", "student": "student", "student_noisy": "student"}


def observation_dim(observation_set: str) -> int:
    if observation_set not in OBSERVATION_KEYS:
        raise ValueError(f"Неизвестный набор наблюдений: {observation_set}")
    return TEACHER_DIM if OBSERVATION_KEYS[observation_set] == "teacher" else STUDENT_DIM


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - np.max(logits, axis=-1, keepdims=True)
    e = np.exp(z)
    return e / np.sum(e, axis=-1, keepdims=True)


class TeacherPolicy:
    def __init__(self, spec: ActorCriticSpec, params: Params, normalizer: RunningMeanStd,
                 observation_set: str = "privileged"):
        if spec.obs_dim != observation_dim(observation_set):
            raise ShapeMismatchError("teacher.obs_dim", observation_dim(observation_set),
                                     spec.obs_dim)
        self.spec = spec
        self.net = ActorCritic(spec)
        self.params = params
        self.normalizer = normalizer
        self.observation_set = observation_set

    @classmethod
    def from_checkpoint(cls, checkpoint: Checkpoint) -> 'TeacherPolicy':
        s = checkpoint.spec
        spec = ActorCriticSpec(obs_dim=s["obs_dim"], action_dim=s["action_dim"],
                               hidden_sizes=tuple(s["hidden_sizes"]),
                               init_log_std=s["init_log_std"])
        normalizer = RunningMeanStd.from_dict(checkpoint.metadata["normalizer"])
        return cls(spec, checkpoint.params, normalizer,
                   checkpoint.metadata.get("observation_set", "privileged"))

    def observe(self, obs: Dict[str, np.ndarray]) -> np.ndarray:
        return self.normalizer.normalize(obs[OBSERVATION_KEYS[self.observation_set]])

    def mean_action(self, obs: Dict[str, np.ndarray]) -> np.ndarray:
        return self.net.act_mean(self.params, self.observe(obs)).astype(np.float64)

    def act(self, obs: Dict[str, np.ndarray], rng: Optional[np.random.Generator] = None,
            deterministic: bool = True) -> np.ndarray:
        mean = self.mean_action(obs)
        if deterministic or rng is None:
            return mean
        std = np.exp(self.params["log_std"].astype(np.float64))
        return mean + std * rng.standard_normal(mean.shape)

    def reset(self, done: np.ndarray):
        pass


class StudentPolicy:
    """Несёт скрытое состояние по средам; сбрасывает его на границах эпизодов"""

    def __init__(self, spec: StudentSpec, params: Params, normalizer: RunningMeanStd):
        self.spec = spec
        self.net = Student(spec)
        self.params = params
        self.normalizer = normalizer
        self.hidden: Optional[np.ndarray] = None
        self.last_decoded: Optional[np.ndarray] = None
        self.last_action: Optional[np.ndarray] = None
        # вход ячейки на последнем шаге (h_t до обновления)
        self.prev_hidden: Optional[np.ndarray] = None

    @classmethod
    def from_checkpoint(cls, checkpoint: Checkpoint) -> 'StudentPolicy':
        s = checkpoint.spec
        spec = StudentSpec(obs_dim=s["obs_dim"], action_dim=s["action_dim"],
                           encoder_hidden=s["encoder_hidden"], gru_hidden=s["gru_hidden"],
                           recurrent=s["recurrent"], estimation_dim=s["estimation_dim"],
                           door_type_classes=s["door_type_classes"])
        return cls(spec, checkpoint.params,
                   RunningMeanStd.from_dict(checkpoint.metadata["normalizer"]))

    def begin(self, n: int):
        self.hidden = self.net.initial_hidden(n)

    def reset(self, done: np.ndarray):
        if self.hidden is not None:
            self.hidden[np.asarray(done, dtype=bool)] = 0.0

    def observe(self, obs: Dict[str, np.ndarray]) -> np.ndarray:
        return self.normalizer.normalize(obs["student"])

    def act(self, obs: Dict[str, np.ndarray], rng: Optional[np.random.Generator] = None,
            deterministic: bool = True) -> np.ndarray:
        x = self.observe(obs)
        if self.hidden is None or self.hidden.shape[0] != x.shape[0]:
            self.begin(x.shape[0])
        self.prev_hidden = self.hidden.copy()
        action, decoded, self.hidden, _ = self.net.step(self.params, x, self.hidden)
        self.last_decoded = decoded
        self.last_action = action.astype(np.float64)
        return self.last_action

    def door_type_probs(self) -> np.ndarray:
        """Вероятности типа двери из последнего выхода декодера"""
        if self.last_decoded is None:
            raise ValueError("Политика ещё не делала шагов")
        logits = self.last_decoded[..., self.spec.estimation_dim:].astype(np.float64)
        return softmax(logits)


class RandomPolicy:
    def __init__(self, seed: int = 0, scale: float = 1.0):
        self.rng = np.random.default_rng(seed)
        self.scale = scale

    def act(self, obs, rng=None, deterministic: bool = True) -> np.ndarray:
        n = obs["teacher"].shape[0]
        return self.scale * self.rng.uniform(-1.0, 1.0, size=(n, ACTION_DIM))

    def reset(self, done):
        pass


class ZeroPolicy:
    def act(self, obs, rng=None, deterministic: bool = True) -> np.ndarray:
        return np.zeros((obs["teacher"].shape[0], ACTION_DIM))

    def reset(self, done):
        pass


@dataclass
class EpisodeRecord:
    env_index: int
    episode: int
    door_type: int
    opened_enough: bool
    passed_through: bool
    max_theta: float
    nan_abort: bool
    extras: Dict = field(default_factory=dict)


def rollout_episodes(env: DoorPassEnv, policy, episodes_per_env: int = 1,
                     on_step=None) -> List[EpisodeRecord]:
    """Прогнать каждую среду ровно episodes_per_env эпизодов; on_step(t, obs, result, policy)"""
    obs = env.reset()
    if hasattr(policy, "begin"):
        policy.begin(env.n)
    finished = np.zeros(env.n, dtype=np.int64)
    records: List[EpisodeRecord] = []
    t = 0
    while np.any(finished < episodes_per_env):
        actions = policy.act(obs)
        result = env.step(actions)
        if on_step is not None:
            on_step(t, obs, result, policy)
        info = result.info
        for i in np.flatnonzero(result.done):
            if finished[i] < episodes_per_env:
                records.append(EpisodeRecord(
                    env_index=int(env.env_index[i]), episode=int(info["episode"][i]),
                    door_type=int(info["door_type"][i]),
                    opened_enough=bool(info["opened_enough"][i]),
                    passed_through=bool(info["passed_through"][i]),
                    max_theta=float(info["max_theta"][i]), nan_abort=bool(info["nan_abort"][i])))
            finished[i] += 1
        policy.reset(result.done)
        obs = {"teacher": result.teacher_obs, "student": result.student_obs}
        t += 1
    records.sort(key=lambda r: (r.env_index, r.episode))
    return records


def success_rates(records: List[EpisodeRecord]) -> Dict[str, float]:
    n = max(len(records), 1)
    return {"episodes": len(records),
            "opened_enough": sum(r.opened_enough for r in records) / n,
            "passed_through": sum(r.passed_through for r in records) / n}


def load_policy(path: str, layout_version: str):
    """Учитель или ученик по виду сети в чекпоинте"""
    checkpoint = load_checkpoint(path, expected_layout=layout_version)
    if checkpoint.spec.get("kind") == "student":
        return StudentPolicy.from_checkpoint(checkpoint)
    return TeacherPolicy.from_checkpoint(checkpoint)
