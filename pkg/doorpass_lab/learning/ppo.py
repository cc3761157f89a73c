"""Обучение учителя: сбор роллаутов по пакету сред, GAE, PPO с обрезанным суррогатом"""
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np

from ..core.config import ExperimentConfig, PPOConfig, config_hash
from ..core.exceptions import TrainingDivergedError
from ..infra.storage import ArtifactStore
from ..logging_config import get_logger
from ..sim.domain_rand import PURPOSE_POLICY
from ..sim.env import ACTION_DIM, DoorPassEnv
from .checkpoint import save_checkpoint
from .nn import (ActorCritic, ActorCriticSpec, Adam, Params, RunningMeanStd, all_finite,
                 clip_grad_norm, gaussian_entropy, gaussian_log_prob)
from .policies import (OBSERVATION_KEYS, TeacherPolicy, observation_dim, rollout_episodes,
                       success_rates)

logger = get_logger('ppo')

# метки подпотоков генератора обучения
STREAM_INIT = 0
STREAM_SAMPLING = 1
STREAM_MINIBATCH = 2


def training_stream(seed: int, tag: int) -> np.random.Generator:
    sequence = np.random.SeedSequence([int(seed), PURPOSE_POLICY, int(tag)])
    return np.random.Generator(np.random.Philox(sequence))


class RolloutBuffer:
    """Буфер фиксированной ёмкости T × N"""

    def __init__(self, steps: int, num_envs: int, obs_dim: int, action_dim: int = ACTION_DIM):
        self.steps = steps
        self.num_envs = num_envs
        self.obs = np.zeros((steps, num_envs, obs_dim), dtype=np.float32)
        self.actions = np.zeros((steps, num_envs, action_dim))
        self.log_probs = np.zeros((steps, num_envs))
        self.values = np.zeros((steps, num_envs))
        self.rewards = np.zeros((steps, num_envs))
        self.dones = np.zeros((steps, num_envs), dtype=bool)
        self.stages = np.zeros((steps, num_envs), dtype=np.int64)
        self.last_values = np.zeros(num_envs)
        self.advantages = np.zeros((steps, num_envs))
        self.returns = np.zeros((steps, num_envs))
        self.size = 0

    @property
    def capacity(self) -> int:
        return self.steps * self.num_envs

    def add(self, obs, actions, log_probs, values, rewards, dones, stages):
        t = self.size
        if t >= self.steps:
            raise IndexError("Буфер роллаута заполнен")
        self.obs[t] = obs
        self.actions[t] = actions
        self.log_probs[t] = log_probs
        self.values[t] = values
        self.rewards[t] = rewards
        self.dones[t] = dones
        self.stages[t] = stages
        self.size += 1

    def clear(self):
        self.size = 0

    def flat(self, name: str) -> np.ndarray:
        a = getattr(self, name)
        return a.reshape((self.capacity,) + a.shape[2:])


@dataclass
class RolloutStats:
    mean_reward: float = 0.0
    episodes: int = 0
    opened_enough: int = 0
    passed_through: int = 0
    nan_aborts: int = 0


def compute_gae(rewards: np.ndarray, values: np.ndarray, dones: np.ndarray,
                last_values: np.ndarray, gamma: float, lam: float):
    """Обратная рекурсия GAE; бутстрап значением last_values на нетерминальном срезе"""
    rewards = np.asarray(rewards, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    not_done = 1.0 - np.asarray(dones, dtype=np.float64)
    advantages = np.zeros_like(rewards)
    gae = np.zeros_like(rewards[0])
    next_value = np.asarray(last_values, dtype=np.float64)
    for t in reversed(range(rewards.shape[0])):
        delta = rewards[t] + gamma * next_value * not_done[t] - values[t]
        gae = delta + gamma * lam * not_done[t] * gae
        advantages[t] = gae
        next_value = values[t]
    return advantages, advantages + values


def collect_rollout(net: ActorCritic, params: Params, env: DoorPassEnv, buffer: RolloutBuffer,
                    obs: Dict[str, np.ndarray], normalizer: RunningMeanStd, observation_set: str,
                    rng: Optional[np.random.Generator] = None, deterministic: bool = False):
    """Заполнить буфер; возвращает (следующее наблюдение, статистика, сырые наблюдения)"""
    key = OBSERVATION_KEYS[observation_set]
    buffer.clear()
    stats = RolloutStats()
    raw = []
    log_std = params["log_std"].astype(np.float64)
    std = np.exp(log_std)
    total_reward = 0.0
    for _ in range(buffer.steps):
        raw.append(obs[key])
        x = normalizer.normalize(obs[key])
        mean, value, _ = net.forward(params, x)
        mean = mean.astype(np.float64)
        if deterministic or rng is None:
            actions = mean
        else:
            actions = mean + std * rng.standard_normal(mean.shape)
        log_probs = gaussian_log_prob(mean, log_std, actions)
        result = env.step(actions)
        buffer.add(x, actions, log_probs, value, result.reward, result.done, result.info["stage"])
        total_reward += float(np.mean(result.reward))
        for i in np.flatnonzero(result.done):
            stats.episodes += 1
            stats.opened_enough += int(result.info["opened_enough"][i])
            stats.passed_through += int(result.info["passed_through"][i])
            stats.nan_aborts += int(result.info["nan_abort"][i])
        obs = {"teacher": result.teacher_obs, "student": result.student_obs}
    buffer.last_values = net.value(params, normalizer.normalize(obs[key])).astype(np.float64)
    stats.mean_reward = total_reward / buffer.steps
    return obs, stats, np.concatenate(raw, axis=0)


def clipped_surrogate(ratio: np.ndarray, advantages: np.ndarray, clip: float):
    """min(r·A, clip(r)·A) и маска, где градиент идёт через r"""
    unclipped = ratio * advantages
    clipped = np.clip(ratio, 1.0 - clip, 1.0 + clip) * advantages
    return np.minimum(unclipped, clipped), unclipped <= clipped


def ppo_loss_and_grads(net: ActorCritic, params: Params, obs: np.ndarray, actions: np.ndarray,
                       old_log_probs: np.ndarray, advantages: np.ndarray, returns: np.ndarray,
                       cfg: PPOConfig):
    """Потеря PPO на минибатче и её градиенты по параметрам"""
    batch = obs.shape[0]
    mean, value, cache = net.forward(params, obs)
    mean = mean.astype(np.float64)
    value = value.astype(np.float64)
    log_std = params["log_std"].astype(np.float64)
    std = np.exp(log_std)
    log_probs = gaussian_log_prob(mean, log_std, actions)
    ratio = np.exp(log_probs - old_log_probs)
    surrogate, active = clipped_surrogate(ratio, advantages, cfg.clip)
    policy_loss = -float(np.mean(surrogate))
    value_loss = 0.5 * float(np.mean((value - returns) ** 2))
    entropy = gaussian_entropy(log_std)
    total = policy_loss + cfg.value_coef * value_loss - cfg.entropy_coef * entropy

    d_log_prob = np.where(active, -advantages * ratio, 0.0) / batch
    z = (actions - mean) / std
    d_mean = d_log_prob[:, None] * z / std
    d_log_std = np.sum(d_log_prob[:, None] * (z * z - 1.0), axis=0) - cfg.entropy_coef
    d_value = cfg.value_coef * (value - returns) / batch
    grads = net.backward(params, cache, d_mean, d_value, d_log_std)

    stats = {
        "loss": total,
        "policy_loss": policy_loss,
        "value_loss": value_loss,
        "entropy": entropy,
        "approx_kl": float(np.mean(old_log_probs - log_probs)),
        "clip_fraction": float(np.mean(np.abs(ratio - 1.0) > cfg.clip)),
    }
    return stats, grads


def ppo_update(net: ActorCritic, params: Params, optimizer: Adam, buffer: RolloutBuffer,
               cfg: PPOConfig, rng: np.random.Generator, step: int = 0) -> Dict[str, float]:
    """Эпохи по минибатчам с нормировкой преимуществ и обрезкой нормы градиента"""
    obs = buffer.flat("obs")
    actions = buffer.flat("actions")
    old_log_probs = buffer.flat("log_probs")
    returns = buffer.flat("returns")
    advantages = buffer.flat("advantages")
    advantages = (advantages - advantages.mean()) / (advantages.std() + 1e-8)

    size = obs.shape[0]
    mb_size = max(1, size // cfg.minibatches)
    totals: Dict[str, float] = {}
    updates = 0
    for _ in range(cfg.epochs):
        order = rng.permutation(size)
        for start in range(0, mb_size * cfg.minibatches, mb_size):
            idx = order[start:start + mb_size]
            if idx.size == 0:
                continue
            stats, grads = ppo_loss_and_grads(net, params, obs[idx], actions[idx],
                                              old_log_probs[idx], advantages[idx], returns[idx],
                                              cfg)
            if not math.isfinite(stats["loss"]) or not all_finite(grads.values()):
                raise TrainingDivergedError("teacher", step, {k: v for k, v in stats.items()})
            stats["grad_norm"] = clip_grad_norm(grads, cfg.max_grad_norm)
            optimizer.step(params, grads)
            for k, v in stats.items():
                totals[k] = totals.get(k, 0.0) + v
            updates += 1
    return {k: v / max(updates, 1) for k, v in totals.items()}


@dataclass
class TeacherRunResult:
    best_path: str
    last_path: str
    steps: int
    curve: List[Dict] = field(default_factory=list)
    final_eval: Dict[str, float] = field(default_factory=dict)


def teacher_spec(cfg: ExperimentConfig) -> ActorCriticSpec:
    return ActorCriticSpec(obs_dim=observation_dim(cfg.ppo.observation_set),
                           action_dim=ACTION_DIM, hidden_sizes=tuple(cfg.ppo.hidden_sizes),
                           init_log_std=cfg.ppo.init_log_std)


def evaluate_teacher(cfg: ExperimentConfig, policy: TeacherPolicy, num_envs: int) -> Dict[str, float]:
    env = DoorPassEnv(cfg, num_envs=num_envs, seed=cfg.seed + cfg.eval.seed_offset,
                      student_noise=policy.observation_set == "student_noisy")
    return success_rates(rollout_episodes(env, policy, 1))


def train_teacher(cfg: ExperimentConfig, store: ArtifactStore) -> TeacherRunResult:
    """Цикл PPO до исчерпания бюджета шагов; лучший чекпоинт по (проход, открытие)"""
    pcfg = cfg.ppo
    obs_set = pcfg.observation_set
    env = DoorPassEnv(cfg, student_noise=obs_set == "student_noisy")
    spec = teacher_spec(cfg)
    net = ActorCritic(spec)
    params = net.init_params(training_stream(cfg.seed, STREAM_INIT))
    optimizer = Adam(lr=pcfg.learning_rate)
    normalizer = RunningMeanStd(spec.obs_dim)
    sampling = training_stream(cfg.seed, STREAM_SAMPLING)
    minibatch = training_stream(cfg.seed, STREAM_MINIBATCH)
    buffer = RolloutBuffer(pcfg.rollout_steps, env.n, spec.obs_dim)

    per_iter = pcfg.rollout_steps * env.n
    iterations = max(1, int(math.ceil(pcfg.total_steps / per_iter)))
    logger.info(f"Обучение учителя: {iterations} итераций по {per_iter} шагов, набор '{obs_set}'")

    base_meta = {"kind": "teacher", "layout_version": cfg.env.layout_version, "seed": cfg.seed,
                 "workers": 1, "config_hash": config_hash(cfg), "observation_set": obs_set}
    curve_name = "teacher_curve.jsonl"
    store.reset_file(curve_name)
    best_path, last_path = store.path("teacher_best.ckpt"), store.path("teacher_last.ckpt")
    best_score = None
    final_eval: Dict[str, float] = {}
    curve: List[Dict] = []

    obs = env.reset()
    steps = 0
    for it in range(iterations):
        obs, rollout, raw = collect_rollout(net, params, env, buffer, obs, normalizer, obs_set,
                                            sampling)
        steps += per_iter
        buffer.advantages, buffer.returns = compute_gae(buffer.rewards, buffer.values,
                                                        buffer.dones, buffer.last_values,
                                                        pcfg.gamma, pcfg.lam)
        update = ppo_update(net, params, optimizer, buffer, pcfg, minibatch, steps)
        normalizer.update(raw)

        record = {"step": steps, "iteration": it, "mean_reward": rollout.mean_reward,
                  "episodes": rollout.episodes, "nan_aborts": rollout.nan_aborts, **update}
        last = it == iterations - 1
        if (it + 1) % pcfg.eval_every == 0 or last:
            policy = TeacherPolicy(spec, params, normalizer, obs_set)
            rates = evaluate_teacher(cfg, policy, pcfg.eval_envs)
            record["eval_opened_enough"] = rates["opened_enough"]
            record["eval_passed_through"] = rates["passed_through"]
            score = (rates["passed_through"], rates["opened_enough"])
            meta = {**base_meta, "step": steps, "normalizer": normalizer.to_dict(),
                    "eval": rates}
            if best_score is None or score > best_score:
                best_score = score
                save_checkpoint(best_path, params, spec.to_dict(), meta)
            final_eval = rates
            logger.info(f"Учитель, шаг {steps}: открытие {rates['opened_enough']:.3f}, "
                        f"проход {rates['passed_through']:.3f}")
        if (it + 1) % pcfg.checkpoint_every == 0 or last:
            save_checkpoint(last_path, params, spec.to_dict(),
                            {**base_meta, "step": steps, "normalizer": normalizer.to_dict()})
        store.append_jsonl(curve_name, record)
        curve.append(record)

    return TeacherRunResult(best_path=best_path, last_path=last_path, steps=steps, curve=curve,
                            final_eval=final_eval)
