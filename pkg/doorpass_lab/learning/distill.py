"""Дистилляция ученика: роллауты ученика, метки учителя, Smooth L1 и кросс-энтропия, BPTT"""
import math
from dataclasses import dataclass, field
from typing import Dict, List, NamedTuple

import numpy as np

from ..core.config import DistillConfig, ExperimentConfig, config_hash
from ..core.exceptions import TrainingDivergedError
from ..infra.storage import ArtifactStore
from ..logging_config import get_logger
from ..sim.env import STUDENT_DIM, DoorPassEnv, observation_layout, student_indices_in_teacher
from .checkpoint import load_checkpoint, params_digest, save_checkpoint
from .nn import ESTIMATION_FIELDS, Adam, RunningMeanStd, Student, StudentSpec, all_finite, \
    clip_grad_norm
from .policies import TeacherPolicy, softmax
from .ppo import STREAM_INIT, training_stream

logger = get_logger('distill')

SCALE_FLOOR = 0.1


def smooth_l1(residual, beta: float = 1.0) -> np.ndarray:
    r = np.abs(np.asarray(residual, dtype=np.float64))
    return np.where(r < beta, 0.5 * r * r / beta, r - 0.5 * beta)


def smooth_l1_grad(residual, beta: float = 1.0) -> np.ndarray:
    r = np.asarray(residual, dtype=np.float64)
    return np.where(np.abs(r) < beta, r / beta, np.sign(r))


def cross_entropy(logits: np.ndarray, labels: np.ndarray):
    """Средняя кросс-энтропия и градиент по логитам"""
    logits = np.asarray(logits, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    z = logits - np.max(logits, axis=-1, keepdims=True)
    log_p = z - np.log(np.sum(np.exp(z), axis=-1, keepdims=True))
    picked = np.take_along_axis(log_p, labels[..., None], axis=-1)[..., 0]
    count = max(labels.size, 1)
    grad = np.exp(log_p)
    np.put_along_axis(grad, labels[..., None],
                      np.take_along_axis(grad, labels[..., None], axis=-1) - 1.0, axis=-1)
    return float(-np.sum(picked) / count), grad / count


def estimation_scales(cfg: ExperimentConfig) -> np.ndarray:
    """Нормировка непрерывных целей по ширине диапазонов рандомизации"""
    r = cfg.randomization
    width = lambda bounds: max(bounds[1] - bounds[0], SCALE_FLOOR)  # noqa: E731
    planar = width(r.d_center)
    scales = {
        "handle_pos": [planar, planar, width(r.h_h)],
        "doorway_pos": [planar, planar, cfg.door.panel_height / 2.0],
        "doorway_dir": [2.0, 2.0],
        "door_joints": [math.radians(cfg.door.theta_max_deg), math.radians(r.phi_max_deg[1]),
                        2.0, 5.0],
        "mass": [width(r.mass)],
        "resist_torques": [max(r.tau_hinge[1], SCALE_FLOOR), max(r.tau_handle[1], SCALE_FLOOR)],
    }
    return np.array([v for name, _ in ESTIMATION_FIELDS for v in scales[name]])


def estimation_targets(teacher_obs: np.ndarray):
    """(непрерывные цели, индекс типа двери) из того же привилегированного состояния"""
    layout = observation_layout()["teacher"]
    parts = [teacher_obs[..., slice(*layout[name])] for name, _ in ESTIMATION_FIELDS]
    lo, hi = layout["door_type"]
    return np.concatenate(parts, axis=-1), np.argmax(teacher_obs[..., lo:hi], axis=-1)


def noise_free_view(obs: Dict[str, np.ndarray]) -> Dict[str, np.ndarray]:
    """Наблюдение ученика, вырезанное из привилегированного до шума"""
    teacher_obs = obs["teacher"]
    return {"teacher": teacher_obs, "student": teacher_obs[..., student_indices_in_teacher()]}


def label_with_teacher(teacher: TeacherPolicy, obs: Dict[str, np.ndarray]) -> np.ndarray:
    """Среднее действие замороженного учителя на незашумлённых наблюдениях"""
    return teacher.mean_action(noise_free_view(obs))


class DistillLosses(NamedTuple):
    imitation: float
    estimation: float
    door_type: float
    total: float


def distill_losses(actions: np.ndarray, decoded: np.ndarray, labels: np.ndarray,
                   targets: np.ndarray, door_types: np.ndarray, cfg: DistillConfig,
                   scales: np.ndarray):
    """Потери и градиенты по выходам (действия, декодер)"""
    actions = np.asarray(actions, dtype=np.float64)
    decoded = np.asarray(decoded, dtype=np.float64)
    est_dim = targets.shape[-1]

    residual = actions - labels
    imitation = float(np.mean(smooth_l1(residual, cfg.beta)))
    d_actions = smooth_l1_grad(residual, cfg.beta) / residual.size

    est_residual = (decoded[..., :est_dim] - targets) / scales
    estimation = float(np.mean(smooth_l1(est_residual, cfg.beta)))
    d_est = smooth_l1_grad(est_residual, cfg.beta) / scales / est_residual.size

    door_type, d_logits = cross_entropy(decoded[..., est_dim:], door_types)

    use_aux = not cfg.no_estimation_loss
    total = cfg.imitation_weight * imitation
    if use_aux:
        total += cfg.estimation_weight * estimation + cfg.door_type_weight * door_type
    d_decoded = np.zeros_like(decoded)
    if use_aux:
        d_decoded[..., :est_dim] = cfg.estimation_weight * d_est
        d_decoded[..., est_dim:] = cfg.door_type_weight * d_logits
    return (DistillLosses(imitation, estimation, door_type, total),
            cfg.imitation_weight * d_actions, d_decoded)


@dataclass
class StudentRunResult:
    path: str
    steps: int
    curve: List[Dict] = field(default_factory=list)


def student_spec(cfg: ExperimentConfig) -> StudentSpec:
    return StudentSpec(obs_dim=STUDENT_DIM, encoder_hidden=cfg.distill.encoder_hidden,
                       gru_hidden=cfg.distill.gru_hidden, recurrent=not cfg.distill.mlp_student)


def ablation_name(cfg: DistillConfig) -> str:
    if cfg.mlp_student:
        return "mlp"
    return "no-estimation" if cfg.no_estimation_loss else "none"


def door_type_accuracy(decoded: np.ndarray, door_types: np.ndarray, est_dim: int) -> float:
    probs = softmax(np.asarray(decoded, dtype=np.float64)[..., est_dim:])
    return float(np.mean(np.argmax(probs, axis=-1) == door_types))


def train_student(cfg: ExperimentConfig, teacher_path: str, store: ArtifactStore) -> StudentRunResult:
    """Ученик водит среды сам (100% его действий); учитель даёт метки и не меняется"""
    dcfg = cfg.distill
    checkpoint = load_checkpoint(teacher_path, expected_layout=cfg.env.layout_version,
                                 expected_kind="actor_critic")
    teacher = TeacherPolicy.from_checkpoint(checkpoint)
    teacher_digest = params_digest(teacher.params)

    env = DoorPassEnv(cfg, student_noise=True)
    spec = student_spec(cfg)
    net = Student(spec)
    params = net.init_params(training_stream(cfg.seed, STREAM_INIT))
    optimizer = Adam(lr=dcfg.learning_rate)
    normalizer = RunningMeanStd(STUDENT_DIM)
    scales = estimation_scales(cfg)

    window = int(dcfg.window)
    if window < 1:
        raise ValueError("Окно BPTT должно быть не меньше 1")
    per_iter = window * env.n
    iterations = max(1, int(math.ceil(dcfg.total_steps / per_iter)))
    logger.info(f"Дистилляция: {iterations} итераций, окно {window}, "
                f"абляция '{ablation_name(dcfg)}'")

    curve_name = "student_curve.jsonl"
    store.reset_file(curve_name)
    path = store.path("student_last.ckpt")
    meta = {"kind": "student", "layout_version": cfg.env.layout_version, "seed": cfg.seed,
            "workers": 1, "config_hash": config_hash(cfg), "teacher_digest": teacher_digest,
            "ablation": ablation_name(dcfg)}
    curve: List[Dict] = []

    obs = env.reset()
    hidden = net.initial_hidden(env.n)
    pending = np.ones(env.n, dtype=bool)
    steps = 0
    for it in range(iterations):
        h0 = hidden.copy()
        xs, raw, resets, labels, targets, types = [], [], [], [], [], []
        for _ in range(window):
            x = normalizer.normalize(obs["student"])
            raw.append(obs["student"])
            xs.append(x)
            labels.append(label_with_teacher(teacher, obs))
            target, door_type = estimation_targets(obs["teacher"])
            targets.append(target)
            types.append(door_type)
            resets.append(pending.copy())
            h_in = hidden * (~pending)[:, None]
            action, _, hidden, _ = net.step(params, x, h_in)
            result = env.step(action.astype(np.float64))
            pending = result.done.copy()
            obs = {"teacher": result.teacher_obs, "student": result.student_obs}
        steps += per_iter

        actions, decoded, _, cache = net.forward_sequence(params, np.stack(xs), h0,
                                                          np.stack(resets))
        losses, d_actions, d_decoded = distill_losses(actions, decoded, np.stack(labels),
                                                      np.stack(targets), np.stack(types), dcfg,
                                                      scales)
        grads = net.backward_sequence(params, cache, d_actions, d_decoded, window=window)
        if not math.isfinite(losses.total) or not all_finite(grads.values()):
            raise TrainingDivergedError("student", steps, losses._asdict())
        grad_norm = clip_grad_norm(grads, dcfg.max_grad_norm)
        optimizer.step(params, grads)
        normalizer.update(np.concatenate(raw, axis=0))

        record = {"step": steps, "iteration": it, **losses._asdict(), "grad_norm": grad_norm,
                  "door_type_accuracy": door_type_accuracy(decoded, np.stack(types),
                                                           spec.estimation_dim)}
        store.append_jsonl(curve_name, record)
        curve.append(record)
        if (it + 1) % dcfg.checkpoint_every == 0 or it == iterations - 1:
            save_checkpoint(path, params, spec.to_dict(),
                            {**meta, "step": steps, "normalizer": normalizer.to_dict()})

    if params_digest(teacher.params) != teacher_digest:
        raise TrainingDivergedError("student", steps, {"teacher_digest": "изменился"})
    logger.info(f"Дистилляция завершена: {steps} шагов, имитация {curve[-1]['imitation']:.4f}")
    return StudentRunResult(path=path, steps=steps, curve=curve)
