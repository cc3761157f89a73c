"""Протоколы оценки: таблица успехов по типам дверей, развёртка сопротивления петли,
вероятности типа двери во времени, скрытые состояния ученика, повторяемость.
"""
import dataclasses
import json
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from prettytable import PrettyTable

from ..core.config import ExperimentConfig
from ..core.exceptions import ConfigError
from ..logging_config import get_logger
from ..learning.policies import EpisodeRecord, StudentPolicy, rollout_episodes
from ..sim.domain_rand import EpisodeSample, episode_stream, generate_door, sample_episode
from ..sim.door_model import DOOR_TYPE_NAMES, DoorDynamicsParams, DoorSpec, flip_side, \
    is_pull_type
from ..sim.env import ACTION_DIM, DoorPassEnv

logger = get_logger('eval')

Z_95 = 1.959963984540054
METRICS = ("opened_enough", "passed_through")
HIGH_RESISTANCE = 50.0
HIGH_RESISTANCE_MAX_PASS = 0.10


def wilson_interval(successes: int, total: int, z: float = Z_95) -> Tuple[float, float]:
    """Интервал Уилсона для доли успехов; при total = 0 - весь отрезок [0, 1]"""
    if total <= 0:
        return 0.0, 1.0
    p = successes / total
    denom = 1.0 + z * z / total
    center = (p + z * z / (2.0 * total)) / denom
    half = z * math.sqrt(p * (1.0 - p) / total + z * z / (4.0 * total * total)) / denom
    return max(0.0, center - half), min(1.0, center + half)


@dataclass(frozen=True)
class Rate:
    successes: int
    total: int

    @property
    def value(self) -> float:
        return self.successes / self.total if self.total else 0.0

    @property
    def interval(self) -> Tuple[float, float]:
        return wilson_interval(self.successes, self.total)

    @property
    def width(self) -> float:
        lo, hi = self.interval
        return hi - lo


def rate_of(records: Sequence[EpisodeRecord], metric: str) -> Rate:
    return Rate(sum(bool(getattr(r, metric)) for r in records), len(records))


@dataclass
class EvalProtocol:
    """Число сред, эпизодов и шагов оценки; сид оценки отделён от сида обучения"""
    num_envs: int = 512
    episodes_per_env: int = 4
    episode_steps: int = 500
    seed: int = 10_000
    tau_hinge: Optional[float] = None
    door_types: Optional[Tuple[int, ...]] = None
    metrics: Tuple[str, ...] = METRICS
    checkpoint: str = ""

    @classmethod
    def from_config(cls, cfg: ExperimentConfig, **overrides) -> 'EvalProtocol':
        e = cfg.eval
        protocol = cls(num_envs=e.num_envs, episodes_per_env=e.episodes_per_env,
                       episode_steps=e.episode_steps, seed=cfg.seed + e.seed_offset)
        return dataclasses.replace(protocol, **overrides)

    def experiment_config(self, cfg: ExperimentConfig) -> ExperimentConfig:
        ranges = cfg.randomization
        if self.tau_hinge is not None:
            ranges = dataclasses.replace(ranges, tau_hinge=(self.tau_hinge, self.tau_hinge),
                                         tau_hinge_zero_prob=0.0)
        if self.door_types is not None:
            ranges = dataclasses.replace(ranges, door_types=tuple(self.door_types))
        return dataclasses.replace(cfg, env=dataclasses.replace(cfg.env,
                                                                episode_steps=self.episode_steps),
                                   randomization=ranges)

    def to_dict(self) -> Dict:
        return json.loads(json.dumps(dataclasses.asdict(self)))


def load_protocol(path: str, cfg: ExperimentConfig) -> EvalProtocol:
    """JSON-файл с подмножеством полей EvalProtocol поверх значений из конфигурации"""
    try:
        with open(path, 'r', encoding='utf-8') as f:
            data = json.load(f)
    except FileNotFoundError:
        raise ConfigError(path, "файл протокола не найден")
    except json.JSONDecodeError as e:
        raise ConfigError(path, f"ошибка JSON: {e}")
    if not isinstance(data, dict):
        raise ConfigError(path, "протокол должен быть JSON-объектом")
    known = {f.name for f in dataclasses.fields(EvalProtocol)}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(path, f"неизвестные ключи протокола {sorted(unknown)}")
    for key in ("door_types", "metrics"):
        if data.get(key) is not None:
            data[key] = tuple(data[key])
    unknown_metrics = set(data.get("metrics", ())) - set(METRICS)
    if unknown_metrics:
        raise ConfigError(f"{path}:metrics", f"неизвестные метрики {sorted(unknown_metrics)}")
    return EvalProtocol.from_config(cfg, **data)


def make_eval_env(cfg: ExperimentConfig, protocol: EvalProtocol, policy=None, num_envs=None,
                  episode_hook=None) -> DoorPassEnv:
    # учитель, обученный на чистых студенческих наблюдениях, оценивается без шума
    noise = getattr(policy, "observation_set", "student_noisy") != "student"
    return DoorPassEnv(protocol.experiment_config(cfg),
                       num_envs=num_envs if num_envs is not None else protocol.num_envs,
                       seed=protocol.seed, student_noise=noise, episode_hook=episode_hook)


def _rate_row(label, records: Sequence[EpisodeRecord]) -> Dict:
    opened, passed = rate_of(records, "opened_enough"), rate_of(records, "passed_through")
    (open_lo, open_hi), (pass_lo, pass_hi) = opened.interval, passed.interval
    return {"label": label, "episodes": len(records),
            "open_rate": opened.value, "open_lo": open_lo, "open_hi": open_hi,
            "pass_rate": passed.value, "pass_lo": pass_lo, "pass_hi": pass_hi}


RATE_COLUMNS = ("episodes", "open_rate", "open_lo", "open_hi", "pass_rate", "pass_lo", "pass_hi")
GRID_HEADER = ("door_type",) + RATE_COLUMNS
SWEEP_HEADER = ("tau_hinge",) + RATE_COLUMNS


@dataclass
class GridResult:
    rows: List[Dict]
    records: List[EpisodeRecord] = field(default_factory=list)

    def csv_rows(self):
        return [[row["label"]] + [row[c] for c in RATE_COLUMNS] for row in self.rows]


def evaluate_grid(cfg: ExperimentConfig, policy, protocol: EvalProtocol) -> GridResult:
    env = make_eval_env(cfg, protocol, policy)
    records = rollout_episodes(env, policy, protocol.episodes_per_env)
    rows = []
    for index, name in enumerate(DOOR_TYPE_NAMES):
        subset = [r for r in records if r.door_type == index]
        if subset:
            rows.append(_rate_row(name, subset))
    rows.append(_rate_row("all", records))
    aborted = sum(r.nan_abort for r in records)
    if aborted:
        logger.warning(f"Оценка: {aborted} эпизодов прервано NaN-защитой")
    logger.info(f"Оценка: {len(records)} эпизодов, проход {rows[-1]['pass_rate']:.3f}")
    return GridResult(rows=rows, records=records)


def resistance_sweep(cfg: ExperimentConfig, policy, levels: Sequence[float],
                     protocol: EvalProtocol) -> List[Dict]:
    """Успехи при фиксированном сопротивлении петли; остальная рандомизация активна"""
    if not levels:
        raise ConfigError("sweep.resistances", "список уровней пуст")
    if any(not math.isfinite(lvl) or lvl < 0 for lvl in levels):
        raise ConfigError("sweep.resistances", "уровни должны быть конечными и ≥ 0")
    rows = []
    for level in levels:
        pinned = dataclasses.replace(protocol, tau_hinge=float(level))
        env = make_eval_env(cfg, pinned, policy)
        records = rollout_episodes(env, policy, pinned.episodes_per_env)
        row = _rate_row(float(level), records)
        rows.append(row)
        logger.info(f"Развёртка: {level} Н·м, открыто {row['open_rate']:.3f}, "
                    f"проход {row['pass_rate']:.3f}")
    return rows


def _check(name: str, passed: bool, detail: str) -> Dict:
    return {"name": name, "passed": bool(passed), "detail": detail}


def sweep_assertions(rows: Sequence[Dict], high_level: float = HIGH_RESISTANCE,
                     max_high_pass: float = HIGH_RESISTANCE_MAX_PASS) -> List[Dict]:
    ordered = sorted(rows, key=lambda r: r["label"])
    checks = []
    for a, b in zip(ordered, ordered[1:]):
        tolerance = max(a["pass_hi"] - a["pass_lo"], b["pass_hi"] - b["pass_lo"])
        checks.append(_check(
            f"monotone_pass_{a['label']:g}_{b['label']:g}",
            b["pass_rate"] <= a["pass_rate"] + tolerance,
            f"{b['pass_rate']:.4f} <= {a['pass_rate']:.4f} + {tolerance:.4f}"))
    for row in ordered:
        checks.append(_check(f"open_ge_pass_{row['label']:g}",
                             row["open_rate"] >= row["pass_rate"],
                             f"{row['open_rate']:.4f} >= {row['pass_rate']:.4f}"))
        if row["label"] > high_level:
            checks.append(_check(f"high_resistance_pass_{row['label']:g}",
                                 row["pass_rate"] <= max_high_pass,
                                 f"{row['pass_rate']:.4f} <= {max_high_pass}"))
    return checks


def grid_assertions(rows: Sequence[Dict]) -> List[Dict]:
    checks = []
    by_label = {row["label"]: row for row in rows}
    for row in rows:
        checks.append(_check(f"open_ge_pass_{row['label']}", row["open_rate"] >= row["pass_rate"],
                             f"{row['open_rate']:.4f} >= {row['pass_rate']:.4f}"))
    # зеркальные двери (та же сторона открывания, другая петля) - в пределах интервалов
    for opening in ("pull", "push"):
        right, left = by_label.get(f"{opening}-right"), by_label.get(f"{opening}-left")
        if right is None or left is None:
            continue
        tolerance = (right["pass_hi"] - right["pass_lo"]) + (left["pass_hi"] - left["pass_lo"])
        gap = abs(right["pass_rate"] - left["pass_rate"])
        checks.append(_check(f"hinge_symmetry_{opening}", gap <= tolerance,
                             f"|{right['pass_rate']:.4f} - {left['pass_rate']:.4f}| "
                             f"<= {tolerance:.4f}"))
    return checks


def entropy(probs: np.ndarray) -> np.ndarray:
    p = np.clip(np.asarray(probs, dtype=np.float64), 1e-12, 1.0)
    return -np.sum(p * np.log(p), axis=-1)


def _require_student(policy) -> StudentPolicy:
    if not isinstance(policy, StudentPolicy):
        raise ConfigError("ckpt", "экспорт требует чекпоинт ученика с декодером")
    return policy


@dataclass
class TypeProbTrace:
    header: Tuple[str, ...]
    rows: List[list]
    final_accuracy: float
    entropy_pre_contact: float
    entropy_end: float

    def summary(self) -> Dict:
        return {"episodes": len({(r[0], r[1]) for r in self.rows}),
                "final_accuracy": self.final_accuracy,
                "entropy_pre_contact": self.entropy_pre_contact,
                "entropy_end": self.entropy_end}


TYPE_PROB_HEADER = (("env", "episode", "t", "door_type")
                    + tuple(f"p_{name.replace('-', '_')}" for name in DOOR_TYPE_NAMES)
                    + tuple(f"a{k}" for k in range(ACTION_DIM)))


def export_type_probs(cfg: ExperimentConfig, policy, protocol: EvalProtocol,
                      episodes: int) -> TypeProbTrace:
    """Softmax по четырём типам двери на каждом шаге и выбранные действия"""
    student = _require_student(policy)
    env = make_eval_env(cfg, protocol, student, num_envs=episodes)
    rows: List[list] = []
    finished = np.zeros(env.n, dtype=bool)
    touched = np.zeros(env.n, dtype=bool)
    pre_contact: List[List[float]] = [[] for _ in range(env.n)]
    last: Dict[int, Tuple[int, int, float]] = {}

    def on_step(t, obs, result, pol):
        info = result.info
        probs = pol.door_type_probs()
        h = entropy(probs)
        contact = info["grasped"] | np.any(info["colliding"], axis=-1)
        for i in np.flatnonzero(~finished):
            door_type = int(info["door_type"][i])
            touched[i] |= contact[i]
            if not touched[i]:
                pre_contact[i].append(float(h[i]))
            rows.append([int(env.env_index[i]), int(info["episode"][i]), int(info["step"][i]) - 1,
                         door_type, *map(float, probs[i]), *map(float, pol.last_action[i])])
            last[int(i)] = (int(np.argmax(probs[i])), door_type, float(h[i]))
        finished[:] |= result.done

    rollout_episodes(env, student, 1, on_step=on_step)
    correct = [pred == true for pred, true, _ in last.values()]
    starts = [float(np.mean(v)) for v in pre_contact if v]
    ends = [h for _, _, h in last.values()]
    trace = TypeProbTrace(header=TYPE_PROB_HEADER, rows=rows,
                          final_accuracy=float(np.mean(correct)) if correct else 0.0,
                          entropy_pre_contact=float(np.mean(starts)) if starts else float('nan'),
                          entropy_end=float(np.mean(ends)) if ends else float('nan'))
    logger.info(f"Вероятности типа двери: {len(rows)} строк, "
                f"точность в конце {trace.final_accuracy:.3f}")
    return trace


def pca_2d(matrix: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Проекция на две главные компоненты; знак компоненты - по наибольшей по модулю координате"""
    x = np.asarray(matrix, dtype=np.float64)
    centered = x - x.mean(axis=0, keepdims=True)
    _, _, vt = np.linalg.svd(centered, full_matrices=False)
    components = vt[:2].copy()
    if components.shape[0] < 2:
        components = np.vstack([components, np.zeros((2 - components.shape[0], x.shape[1]))])
    for k in range(2):
        pivot = np.argmax(np.abs(components[k]))
        if components[k, pivot] < 0:
            components[k] = -components[k]
    return centered @ components.T, components


def linear_separability(points: np.ndarray, labels: np.ndarray) -> Optional[float]:
    """Точность линейного классификатора (наименьшие квадраты на ±1); None при одном классе"""
    labels = np.asarray(labels, dtype=bool)
    if labels.all() or not labels.any():
        return None
    design = np.hstack([np.asarray(points, dtype=np.float64), np.ones((len(points), 1))])
    target = np.where(labels, 1.0, -1.0)
    weights, *_ = np.linalg.lstsq(design, target, rcond=None)
    return float(np.mean((design @ weights > 0) == labels))


@dataclass
class HiddenExport:
    labels: np.ndarray  # (rows, 5): env, episode, t, door_type, is_pull
    hidden: np.ndarray
    projection: np.ndarray
    late_accuracy: Optional[float]

    @property
    def header(self) -> Tuple[str, ...]:
        return (("env", "episode", "t", "door_type", "is_pull", "pc1", "pc2")
                + tuple(f"h{k}" for k in range(self.hidden.shape[1])))

    def csv_rows(self):
        for label, proj, h in zip(self.labels, self.projection, self.hidden):
            yield [*map(int, label), float(proj[0]), float(proj[1]), *map(float, h)]


def export_hidden_states(cfg: ExperimentConfig, policy, protocol: EvalProtocol, episodes: int,
                         late_fraction: float = 0.2) -> HiddenExport:
    """Вход ячейки GRU на каждом шаге (на t = 0 - нулевое состояние) с метками"""
    student = _require_student(policy)
    env = make_eval_env(cfg, protocol, student, num_envs=episodes)
    finished = np.zeros(env.n, dtype=bool)
    labels: List[List[int]] = []
    hidden: List[np.ndarray] = []

    def on_step(t, obs, result, pol):
        info = result.info
        for i in np.flatnonzero(~finished):
            door_type = int(info["door_type"][i])
            labels.append([int(env.env_index[i]), int(info["episode"][i]),
                           int(info["step"][i]) - 1, door_type, int(is_pull_type(door_type))])
            hidden.append(pol.prev_hidden[i].astype(np.float64))
        finished[:] |= result.done

    rollout_episodes(env, student, 1, on_step=on_step)
    label_arr = np.asarray(labels, dtype=np.int64)
    matrix = np.vstack(hidden)
    projection, _ = pca_2d(matrix)
    horizon = max(int(label_arr[:, 2].max()) + 1, 1)
    late = label_arr[:, 2] >= int((1.0 - late_fraction) * horizon)
    accuracy = linear_separability(projection[late], label_arr[late, 4].astype(bool))
    logger.info(f"Скрытые состояния: {matrix.shape[0]} строк, разделимость push/pull "
                f"в конце эпизода {accuracy}")
    return HiddenExport(labels=label_arr, hidden=matrix, projection=projection,
                        late_accuracy=accuracy)


def fixed_door_hook(cfg: ExperimentConfig, spec: DoorSpec, params: DoorDynamicsParams):
    """Хук эпизода: одна и та же дверь, на нечётных эпизодах - с другой стороны стены"""
    geometry = {k: float(getattr(spec, k)) for k in ("d_w", "d_t", "h_l", "h_h", "h_o")}
    base_type = int(spec.door_type)

    def hook(env_index: int, episode: int, sample: EpisodeSample) -> EpisodeSample:
        door_type = base_type if episode % 2 == 0 else flip_side(base_type)
        door = generate_door({"door_type": door_type, **geometry}, cfg.door)
        return dataclasses.replace(sample, spec=door, params=params)

    return hook


def repeatability(cfg: ExperimentConfig, policy, protocol: EvalProtocol, n_per_side: int,
                  door: Optional[Tuple[DoorSpec, DoorDynamicsParams]] = None) -> Dict:
    """Серия испытаний на одной двери, стороны чередуются"""
    if n_per_side < 1:
        raise ConfigError("eval.repeat_trials", "должно быть ≥ 1")
    if door is None:
        sample = sample_episode(episode_stream(protocol.seed, 0, 0),
                                protocol.experiment_config(cfg).randomization, cfg.door,
                                cfg.robot)
        door = (sample.spec, sample.params)
    spec, params = door
    env = make_eval_env(cfg, protocol, policy, num_envs=1,
                        episode_hook=fixed_door_hook(cfg, spec, params))
    records = rollout_episodes(env, policy, 2 * n_per_side)
    sides = []
    for door_type in (int(spec.door_type), flip_side(int(spec.door_type))):
        subset = [r for r in records if r.door_type == door_type]
        sides.append({"door_type": DOOR_TYPE_NAMES[door_type], "trials": len(subset),
                      "opened": sum(r.opened_enough for r in subset),
                      "passed": sum(r.passed_through for r in subset)})
    passed = sum(s["passed"] for s in sides)
    return {"sides": sides, "trials": len(records),
            "opened": sum(s["opened"] for s in sides), "passed": passed,
            "rate": passed / len(records) if records else 0.0}


def summary_table(header: Sequence[str], rows: Sequence[Sequence], title: str = "") -> str:
    """Текстовая таблица для консоли и summary.txt"""
    table = PrettyTable()
    table.field_names = list(header)
    for row in rows:
        table.add_row([f"{v:.3f}" if isinstance(v, float) else v for v in row])
    table.align = "r"
    table.align[header[0]] = "l"
    return (title + "\n" if title else "") + table.get_string()
