"""Конфигурация эксперимента: секции-датаклассы, строгий разбор, хеш, переопределения"""
import dataclasses
import hashlib
import json
import math
from dataclasses import dataclass, field
from typing import Any, Dict, Iterable, List, Tuple

from .exceptions import ConfigError, InvalidRangeError

Range = Tuple[float, float]


@dataclass
class EnvConfig:
    num_envs: int = 256
    control_dt: float = 0.02  # 50 Гц
    substeps: int = 4  # физика 200 Гц
    episode_steps: int = 500  # 10 с
    layout_version: str = "obs-v1"
    # СКО шума студенческих наблюдений по полям
    noise: Dict[str, float] = field(default_factory=lambda: {
        "orientation": 0.05,
        "base_velocity": 0.05,
        "joint_pos": 0.05,
        "handle_pos": 0.02,
        "doorway_pos": 0.02,
        "doorway_dir": 0.01,
    })

    @property
    def physics_dt(self) -> float:
        return self.control_dt / self.substeps


@dataclass
class DoorConfig:
    theta_max_deg: float = 110.0
    unlatch_fraction: float = 0.8
    handle_inertia: float = 0.05
    panel_height: float = 2.0
    handle_standoff: float = 0.06
    handle_grasp_fraction: float = 0.75
    wall_thickness: float = 0.1
    wall_extent: float = 4.0
    wall_height: float = 2.5


@dataclass
class RobotConfig:
    link_lengths: Tuple[float, ...] = (0.10, 0.30, 0.30, 0.10, 0.08, 0.06)
    kp: Tuple[float, ...] = (50.0,) * 6
    kd: Tuple[float, ...] = (4.5,) * 6
    tau_limits: Tuple[float, ...] = (40.0, 40.0, 30.0, 20.0, 10.0, 10.0)
    q_default: Tuple[float, ...] = (0.0, -1.0, 2.0, -1.0, 0.0, 0.0)
    q_lower: Tuple[float, ...] = (-2.6, -2.0, -0.2, -2.0, -2.8, -2.8)
    q_upper: Tuple[float, ...] = (2.6, 1.5, 2.8, 2.0, 2.8, 2.8)
    qd_max: float = 10.0
    inertia: Tuple[float, ...] = (0.5, 0.5, 0.3, 0.1, 0.05, 0.02)
    action_scale: float = 0.5
    sigma: float = 0.7
    tau_loco: float = 0.3
    base_mass: float = 50.0
    base_height: float = 0.5
    mount_offset: Tuple[float, ...] = (0.2, 0.0, 0.6)
    tilt_per_newton: float = 0.002
    tilt_cap: float = 0.35
    grasp_zone: Tuple[float, ...] = (0.06, 0.03, 0.03)


@dataclass
class ContactConfig:
    k_g: float = 2000.0
    d_g: float = 50.0
    k_c: float = 5000.0
    d_c: float = 100.0
    r_b: float = 0.35
    r_e: float = 0.04
    r_thigh: float = 0.08
    grasp_release_factor: float = 1.5


@dataclass
class RewardConfig:
    theta_hat_deg: float = 75.0
    theta_enough_deg: float = 30.0
    theta_pass_deg: float = 70.0
    psi_bar_deg: float = 8.0
    v_max: float = 0.5
    open_scale: float = 3.0
    adp_scale: float = 0.5
    hg_scale: float = 0.5
    w_ma: float = 0.3
    w_pbt: float = 0.5
    w_psa: float = 1.0
    w_pcl: float = 0.1
    w_pc: float = 2.0
    ma_vel_coef: float = 0.01
    ma_acc_coef: float = 1e-6
    psa_reach: float = 0.6
    psa_ramp: float = 0.1
    action_limits: Tuple[float, ...] = (0.5, 0.5, 1.0, 2.0, 2.0, 2.0, 2.0, 2.0, 2.0)
    action_ramp_fraction: float = 0.5
    zone_radius: float = 1.5

    @property
    def theta_hat(self) -> float:
        return math.radians(self.theta_hat_deg)

    @property
    def theta_enough(self) -> float:
        return math.radians(self.theta_enough_deg)

    @property
    def theta_pass(self) -> float:
        return math.radians(self.theta_pass_deg)

    @property
    def psi_bar(self) -> float:
        return math.radians(self.psi_bar_deg)

    @property
    def action_ramps(self) -> Tuple[float, ...]:
        return tuple(self.action_ramp_fraction * a for a in self.action_limits)

    @property
    def r_hm_max(self) -> float:
        # максимумы слагаемых: r_ehd, r_th, r_eho = 1; r_hg = 1; r_plg = 0
        return 1.0 + 1.0 + 1.0 + self.hg_scale * 1.0 + 0.0

    @property
    def r_adp_max(self) -> float:
        return 2.0 + 2.0

    def r_o_max(self, is_pull: bool) -> float:
        base = self.open_scale * 1.0 + self.r_hm_max
        return base + (self.adp_scale * self.r_adp_max if is_pull else 0.0)


@dataclass
class RandomizationConfig:
    d_wall: Range = (1.0, 2.0)
    d_center: Range = (-2.0, 2.0)
    yaw_deg: Range = (-180.0, 180.0)
    v_init: Range = (-0.5, 0.5)
    mass: Range = (15.0, 75.0)
    tau_hinge: Range = (0.0, 30.0)
    tau_hinge_zero_prob: float = 0.2
    tau_handle: Range = (0.0, 3.0)
    tau_handle_zero_prob: float = 0.2
    k_ar: Range = (0.0, 4.0)
    alpha_dc: Range = (1.5, 3.0)
    damping_zero_prob: float = 0.4
    phi_max_deg: Range = (15.0, 90.0)
    kp: Range = (40.0, 60.0)
    kd: Range = (3.0, 6.0)
    d_w: Range = (0.8, 1.0)
    d_t: Range = (0.02, 0.06)
    h_l: Range = (0.08, 0.12)
    h_h: Range = (0.7, 1.3)
    h_o: Range = (0.03, 0.12)
    door_types: Tuple[int, ...] = (0, 1, 2, 3)


@dataclass
class PPOConfig:
    gamma: float = 0.99
    lam: float = 0.95
    clip: float = 0.2
    epochs: int = 5
    minibatches: int = 4
    rollout_steps: int = 50
    learning_rate: float = 3e-4
    value_coef: float = 0.5
    entropy_coef: float = 0.005
    max_grad_norm: float = 1.0
    total_steps: int = 10_000_000
    hidden_sizes: Tuple[int, ...] = (256, 160, 128)
    init_log_std: float = -0.5
    observation_set: str = "privileged"
    eval_every: int = 20
    eval_envs: int = 64
    checkpoint_every: int = 50


@dataclass
class DistillConfig:
    imitation_weight: float = 1.0
    estimation_weight: float = 0.5
    door_type_weight: float = 0.5
    window: int = 50
    learning_rate: float = 1e-3
    beta: float = 1.0
    total_steps: int = 5_000_000
    encoder_hidden: int = 256
    gru_hidden: int = 256
    max_grad_norm: float = 1.0
    no_estimation_loss: bool = False
    mlp_student: bool = False
    checkpoint_every: int = 50


@dataclass
class EvalConfig:
    num_envs: int = 512
    episodes_per_env: int = 4
    episode_steps: int = 500
    resistances: Tuple[float, ...] = (0.0, 10.0, 20.0, 30.0, 40.0, 50.0, 60.0)
    repeat_trials: int = 20
    export_episodes: int = 8
    seed_offset: int = 10_000


@dataclass
class ExperimentConfig:
    env: EnvConfig = field(default_factory=EnvConfig)
    door: DoorConfig = field(default_factory=DoorConfig)
    robot: RobotConfig = field(default_factory=RobotConfig)
    contact: ContactConfig = field(default_factory=ContactConfig)
    reward: RewardConfig = field(default_factory=RewardConfig)
    randomization: RandomizationConfig = field(default_factory=RandomizationConfig)
    ppo: PPOConfig = field(default_factory=PPOConfig)
    distill: DistillConfig = field(default_factory=DistillConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)
    seed: int = 0
    out_dir: str = "out"
    run_name: str = "run"


SECTIONS = {
    "env": EnvConfig,
    "door": DoorConfig,
    "robot": RobotConfig,
    "contact": ContactConfig,
    "reward": RewardConfig,
    "randomization": RandomizationConfig,
    "ppo": PPOConfig,
    "distill": DistillConfig,
    "eval": EvalConfig,
}
SCALARS = ("seed", "out_dir", "run_name")


def _coerce(section: str, name: str, default: Any, value: Any) -> Any:
    where = f"{section}.{name}"
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(where, "ожидалось логическое значение")
        return value
    if isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, (int, float)) or int(value) != value:
            raise ConfigError(where, "ожидалось целое число")
        return int(value)
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(where, "ожидалось число")
        return float(value)
    if isinstance(default, str):
        if not isinstance(value, str):
            raise ConfigError(where, "ожидалась строка")
        return value
    if isinstance(default, tuple):
        if not isinstance(value, (list, tuple)):
            raise ConfigError(where, "ожидался список")
        item_type = type(default[0]) if default else float
        try:
            return tuple(item_type(v) for v in value)
        except (TypeError, ValueError):
            raise ConfigError(where, "элементы списка некорректны")
    if isinstance(default, dict):
        if not isinstance(value, dict):
            raise ConfigError(where, "ожидался словарь")
        unknown = set(value) - set(default)
        if unknown:
            raise ConfigError(where, f"неизвестные ключи {sorted(unknown)}")
        merged = dict(default)
        for key, item in value.items():
            merged[key] = _coerce(where, key, default[key], item)
        return merged
    return value


def _section_from_dict(name: str, cls, data: Any):
    if not isinstance(data, dict):
        raise ConfigError(name, "секция должна быть словарём")
    defaults = cls()
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(name, f"неизвестные ключи {sorted(unknown)}")
    values = {}
    for f in dataclasses.fields(cls):
        if f.name in data:
            values[f.name] = _coerce(name, f.name, getattr(defaults, f.name), data[f.name])
    return dataclasses.replace(defaults, **values)


def config_from_dict(data: Dict) -> ExperimentConfig:
    if not isinstance(data, dict):
        raise ConfigError("<root>", "ожидался JSON-объект")
    unknown = set(data) - set(SECTIONS) - set(SCALARS)
    if unknown:
        raise ConfigError("<root>", f"неизвестные ключи {sorted(unknown)}")
    defaults = ExperimentConfig()
    values = {}
    for name, cls in SECTIONS.items():
        if name in data:
            values[name] = _section_from_dict(name, cls, data[name])
    for name in SCALARS:
        if name in data:
            values[name] = _coerce("<root>", name, getattr(defaults, name), data[name])
    cfg = dataclasses.replace(defaults, **values)
    validate_config(cfg)
    return cfg


def config_to_dict(cfg: ExperimentConfig) -> Dict:
    return json.loads(json.dumps(dataclasses.asdict(cfg)))


def dump_config(cfg: ExperimentConfig) -> str:
    return json.dumps(config_to_dict(cfg), indent=2, sort_keys=True) + "\n"


def load_config(path: str) -> ExperimentConfig:
    try:
        with open(path, 'r', encoding='utf-8') as f:
            data = json.load(f)
    except FileNotFoundError:
        raise ConfigError(path, "файл конфигурации не найден")
    except json.JSONDecodeError as e:
        raise ConfigError(path, f"ошибка JSON: {e}")
    return config_from_dict(data)


def config_hash(cfg: ExperimentConfig) -> str:
    """Хеш содержимого в стиле git (sha1 от 'blob <len>\\0<data>'); место вывода не входит"""
    data = {k: v for k, v in config_to_dict(cfg).items() if k not in ("out_dir", "run_name")}
    canonical = json.dumps(data, sort_keys=True, separators=(',', ':'))
    payload = canonical.encode('utf-8')
    return hashlib.sha1(b"blob %d\0" % len(payload) + payload).hexdigest()


def apply_overrides(cfg: ExperimentConfig, overrides: Iterable[str]) -> ExperimentConfig:
    """Применить переопределения вида section.key=value"""
    data = config_to_dict(cfg)
    for item in overrides:
        if '=' not in item:
            raise ConfigError(item, "ожидался формат section.key=value")
        path, raw = item.split('=', 1)
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        keys = path.strip().split('.')
        node = data
        for key in keys[:-1]:
            if not isinstance(node, dict) or key not in node:
                raise ConfigError(path, "неизвестный ключ")
            node = node[key]
        if not isinstance(node, dict) or keys[-1] not in node:
            raise ConfigError(path, "неизвестный ключ")
        node[keys[-1]] = value
    return config_from_dict(data)


def freeze_randomization(ranges: RandomizationConfig, names: Iterable[str]) -> RandomizationConfig:
    """Зафиксировать выбранные диапазоны в их середине (вероятности обнуления - в 0).

    У door_types середины нет: остаётся только первый тип списка
    (для полного списка это 0, pull-right).
    """
    values = {}
    known = {f.name for f in dataclasses.fields(RandomizationConfig)}
    for name in names:
        name = name.strip()
        if not name:
            continue
        if name not in known:
            raise ConfigError(f"randomization.{name}", "неизвестный параметр для --freeze")
        current = getattr(ranges, name)
        if name == "door_types":
            values[name] = current[:1]
        elif isinstance(current, tuple):
            mid = 0.5 * (current[0] + current[1])
            values[name] = (mid, mid)
        else:
            values[name] = 0.0
        zero_prob = f"{name}_zero_prob"
        if zero_prob in known:
            values[zero_prob] = 0.0
        if name in ("k_ar", "alpha_dc"):
            values["damping_zero_prob"] = 0.0
    return dataclasses.replace(ranges, **values)


def validate_ranges(ranges: RandomizationConfig):
    for f in dataclasses.fields(RandomizationConfig):
        value = getattr(ranges, f.name)
        if f.name == "door_types":
            if not value or any(t not in (0, 1, 2, 3) for t in value):
                raise ConfigError("randomization.door_types", "ожидались индексы 0..3")
        elif isinstance(value, tuple):
            lo, hi = value
            if not (math.isfinite(lo) and math.isfinite(hi)) or lo > hi:
                raise InvalidRangeError(f.name, lo, hi)
        elif not 0.0 <= value <= 1.0:
            raise ConfigError(f"randomization.{f.name}", "вероятность вне [0, 1]")


def validate_config(cfg: ExperimentConfig):
    validate_ranges(cfg.randomization)
    if cfg.env.num_envs < 1:
        raise ConfigError("env.num_envs", "должно быть ≥ 1")
    if cfg.env.substeps < 1 or cfg.env.control_dt <= 0:
        raise ConfigError("env.control_dt", "шаг и число подшагов должны быть положительны")
    if cfg.env.episode_steps < 1:
        raise ConfigError("env.episode_steps", "должно быть ≥ 1")
    if not 0.0 < cfg.ppo.clip < 1.0:
        raise ConfigError("ppo.clip", "ожидалось значение в (0, 1)")
    for name in ("gamma", "lam", "learning_rate", "max_grad_norm"):
        if getattr(cfg.ppo, name) <= 0:
            raise ConfigError(f"ppo.{name}", "должно быть положительным")
    if cfg.ppo.epochs < 1 or cfg.ppo.minibatches < 1 or cfg.ppo.rollout_steps < 1:
        raise ConfigError("ppo", "epochs, minibatches и rollout_steps должны быть ≥ 1")
    if cfg.ppo.observation_set not in ("privileged", "student", "student_noisy"):
        raise ConfigError("ppo.observation_set", "ожидалось privileged|student|student_noisy")
    if cfg.distill.window < 1:
        raise ConfigError("distill.window", "должно быть ≥ 1")
    for name in ("imitation_weight", "estimation_weight", "door_type_weight"):
        if getattr(cfg.distill, name) < 0:
            raise ConfigError(f"distill.{name}", "вес должен быть неотрицательным")
    robot_vectors: List[str] = ["link_lengths", "kp", "kd", "tau_limits", "q_default",
                                "q_lower", "q_upper", "inertia"]
    for name in robot_vectors:
        if len(getattr(cfg.robot, name)) != 6:
            raise ConfigError(f"robot.{name}", "ожидалось 6 значений")
    if len(cfg.reward.action_limits) != 9:
        raise ConfigError("reward.action_limits", "ожидалось 9 значений")
    if not 0 < cfg.door.unlatch_fraction <= 1:
        raise ConfigError("door.unlatch_fraction", "ожидалось значение в (0, 1]")
    if cfg.door.theta_max_deg <= cfg.reward.theta_pass_deg:
        raise ConfigError("door.theta_max_deg", "предел петли должен превышать угол прохода")
