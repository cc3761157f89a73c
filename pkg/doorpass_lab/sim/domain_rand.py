"""Рандомизация эпизодов: геометрия и динамика двери, начальное положение робота, усиления руки.

Каждый эпизод каждой среды получает собственный счётчиковый поток
(Philox, ключ - seed, индекс среды, номер эпизода, назначение), поэтому выборка
среды i не зависит от числа соседних сред.
"""
import math
from dataclasses import dataclass
from typing import Dict

import numpy as np

from ..core.config import DoorConfig, RandomizationConfig, RobotConfig, validate_ranges
from .door_model import DoorDynamicsParams, DoorSpec

PURPOSE_EPISODE = 0
PURPOSE_NOISE = 1
PURPOSE_POLICY = 2


@dataclass(eq=False)
class EpisodeSample:
    spec: DoorSpec
    params: DoorDynamicsParams
    base_x: float
    base_y: float
    base_yaw: float
    base_vx: float
    base_vy: float
    kp: np.ndarray
    kd: np.ndarray
    d_wall: float
    d_center: float

    def to_dict(self) -> Dict:
        return {
            "door_type": int(self.spec.door_type),
            "d_w": float(self.spec.d_w), "d_t": float(self.spec.d_t),
            "h_l": float(self.spec.h_l), "h_h": float(self.spec.h_h),
            "h_o": float(self.spec.h_o),
            "mass": float(self.params.mass), "tau_hinge": float(self.params.tau_hinge),
            "tau_handle": float(self.params.tau_handle), "k_ar": float(self.params.k_ar),
            "k_dc": float(self.params.k_dc), "phi_max": float(self.params.phi_max),
            "base_x": self.base_x, "base_y": self.base_y, "base_yaw": self.base_yaw,
            "base_vx": self.base_vx, "base_vy": self.base_vy,
            "kp": [float(v) for v in self.kp], "kd": [float(v) for v in self.kd],
        }


def episode_stream(seed: int, env_index: int, episode: int,
                   purpose: int = PURPOSE_EPISODE) -> np.random.Generator:
    sequence = np.random.SeedSequence([int(seed), int(env_index), int(episode), int(purpose)])
    return np.random.Generator(np.random.Philox(sequence))


def _uniform(rng: np.random.Generator, bounds, size=None):
    lo, hi = bounds
    return rng.uniform(lo, hi, size=size)


def _zero_mixture(rng: np.random.Generator, bounds, zero_prob: float) -> float:
    # оба числа тянутся всегда: порядок потока не зависит от исхода
    coin = rng.random()
    value = float(_uniform(rng, bounds))
    return 0.0 if coin < zero_prob else value


def generate_door(draw: Dict, door_cfg: DoorConfig = None) -> DoorSpec:
    """Собрать спецификацию двери из выбранных размеров и типа"""
    door_cfg = door_cfg or DoorConfig()
    return DoorSpec(door_type=int(draw["door_type"]), d_w=float(draw["d_w"]),
                    d_t=float(draw["d_t"]), h_l=float(draw["h_l"]), h_h=float(draw["h_h"]),
                    h_o=float(draw["h_o"]), panel_height=door_cfg.panel_height,
                    theta_max=math.radians(door_cfg.theta_max_deg),
                    handle_standoff=door_cfg.handle_standoff,
                    grasp_fraction=door_cfg.handle_grasp_fraction,
                    wall_thickness=door_cfg.wall_thickness, wall_extent=door_cfg.wall_extent,
                    wall_height=door_cfg.wall_height)


def sample_episode(rng: np.random.Generator, ranges: RandomizationConfig,
                   door_cfg: DoorConfig = None, robot_cfg: RobotConfig = None) -> EpisodeSample:
    door_cfg = door_cfg or DoorConfig()
    robot_cfg = robot_cfg or RobotConfig()

    types = ranges.door_types
    draw = {"door_type": types[int(rng.integers(len(types)))]}
    for name in ("d_w", "d_t", "h_l", "h_h", "h_o"):
        draw[name] = float(_uniform(rng, getattr(ranges, name)))
    spec = generate_door(draw, door_cfg)

    mass = float(_uniform(rng, ranges.mass))
    tau_hinge = _zero_mixture(rng, ranges.tau_hinge, ranges.tau_hinge_zero_prob)
    tau_handle = _zero_mixture(rng, ranges.tau_handle, ranges.tau_handle_zero_prob)
    k_ar = float(_uniform(rng, ranges.k_ar))
    alpha = float(_uniform(rng, ranges.alpha_dc))
    if rng.random() < ranges.damping_zero_prob:
        k_ar, alpha = 0.0, 0.0
    phi_max = math.radians(float(_uniform(rng, ranges.phi_max_deg)))
    params = DoorDynamicsParams.make(mass=mass, tau_hinge=tau_hinge, tau_handle=tau_handle,
                                     k_ar=k_ar, alpha_dc=alpha, phi_max=phi_max, d_w=spec.d_w,
                                     unlatch_fraction=door_cfg.unlatch_fraction,
                                     handle_inertia=door_cfg.handle_inertia)

    kp = _uniform(rng, ranges.kp, size=len(robot_cfg.kp))
    kd = _uniform(rng, ranges.kd, size=len(robot_cfg.kd))

    d_wall = float(_uniform(rng, ranges.d_wall))
    d_center = float(_uniform(rng, ranges.d_center))
    yaw = math.radians(float(_uniform(rng, ranges.yaw_deg)))
    vx = float(_uniform(rng, ranges.v_init))
    vy = float(_uniform(rng, ranges.v_init))

    # стена в начале координат; робот на стороне старта (x < 0), рыскание 0 - лицом в проём
    return EpisodeSample(spec=spec, params=params, base_x=-d_wall, base_y=d_center,
                         base_yaw=float(spec.wall_yaw) + yaw, base_vx=vx, base_vy=vy,
                         kp=kp, kd=kd, d_wall=d_wall, d_center=d_center)


class DomainRandomizer:
    """Фабрика эпизодов с проверкой диапазонов при создании"""

    def __init__(self, ranges: RandomizationConfig, seed: int = 0,
                 door_cfg: DoorConfig = None, robot_cfg: RobotConfig = None):
        validate_ranges(ranges)
        self.ranges = ranges
        self.seed = int(seed)
        self.door_cfg = door_cfg or DoorConfig()
        self.robot_cfg = robot_cfg or RobotConfig()

    def stream(self, env_index: int, episode: int, purpose: int = PURPOSE_EPISODE):
        return episode_stream(self.seed, env_index, episode, purpose)

    def sample_episode(self, env_index: int, episode: int) -> EpisodeSample:
        return sample_episode(self.stream(env_index, episode), self.ranges, self.door_cfg,
                              self.robot_cfg)
