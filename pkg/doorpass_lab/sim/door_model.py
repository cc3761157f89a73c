"""Модель двери: петля и ручка (2 степени свободы), защёлка, преднатяг, демпфирование.

Система координат стены: начало в центре проёма на полу, ось x направлена
сквозь проём (сторона старта робота x < 0), ось z вверх. Поля спецификаций и
состояний могут быть скалярами или массивами по пакету сред.
"""
import math
from dataclasses import dataclass, replace
from enum import Enum, IntEnum
from typing import Dict, NamedTuple, Tuple

import numpy as np

from ..core.exceptions import NumericalError
from .geometry import dot, norm, rotate_z, scale, vec3

DEFAULT_THETA_MAX = math.radians(110.0)
DEFAULT_PANEL_HEIGHT = 2.0


class OpeningDir(str, Enum):
    PUSH = "push"
    PULL = "pull"


class HingeSide(str, Enum):
    LEFT = "left"
    RIGHT = "right"


class Zone(IntEnum):
    NONE = 0
    Z1 = 1
    Z2 = 2


# индекс типа двери: 0 pull-right, 1 pull-left, 2 push-right, 3 push-left
DOOR_TYPES: Tuple[Tuple[OpeningDir, HingeSide], ...] = (
    (OpeningDir.PULL, HingeSide.RIGHT),
    (OpeningDir.PULL, HingeSide.LEFT),
    (OpeningDir.PUSH, HingeSide.RIGHT),
    (OpeningDir.PUSH, HingeSide.LEFT),
)
DOOR_TYPE_NAMES = tuple(f"{o.value}-{h.value}" for o, h in DOOR_TYPES)

DOOR_CONFIG_KEYS = ("opening_dir", "hinge_side", "d_w", "d_t", "h_l", "h_h", "h_o",
                    "mass", "tau_hinge", "tau_handle", "k_ar", "alpha_dc", "phi_max")


def door_type_index(opening_dir, hinge_side) -> int:
    key = (OpeningDir(opening_dir), HingeSide(hinge_side))
    return DOOR_TYPES.index(key)


def is_pull_type(door_type):
    return np.asarray(door_type) < 2


def flip_side(door_type: int) -> int:
    """Та же дверь, увиденная с другой стороны стены: push-right <-> pull-left"""
    opening, hinge = DOOR_TYPES[int(door_type)]
    other_opening = OpeningDir.PUSH if opening is OpeningDir.PULL else OpeningDir.PULL
    other_hinge = HingeSide.LEFT if hinge is HingeSide.RIGHT else HingeSide.RIGHT
    return door_type_index(other_opening, other_hinge)


@dataclass(frozen=True, eq=False)
class DoorSpec:
    door_type: object
    d_w: object
    d_t: object
    h_l: object
    h_h: object
    h_o: object
    panel_height: float = DEFAULT_PANEL_HEIGHT
    theta_max: float = DEFAULT_THETA_MAX
    wall_x: object = 0.0
    wall_y: object = 0.0
    wall_yaw: object = 0.0
    handle_standoff: float = 0.06
    grasp_fraction: float = 0.75
    wall_thickness: float = 0.1
    wall_extent: float = 4.0
    wall_height: float = 2.5

    @classmethod
    def make(cls, opening_dir="push", hinge_side="right", d_w=0.9, d_t=0.04, h_l=0.1,
             h_h=1.0, h_o=0.075, **kwargs) -> 'DoorSpec':
        return cls(door_type=door_type_index(opening_dir, hinge_side), d_w=d_w, d_t=d_t,
                   h_l=h_l, h_h=h_h, h_o=h_o, **kwargs)

    @property
    def opening_dir(self) -> OpeningDir:
        return DOOR_TYPES[int(self.door_type)][0]

    @property
    def hinge_side(self) -> HingeSide:
        return DOOR_TYPES[int(self.door_type)][1]

    @property
    def swing_sign(self):
        """+1 для push (панель уходит на дальнюю сторону), -1 для pull"""
        return np.where(np.asarray(self.door_type) >= 2, 1.0, -1.0)

    @property
    def hinge_sign(self):
        """+1 для правой петли (y > 0), -1 для левой"""
        return np.where(np.asarray(self.door_type) % 2 == 0, 1.0, -1.0)

    @property
    def is_pull(self):
        return is_pull_type(self.door_type)

    def select(self, index) -> 'DoorSpec':
        """Срез пакетной спецификации"""
        fields = {}
        for name in self.__dataclass_fields__:
            value = getattr(self, name)
            fields[name] = value[index] if isinstance(value, np.ndarray) and value.ndim else value
        return replace(self, **fields)


@dataclass(frozen=True, eq=False)
class DoorDynamicsParams:
    mass: object
    tau_hinge: object
    tau_handle: object
    k_ar: object
    k_dc: object
    phi_max: object
    phi_u: object
    i_theta: object
    i_phi: object = 0.05

    @classmethod
    def make(cls, mass, tau_hinge, tau_handle, k_ar, alpha_dc, phi_max, d_w,
             unlatch_fraction: float = 0.8, handle_inertia: float = 0.05) -> 'DoorDynamicsParams':
        return cls(mass=mass, tau_hinge=tau_hinge, tau_handle=tau_handle, k_ar=k_ar,
                   k_dc=np.asarray(alpha_dc) * np.asarray(tau_hinge),
                   phi_max=phi_max, phi_u=unlatch_fraction * np.asarray(phi_max),
                   i_theta=hinge_inertia(mass, d_w), i_phi=handle_inertia)

    def select(self, index) -> 'DoorDynamicsParams':
        fields = {}
        for name in self.__dataclass_fields__:
            value = getattr(self, name)
            fields[name] = value[index] if isinstance(value, np.ndarray) and value.ndim else value
        return replace(self, **fields)


@dataclass(eq=False)
class DoorState:
    theta: np.ndarray
    theta_dot: np.ndarray
    phi: np.ndarray
    phi_dot: np.ndarray
    latched: np.ndarray

    @classmethod
    def closed(cls, n: int = 1) -> 'DoorState':
        return cls(theta=np.zeros(n), theta_dot=np.zeros(n), phi=np.zeros(n),
                   phi_dot=np.zeros(n), latched=np.ones(n, dtype=bool))

    def copy(self) -> 'DoorState':
        return DoorState(np.array(self.theta, dtype=np.float64),
                         np.array(self.theta_dot, dtype=np.float64),
                         np.array(self.phi, dtype=np.float64),
                         np.array(self.phi_dot, dtype=np.float64),
                         np.array(self.latched, dtype=bool))


class HandleKinematics(NamedTuple):
    point: np.ndarray       # точка захвата h
    axis: np.ndarray        # ось вращения ручки (внутрь панели со стороны робота)
    lever_dir: np.ndarray   # направление рычага от оси к концу
    d_theta: np.ndarray     # dh/dθ
    d_phi: np.ndarray       # dh/dφ


class Slab(NamedTuple):
    center: np.ndarray
    axes: Tuple[np.ndarray, np.ndarray, np.ndarray]
    half_extents: Tuple[object, object, object]

    @property
    def normal(self) -> np.ndarray:
        return self.axes[1]


def hinge_inertia(m, d_w):
    m = np.asarray(m, dtype=np.float64)
    d_w = np.asarray(d_w, dtype=np.float64)
    if np.any(m <= 0) or np.any(d_w <= 0):
        raise ValueError("Масса и ширина панели должны быть положительными")
    result = m * d_w ** 2 / 3.0
    return float(result) if result.ndim == 0 else result


def _resist(applied, resistance, at_rest):
    """Преднатяг: у упора работает как трение покоя"""
    applied = np.asarray(applied, dtype=np.float64)
    free = applied - resistance
    return np.where(at_rest, np.where(applied > resistance, free, 0.0), free)


def net_torques(state: DoorState, params: DoorDynamicsParams, applied_hinge, applied_handle):
    theta_rest = (np.asarray(state.theta) <= 0.0) & (np.asarray(state.theta_dot) == 0.0)
    phi_rest = (np.asarray(state.phi) <= 0.0) & (np.asarray(state.phi_dot) == 0.0)
    theta_dot = np.asarray(state.theta_dot, dtype=np.float64)
    damping = params.k_dc * theta_dot + params.k_ar * theta_dot * np.abs(theta_dot)
    hinge = np.where(theta_rest,
                     _resist(applied_hinge, params.tau_hinge, True),
                     _resist(applied_hinge, params.tau_hinge, False) - damping)
    handle = _resist(applied_handle, params.tau_handle, phi_rest)
    return hinge, handle


def resistive_torques(state: DoorState, params: DoorDynamicsParams):
    """Текущие моменты сопротивления (преднатяг + демпфирование) для наблюдений"""
    theta_dot = np.asarray(state.theta_dot, dtype=np.float64)
    hinge = params.tau_hinge + params.k_dc * theta_dot + params.k_ar * theta_dot * np.abs(theta_dot)
    handle = params.tau_handle + 0.0 * np.asarray(state.phi)
    return hinge, handle


def _check_finite(**values):
    for name, value in values.items():
        if not np.all(np.isfinite(value)):
            raise NumericalError(name)


def step_door(state: DoorState, spec: DoorSpec, params: DoorDynamicsParams,
              applied_hinge, applied_handle, dt: float) -> DoorState:
    """Полунеявный Эйлер: сначала ручка и защёлка, затем петля"""
    if dt <= 0:
        raise ValueError("Шаг интегрирования должен быть положительным")
    _check_finite(theta=state.theta, theta_dot=state.theta_dot, phi=state.phi,
                  phi_dot=state.phi_dot, applied_hinge=applied_hinge,
                  applied_handle=applied_handle)

    theta_rest = (np.asarray(state.theta) <= 0.0) & (np.asarray(state.theta_dot) == 0.0)
    phi_rest = (np.asarray(state.phi) <= 0.0) & (np.asarray(state.phi_dot) == 0.0)

    # ручка
    handle_drive = _resist(applied_handle, params.tau_handle, phi_rest)
    phi_dot = state.phi_dot + dt * handle_drive / params.i_phi
    phi = state.phi + dt * phi_dot
    phi_dot = np.where((phi <= 0.0) & (phi_dot < 0.0), 0.0, phi_dot)
    phi_dot = np.where((phi >= params.phi_max) & (phi_dot > 0.0), 0.0, phi_dot)
    phi = np.clip(phi, 0.0, params.phi_max)

    turned = (np.asarray(state.phi) >= params.phi_u) | (phi >= params.phi_u)
    latched = np.asarray(state.latched, dtype=bool) & ~turned

    # петля: вместо явного шага демпфирование берётся линейно-неявно
    # (квадратичный член линеаризован по старой скорости); знак скорости не меняется
    hinge_drive = _resist(applied_hinge, params.tau_hinge, theta_rest)
    damping = params.k_dc + params.k_ar * np.abs(state.theta_dot)
    theta_dot = (state.theta_dot + dt * hinge_drive / params.i_theta) \
        / (1.0 + dt * damping / params.i_theta)
    theta = state.theta + dt * theta_dot
    theta = np.where(latched, 0.0, theta)
    theta_dot = np.where(latched, 0.0, theta_dot)
    theta_dot = np.where((theta <= 0.0) & (theta_dot < 0.0), 0.0, theta_dot)
    theta_dot = np.where((theta >= spec.theta_max) & (theta_dot > 0.0), 0.0, theta_dot)
    theta = np.clip(theta, 0.0, spec.theta_max)

    relatch = ~latched & (theta <= 0.0) & (phi < params.phi_u)
    latched = latched | relatch
    theta_dot = np.where(relatch, 0.0, theta_dot)

    return DoorState(theta=theta, theta_dot=theta_dot, phi=phi, phi_dot=phi_dot,
                     latched=latched)


# --- геометрия ---
def _to_world(spec: DoorSpec, v: np.ndarray, is_point: bool) -> np.ndarray:
    out = rotate_z(v, spec.wall_yaw)
    if is_point:
        out = out + vec3(spec.wall_x, spec.wall_y, 0.0)
    return out


def _to_wall(spec: DoorSpec, p: np.ndarray) -> np.ndarray:
    return rotate_z(p - vec3(spec.wall_x, spec.wall_y, 0.0), -np.asarray(spec.wall_yaw))


def _panel_basis(spec: DoorSpec, theta):
    """u - от петли к свободной кромке, n - нормаль в сторону распахивания (= du/dθ)"""
    so, sh = spec.swing_sign, spec.hinge_sign
    theta = np.asarray(theta, dtype=np.float64)
    u = vec3(so * np.sin(theta), -sh * np.cos(theta), 0.0)
    n = vec3(so * np.cos(theta), sh * np.sin(theta), 0.0)
    return u, n


def hinge_point(spec: DoorSpec) -> np.ndarray:
    return _to_world(spec, vec3(0.0, spec.hinge_sign * np.asarray(spec.d_w) / 2.0, 0.0), True)


def hinge_axis(spec: DoorSpec) -> np.ndarray:
    """Ось петли: поворот на dθ > 0 открывает дверь"""
    return vec3(0.0, 0.0, spec.swing_sign * spec.hinge_sign)


def handle_kinematics(spec: DoorSpec, state: DoorState) -> HandleKinematics:
    u, n = _panel_basis(spec, state.theta)
    z = vec3(0.0, 0.0, 1.0)
    phi = np.asarray(state.phi, dtype=np.float64)
    rho = spec.grasp_fraction * np.asarray(spec.h_l)
    # при φ=0 точка захвата в h_O от свободной кромки; ось рычага дальше от петли на rho
    along = np.asarray(spec.d_w) - np.asarray(spec.h_o) + rho
    # ручка на грани, обращённой к стороне старта
    face = -spec.swing_sign * (np.asarray(spec.d_t) / 2.0 + spec.handle_standoff)

    hinge_wall = vec3(0.0, spec.hinge_sign * np.asarray(spec.d_w) / 2.0, 0.0)
    pivot = hinge_wall + scale(u, along) + scale(n, face) + scale(z, spec.h_h)
    lever = scale(u, -np.cos(phi)) - scale(z, np.sin(phi))
    point = pivot + scale(lever, rho)
    d_theta = scale(n, along - rho * np.cos(phi)) - scale(u, face)
    d_phi = scale(u, rho * np.sin(phi)) - scale(z, rho * np.cos(phi))
    axis = scale(n, spec.swing_sign)
    return HandleKinematics(point=_to_world(spec, point, True),
                            axis=_to_world(spec, axis, False),
                            lever_dir=_to_world(spec, lever, False),
                            d_theta=_to_world(spec, d_theta, False),
                            d_phi=_to_world(spec, d_phi, False))


def handle_world_pose(spec: DoorSpec, state: DoorState):
    kin = handle_kinematics(spec, state)
    return kin.point, kin.axis


def doorway_frame(spec: DoorSpec):
    center = vec3(spec.wall_x, spec.wall_y, spec.panel_height / 2.0)
    yaw = np.asarray(spec.wall_yaw, dtype=np.float64)
    through = vec3(np.cos(yaw), np.sin(yaw), 0.0)
    return center, through


def panel_geometry(spec: DoorSpec, state: DoorState) -> Slab:
    u, n = _panel_basis(spec, state.theta)
    hinge_wall = vec3(0.0, spec.hinge_sign * np.asarray(spec.d_w) / 2.0, spec.panel_height / 2.0)
    center = hinge_wall + scale(u, np.asarray(spec.d_w) / 2.0)
    axes = (_to_world(spec, u, False), _to_world(spec, n, False),
            _to_world(spec, vec3(0.0, 0.0, 1.0) + 0.0 * u, False))
    half = (np.asarray(spec.d_w) / 2.0, np.asarray(spec.d_t) / 2.0, spec.panel_height / 2.0)
    return Slab(center=_to_world(spec, center, True), axes=axes, half_extents=half)


def wall_slabs(spec: DoorSpec) -> Tuple[Slab, ...]:
    """Неподвижная стена: две боковые части и перемычка над проёмом"""
    d_w = np.asarray(spec.d_w, dtype=np.float64)
    t = spec.wall_thickness / 2.0
    one, zero = np.ones_like(d_w), np.zeros_like(d_w)
    axes = (_to_world(spec, vec3(one, zero, zero), False),
            _to_world(spec, vec3(zero, one, zero), False),
            vec3(zero, zero, one))
    half_h = spec.wall_height / 2.0
    side_offset = d_w / 2.0 + spec.wall_extent / 2.0
    slabs = []
    for sign in (1.0, -1.0):
        center = _to_world(spec, vec3(0.0, sign * side_offset, half_h), True)
        slabs.append(Slab(center, axes, (t, spec.wall_extent / 2.0, half_h)))
    lintel_half = (spec.wall_height - spec.panel_height) / 2.0
    lintel_center = _to_world(spec, vec3(0.0, 0.0 * d_w, spec.panel_height + lintel_half), True)
    slabs.append(Slab(lintel_center, axes, (t, d_w / 2.0, lintel_half)))
    return tuple(slabs)


def zone_membership(point: np.ndarray, spec: DoorSpec, state: DoorState, radius: float = 1.5):
    """Зоны обхода тянущей двери: Z2 - за плоскостью стены, Z1 - в заметённом секторе"""
    p = _to_wall(spec, np.asarray(point, dtype=np.float64))
    past_wall = p[..., 0] > 0.0

    u0, n0 = _panel_basis(spec, 0.0 * np.asarray(state.theta))
    rel = p - vec3(0.0, spec.hinge_sign * np.asarray(spec.d_w) / 2.0, 0.0)
    rel = rel * np.array([1.0, 1.0, 0.0])
    angle = np.arctan2(dot(rel, n0), dot(rel, u0))
    flat = p * np.array([1.0, 1.0, 0.0])
    in_sector = (angle >= 0.0) & (angle <= state.theta) & (norm(flat) <= radius)
    z1 = ~past_wall & in_sector

    zone = np.where(past_wall, int(Zone.Z2), np.where(z1, int(Zone.Z1), int(Zone.NONE)))
    return np.where(spec.is_pull, zone, int(Zone.NONE))


def behind_panel(point: np.ndarray, spec: DoorSpec, state: DoorState, radius: float = 1.5):
    return zone_membership(point, spec, state, radius) != int(Zone.NONE)


# --- сериализация ---
def door_to_config(spec: DoorSpec, params: DoorDynamicsParams) -> Dict:
    tau = float(params.tau_hinge)
    return {
        "opening_dir": spec.opening_dir.value,
        "hinge_side": spec.hinge_side.value,
        "d_w": float(spec.d_w),
        "d_t": float(spec.d_t),
        "h_l": float(spec.h_l),
        "h_h": float(spec.h_h),
        "h_o": float(spec.h_o),
        "mass": float(params.mass),
        "tau_hinge": tau,
        "tau_handle": float(params.tau_handle),
        "k_ar": float(params.k_ar),
        "alpha_dc": float(params.k_dc) / tau if tau > 0 else 0.0,
        "phi_max": float(params.phi_max),
    }


def door_from_config(data: Dict, theta_max: float = DEFAULT_THETA_MAX,
                     unlatch_fraction: float = 0.8, handle_inertia: float = 0.05):
    missing = set(DOOR_CONFIG_KEYS) - set(data)
    unknown = set(data) - set(DOOR_CONFIG_KEYS)
    if missing or unknown:
        raise ValueError(f"Ключи двери: нет {sorted(missing)}, лишние {sorted(unknown)}")
    spec = DoorSpec.make(data["opening_dir"], data["hinge_side"], d_w=float(data["d_w"]),
                         d_t=float(data["d_t"]), h_l=float(data["h_l"]),
                         h_h=float(data["h_h"]), h_o=float(data["h_o"]), theta_max=theta_max)
    params = DoorDynamicsParams.make(mass=float(data["mass"]),
                                     tau_hinge=float(data["tau_hinge"]),
                                     tau_handle=float(data["tau_handle"]),
                                     k_ar=float(data["k_ar"]),
                                     alpha_dc=float(data["alpha_dc"]),
                                     phi_max=float(data["phi_max"]), d_w=float(data["d_w"]),
                                     unlatch_fraction=unlatch_fraction,
                                     handle_inertia=handle_inertia)
    return spec, params
