"""Упрощённый шагающий манипулятор: база со слежением за скоростью и 6-звенная рука с ПД"""
from dataclasses import dataclass, replace
from typing import NamedTuple

import numpy as np

from ..core.config import RobotConfig
from ..core.exceptions import NumericalError
from .geometry import cross, matmul3, matvec3, norm, rot_x, rot_y, rot_z, rotate_z, vec3

MAX_LINEAR_SPEED = 0.5
MAX_YAW_RATE = 1.0
DEADBAND = 0.1


@dataclass(frozen=True, eq=False)
class ArmParams:
    link_lengths: np.ndarray
    q_lower: np.ndarray
    q_upper: np.ndarray
    tau_limits: np.ndarray
    kp: np.ndarray
    kd: np.ndarray
    q_default: np.ndarray
    inertia: np.ndarray
    mount_offset: np.ndarray
    action_scale: float = 0.5
    sigma: float = 0.7
    qd_max: float = 10.0
    tau_loco: float = 0.3
    base_mass: float = 50.0
    base_height: float = 0.5
    tilt_per_newton: float = 0.002
    tilt_cap: float = 0.35
    grasp_zone: np.ndarray = None

    @classmethod
    def from_config(cls, cfg: RobotConfig) -> 'ArmParams':
        arr = lambda values: np.asarray(values, dtype=np.float64)  # noqa: E731
        return cls(link_lengths=arr(cfg.link_lengths), q_lower=arr(cfg.q_lower),
                   q_upper=arr(cfg.q_upper), tau_limits=arr(cfg.tau_limits), kp=arr(cfg.kp),
                   kd=arr(cfg.kd), q_default=arr(cfg.q_default), inertia=arr(cfg.inertia),
                   mount_offset=arr(cfg.mount_offset), action_scale=cfg.action_scale,
                   sigma=cfg.sigma, qd_max=cfg.qd_max, tau_loco=cfg.tau_loco,
                   base_mass=cfg.base_mass, base_height=cfg.base_height,
                   tilt_per_newton=cfg.tilt_per_newton, tilt_cap=cfg.tilt_cap,
                   grasp_zone=arr(cfg.grasp_zone))

    def with_gains(self, kp, kd) -> 'ArmParams':
        return replace(self, kp=np.asarray(kp, dtype=np.float64), kd=np.asarray(kd, dtype=np.float64))

    @property
    def reach(self) -> float:
        return float(np.sum(self.link_lengths[1:]))


@dataclass(eq=False)
class BaseState:
    x: np.ndarray
    y: np.ndarray
    yaw: np.ndarray
    vx: np.ndarray       # в системе базы
    vy: np.ndarray
    omega: np.ndarray
    psi: np.ndarray      # виртуальный наклон

    def world_velocity(self) -> np.ndarray:
        return rotate_z(vec3(self.vx, self.vy, 0.0), self.yaw)


@dataclass(eq=False)
class ArmState:
    q: np.ndarray
    qd: np.ndarray
    qdd: np.ndarray
    targets: np.ndarray


@dataclass(eq=False)
class RobotState:
    base: BaseState
    arm: ArmState

    def copy(self) -> 'RobotState':
        b, a = self.base, self.arm
        return RobotState(
            BaseState(*(np.array(v, dtype=np.float64) for v in
                        (b.x, b.y, b.yaw, b.vx, b.vy, b.omega, b.psi))),
            ArmState(*(np.array(v, dtype=np.float64) for v in (a.q, a.qd, a.qdd, a.targets))))


class Kinematics(NamedTuple):
    ee: np.ndarray          # точка e (мир)
    frame: np.ndarray       # ориентация ЭЗ (…, 3, 3), столбцы - оси
    shoulder: np.ndarray    # точка плеча s
    jacobian: np.ndarray    # (…, 3, 6)
    joints: np.ndarray      # начала звеньев 1..6 и e, (…, 7, 3)
    axes: np.ndarray        # оси суставов в мире, (…, 6, 3)


def initial_robot_state(params: ArmParams, x, y, yaw, vx, vy) -> RobotState:
    x = np.asarray(x, dtype=np.float64)
    n = x.shape
    q = np.broadcast_to(params.q_default, n + (6,)).copy()
    zeros = np.zeros(n)
    return RobotState(
        BaseState(x=x.copy(), y=np.asarray(y, dtype=np.float64).copy(),
                  yaw=np.asarray(yaw, dtype=np.float64).copy(),
                  vx=np.asarray(vx, dtype=np.float64).copy(),
                  vy=np.asarray(vy, dtype=np.float64).copy(), omega=zeros.copy(),
                  psi=zeros.copy()),
        ArmState(q=q, qd=np.zeros_like(q), qdd=np.zeros_like(q), targets=q.copy()))


def clip_base_command(cmd: np.ndarray) -> np.ndarray:
    """Ограничение по норме линейной скорости и |ω|, затем мёртвая зона"""
    cmd = np.asarray(cmd, dtype=np.float64)
    vx, vy, w = cmd[..., 0], cmd[..., 1], cmd[..., 2]
    speed = np.sqrt(vx * vx + vy * vy)
    factor = np.where(speed > MAX_LINEAR_SPEED, MAX_LINEAR_SPEED / np.where(speed > 0, speed, 1.0), 1.0)
    vx, vy = vx * factor, vy * factor
    w = np.clip(w, -MAX_YAW_RATE, MAX_YAW_RATE)
    slow = speed * factor < DEADBAND
    vx = np.where(slow, 0.0, vx)
    vy = np.where(slow, 0.0, vy)
    w = np.where(np.abs(w) < DEADBAND, 0.0, w)
    return np.stack([vx, vy, w], axis=-1)


def arm_pd_target(a: np.ndarray, q: np.ndarray, params: ArmParams) -> np.ndarray:
    """target = clip(s·a + q̃, q ± σ·τ̄/Kp), затем пределы суставов"""
    a = np.asarray(a, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    bound = params.sigma * params.tau_limits / params.kp
    target = np.clip(params.action_scale * a + params.q_default, q - bound, q + bound)
    return np.clip(target, params.q_lower, params.q_upper)


def fk(q: np.ndarray, base_x, base_y, base_yaw, params: ArmParams) -> Kinematics:
    """Прямая кинематика цепи: рыскание, три тангажа, крен кисти, рыскание крюка"""
    q = np.asarray(q, dtype=np.float64)
    lengths = params.link_lengths
    batch = q.shape[:-1]
    ex = np.broadcast_to(np.array([1.0, 0.0, 0.0]), batch + (3,))

    r1 = rot_z(q[..., 0])
    r2 = matmul3(r1, rot_y(q[..., 1]))
    r3 = matmul3(r2, rot_y(q[..., 2]))
    r4 = matmul3(r3, rot_y(q[..., 3]))
    r5 = matmul3(r4, rot_x(q[..., 4]))
    r6 = matmul3(r5, rot_z(q[..., 5]))

    p1 = np.broadcast_to(params.mount_offset, batch + (3,)).astype(np.float64)
    p2 = p1 + vec3(0.0, 0.0, lengths[0] + 0.0 * q[..., 0])
    p3 = p2 + lengths[1] * matvec3(r2, ex)
    p4 = p3 + lengths[2] * matvec3(r3, ex)
    p5 = p4 + lengths[3] * matvec3(r4, ex)
    p6 = p5 + lengths[4] * matvec3(r5, ex)
    e = p6 + lengths[5] * matvec3(r6, ex)

    axes = (r1[..., :, 2], r1[..., :, 1], r2[..., :, 1], r3[..., :, 1], r4[..., :, 0], r5[..., :, 2])
    origins = (p1, p2, p3, p4, p5, p6)
    # оси: z смонтированной базы для первого сустава
    axes = (vec3(0.0, 0.0, 1.0 + 0.0 * q[..., 0]),) + axes[1:]

    base_rot = rot_z(np.asarray(base_yaw, dtype=np.float64) + 0.0 * q[..., 0])
    offset = vec3(base_x, base_y, 0.0 + 0.0 * q[..., 0])

    def to_world(p):
        return rotate_z(p, base_yaw) + offset

    e_w = to_world(e)
    axes_w = [rotate_z(w, base_yaw) for w in axes]
    cols = [cross(w, e_w - to_world(p)) for w, p in zip(axes_w, origins)]
    jac = np.stack(cols, axis=-1)
    joints = np.stack([to_world(p) for p in origins] + [e_w], axis=-2)
    return Kinematics(ee=e_w, frame=matmul3(base_rot, r6), shoulder=to_world(p2),
                      jacobian=jac, joints=joints, axes=np.stack(axes_w, axis=-2))


def jacobian_transpose_force(jac: np.ndarray, force: np.ndarray) -> np.ndarray:
    """Jᵀ F поэлементно: (…, 3, 6), (…, 3) -> (…, 6)"""
    return (jac[..., 0, :] * force[..., 0, None] + jac[..., 1, :] * force[..., 1, None]
            + jac[..., 2, :] * force[..., 2, None])


def _row_dot6(row: np.ndarray, v: np.ndarray) -> np.ndarray:
    out = row[..., 0] * v[..., 0]
    for i in range(1, 6):
        out = out + row[..., i] * v[..., i]
    return out


def ee_velocity(kin: Kinematics, state: RobotState) -> np.ndarray:
    """Скорость точки e: перенос и поворот базы плюс J q̇"""
    base = state.base
    r = kin.ee - vec3(base.x, base.y, 0.0)
    omega = vec3(0.0 * base.omega, 0.0 * base.omega, base.omega)
    j, qd = kin.jacobian, state.arm.qd
    arm = vec3(_row_dot6(j[..., 0, :], qd), _row_dot6(j[..., 1, :], qd), _row_dot6(j[..., 2, :], qd))
    return base.world_velocity() + cross(omega, r) + arm


def step_robot(state: RobotState, action: np.ndarray, f_ext: np.ndarray, f_base: np.ndarray,
               dt: float, params: ArmParams, kin: Kinematics = None) -> RobotState:
    """Один физический подшаг робота.

    f_ext - сила на точку e (мир), f_base - внешняя сила на базу (мир).
    ПД-цели берутся из state.arm.targets (выставляются на шаге управления).
    """
    if dt <= 0:
        raise ValueError("Шаг интегрирования должен быть положительным")
    action = np.asarray(action, dtype=np.float64)
    f_ext = np.asarray(f_ext, dtype=np.float64)
    f_base = np.asarray(f_base, dtype=np.float64)
    for name, value in (("action", action), ("f_ext", f_ext), ("f_base", f_base),
                        ("q", state.arm.q), ("qd", state.arm.qd)):
        if not np.all(np.isfinite(value)):
            raise NumericalError(name)

    base, arm = state.base, state.arm
    cmd = clip_base_command(action[..., :3])

    # база: слежение первого порядка плюс внешняя сила на виртуальную массу
    f_local = rotate_z(f_base, -np.asarray(base.yaw))
    vx = base.vx + dt * (cmd[..., 0] - base.vx) / params.tau_loco \
        + dt * f_local[..., 0] / params.base_mass
    vy = base.vy + dt * (cmd[..., 1] - base.vy) / params.tau_loco \
        + dt * f_local[..., 1] / params.base_mass
    omega = base.omega + dt * (cmd[..., 2] - base.omega) / params.tau_loco
    yaw = base.yaw + dt * omega
    c, s = np.cos(yaw), np.sin(yaw)
    x = base.x + dt * (c * vx - s * vy)
    y = base.y + dt * (s * vx + c * vy)
    horizontal = np.sqrt(f_ext[..., 0] ** 2 + f_ext[..., 1] ** 2)
    psi = np.minimum(params.tilt_cap, params.tilt_per_newton * horizontal)

    # рука: ограниченный ПД плюс Jᵀ F
    if kin is None:
        kin = fk(arm.q, base.x, base.y, base.yaw, params)
    tau_pd = params.kp * (arm.targets - arm.q) - params.kd * arm.qd
    tau_pd = np.clip(tau_pd, -params.tau_limits, params.tau_limits)
    tau = tau_pd + jacobian_transpose_force(kin.jacobian, f_ext)
    qdd = tau / params.inertia
    qd = np.clip(arm.qd + dt * qdd, -params.qd_max, params.qd_max)
    q = arm.q + dt * qd
    qd = np.where((q <= params.q_lower) & (qd < 0.0), 0.0, qd)
    qd = np.where((q >= params.q_upper) & (qd > 0.0), 0.0, qd)
    q = np.clip(q, params.q_lower, params.q_upper)

    return RobotState(BaseState(x=x, y=y, yaw=yaw, vx=vx, vy=vy, omega=omega, psi=psi),
                      ArmState(q=q, qd=qd, qdd=qdd, targets=arm.targets))


def grasp_zone_test(frame: np.ndarray, ee: np.ndarray, h: np.ndarray, zone=(0.06, 0.03, 0.03)):
    """h в зоне захвата: параллелепипед вдоль раскрытия крюка в системе ЭЗ"""
    d = np.asarray(h, dtype=np.float64) - ee
    half = np.asarray(zone, dtype=np.float64) / 2.0
    inside = np.ones(d.shape[:-1], dtype=bool)
    for i in range(3):
        axis = frame[..., :, i]
        local = d[..., 0] * axis[..., 0] + d[..., 1] * axis[..., 1] + d[..., 2] * axis[..., 2]
        inside &= np.abs(local) <= half[i]
    return inside


def hook_axis(frame: np.ndarray) -> np.ndarray:
    return frame[..., :, 0]


def grasp_orientation_error(frame: np.ndarray, handle_axis: np.ndarray) -> np.ndarray:
    """Угол e_o между осью смыкания крюка и осью ручки, в [0, π]"""
    a = hook_axis(frame)
    b = np.asarray(handle_axis, dtype=np.float64)
    cos = (a[..., 0] * b[..., 0] + a[..., 1] * b[..., 1] + a[..., 2] * b[..., 2]) \
        / np.maximum(norm(a) * norm(b), 1e-12)
    return np.arccos(np.clip(cos, -1.0, 1.0))


def grasp_zone_diagonal(zone=(0.06, 0.03, 0.03)) -> float:
    return float(np.sqrt(np.sum(np.square(zone))))
