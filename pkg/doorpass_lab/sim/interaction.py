"""Взаимодействие робота и двери: захват ручки, штрафные контакты, зоны обхода"""
from dataclasses import dataclass
from typing import Sequence, Tuple

import numpy as np

from ..core.config import ContactConfig
from .door_model import (DoorSpec, DoorState, HandleKinematics, Slab, behind_panel, hinge_axis,
                         hinge_point, panel_geometry, wall_slabs, zone_membership)
from .geometry import box_penetration, cross, dot, norm, row_sum, scale, vec3
from .robot_model import ArmParams, Kinematics, RobotState

LINK_NAMES: Tuple[str, ...] = ("base", "thigh_proxy", "arm_link_1", "arm_link_2",
                               "arm_link_3", "arm_link_4", "arm_link_5", "arm_link_6")
THIGH_OFFSETS = ((0.3, 0.2), (0.3, -0.2), (-0.3, 0.2), (-0.3, -0.2))
THIGH_HEIGHT = 0.25
# индекс звена для каждого зонда: база, 4 бедра, концы звеньев руки 1..6
PROBE_LINKS = np.array([0, 1, 1, 1, 1, 2, 3, 4, 5, 6, 7])
EE_PROBE = 10


@dataclass(eq=False)
class ContactReport:
    grasped: np.ndarray
    grasp_lost_this_step: np.ndarray
    hinge_torque: np.ndarray
    handle_torque: np.ndarray
    ee_force: np.ndarray
    base_force: np.ndarray
    colliding: np.ndarray        # (…, len(LINK_NAMES)) bool
    zone_base: np.ndarray
    zone_ee: np.ndarray
    behind_panel_base: np.ndarray
    behind_panel_ee: np.ndarray

    def colliding_links(self, index: int = 0):
        flags = np.atleast_2d(self.colliding)[index]
        return {name for name, hit in zip(LINK_NAMES, flags) if hit}


@dataclass(eq=False)
class ContactForces:
    probe_forces: np.ndarray     # сила на каждый зонд робота (…, P, 3)
    hinge_torque: np.ndarray     # обобщённый момент на петлю от контактов
    door_force: np.ndarray       # суммарная сила на панель (…, 3)
    panel_hit: np.ndarray        # (…, P)
    wall_hit: np.ndarray         # (…, P)


def handle_coupling(ee: np.ndarray, ee_vel: np.ndarray, handle: HandleKinematics, h_vel: np.ndarray,
                    grasped, k_g: float = 2000.0, d_g: float = 50.0):
    """Пружина-демпфер между e и h без составляющей вдоль рычага (крюк без трения).

    Возвращает (момент на ручку, момент на петлю, реакция на ЭЗ).
    """
    force = scale(np.asarray(ee, dtype=np.float64) - handle.point, k_g) \
        + scale(np.asarray(ee_vel, dtype=np.float64) - h_vel, d_g)
    lever = handle.lever_dir
    force = force - scale(lever, dot(force, lever) / np.maximum(dot(lever, lever), 1e-12))
    force = scale(force, np.asarray(grasped, dtype=np.float64))
    handle_torque = dot(force, handle.d_phi)
    hinge_torque = dot(force, handle.d_theta)
    return handle_torque, hinge_torque, -force


def handle_velocity(handle: HandleKinematics, door: DoorState) -> np.ndarray:
    return scale(handle.d_theta, door.theta_dot) + scale(handle.d_phi, door.phi_dot)


def update_grasp(prev_grasped, in_zone, distance, release_distance: float):
    """Гистерезис: захват при попадании h в зону, отпускание при ‖e−h‖ > порога"""
    prev_grasped = np.asarray(prev_grasped, dtype=bool)
    grasped = np.asarray(in_zone, dtype=bool) | (prev_grasped & (np.asarray(distance) <= release_distance))
    return grasped, prev_grasped & ~grasped


def probe_layout(cfg: ContactConfig):
    radii = np.array([cfg.r_b] + [cfg.r_thigh] * 4 + [cfg.r_e] * 6)
    return radii


def probe_kinematics(state: RobotState, kin: Kinematics, params: ArmParams):
    """Позиции и скорости зондов: (…, P, 3)"""
    base = state.base
    yaw = np.asarray(base.yaw)
    c, s = np.cos(yaw), np.sin(yaw)
    center = vec3(base.x, base.y, params.base_height + 0.0 * base.x)
    v_base = base.world_velocity()
    omega = vec3(0.0 * base.omega, 0.0 * base.omega, base.omega)

    points = [center]
    for ox, oy in THIGH_OFFSETS:
        points.append(vec3(base.x + c * ox - s * oy, base.y + s * ox + c * oy,
                           THIGH_HEIGHT + 0.0 * base.x))
    joints = kin.joints
    for k in range(1, 7):
        points.append(joints[..., k, :])
    positions = np.stack(points, axis=-2)

    ground = vec3(base.x, base.y, 0.0 * base.x)
    velocities = []
    for k, p in enumerate(points):
        v = v_base + cross(omega, p - ground)
        if k >= 5:
            link_end = k - 4
            for i in range(link_end):
                v = v + scale(cross(kin.axes[..., i, :], p - joints[..., i, :]), state.arm.qd[..., i])
        velocities.append(v)
    return positions, np.stack(velocities, axis=-2)


def _expand(slab: Slab) -> Slab:
    center = np.asarray(slab.center)[..., None, :]
    axes = tuple(np.asarray(a)[..., None, :] for a in slab.axes)
    half = tuple(np.asarray(h, dtype=np.float64)[..., None] for h in slab.half_extents)
    return Slab(center, axes, half)


def _penalty(depth, rate, k_c, d_c):
    magnitude = np.where(depth > 0.0, k_c * depth + d_c * rate, 0.0)
    return np.maximum(magnitude, 0.0)


def panel_contact(positions: np.ndarray, velocities: np.ndarray, radii: Sequence[float],
                  spec: DoorSpec, door: DoorState, k_c: float = 5000.0,
                  d_c: float = 100.0) -> ContactForces:
    """Штрафные контакты зондов с панелью и стеной (сжатие, без трения)"""
    radii = np.asarray(radii, dtype=np.float64)
    panel = _expand(panel_geometry(spec, door))
    hinge = np.asarray(hinge_point(spec))[..., None, :]
    omega = np.asarray(hinge_axis(spec))[..., None, :]
    theta_dot = np.asarray(door.theta_dot, dtype=np.float64)[..., None]

    depth, normal, surface = box_penetration(positions, radii, panel.center, panel.axes,
                                             panel.half_extents)
    lever = cross(omega + 0.0 * surface, surface - hinge)
    surface_vel = scale(lever, theta_dot)
    rate = -dot(velocities - surface_vel, normal)
    magnitude = _penalty(depth, rate, k_c, d_c)
    panel_forces = scale(normal, magnitude)
    hinge_torque = row_sum(dot(-panel_forces, lever))
    door_force = -row_sum(np.swapaxes(panel_forces, -1, -2))
    panel_hit = depth > 0.0

    wall_forces = np.zeros_like(panel_forces)
    wall_hit = np.zeros_like(panel_hit)
    for slab in wall_slabs(spec):
        wall = _expand(slab)
        w_depth, w_normal, _ = box_penetration(positions, radii, wall.center, wall.axes,
                                               wall.half_extents)
        w_rate = -dot(velocities, w_normal)
        wall_forces = wall_forces + scale(w_normal, _penalty(w_depth, w_rate, k_c, d_c))
        wall_hit = wall_hit | (w_depth > 0.0)

    return ContactForces(probe_forces=panel_forces + wall_forces, hinge_torque=hinge_torque,
                         door_force=door_force, panel_hit=panel_hit, wall_hit=wall_hit)


def colliding_links(probe_hits: np.ndarray) -> np.ndarray:
    """Флаги столкновений по звеньям из флагов зондов"""
    out = np.zeros(probe_hits.shape[:-1] + (len(LINK_NAMES),), dtype=bool)
    for probe, link in enumerate(PROBE_LINKS):
        out[..., link] |= probe_hits[..., probe]
    return out


def zones(ee: np.ndarray, state: RobotState, spec: DoorSpec, door: DoorState,
          radius: float = 1.5):
    base_point = vec3(state.base.x, state.base.y, 0.0 * state.base.x)
    return (zone_membership(base_point, spec, door, radius),
            zone_membership(ee, spec, door, radius),
            behind_panel(base_point, spec, door, radius),
            behind_panel(ee, spec, door, radius))


def ee_handle_distance(ee: np.ndarray, handle: HandleKinematics) -> np.ndarray:
    return norm(np.asarray(ee) - handle.point)
