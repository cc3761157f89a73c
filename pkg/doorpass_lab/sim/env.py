"""Векторизованная эпизодическая среда 50 Гц: сброс, шаг, наблюдения учителя и ученика.

Все среды пакета считаются поэлементно, поэтому пакет из N сред побитово
совпадает с N одиночными средами, созданными с env_offset = i.
"""
import math
from dataclasses import dataclass, fields
from typing import Callable, Dict, List, Optional

import numpy as np

from ..core.config import ExperimentConfig
from ..logging_config import get_logger
from .door_model import (DoorDynamicsParams, DoorSpec, DoorState, doorway_frame, handle_kinematics,
                         resistive_torques, step_door)
from .domain_rand import PURPOSE_NOISE, DomainRandomizer, EpisodeSample, episode_stream
from .geometry import rotate_z, vec3, wrap_angle
from .interaction import (EE_PROBE, colliding_links, ee_handle_distance, handle_coupling,
                          handle_velocity, panel_contact, probe_kinematics, probe_layout,
                          update_grasp, zones)
from .rewards import RewardBreakdown, Stage, compute_breakdown, stage_update
from .robot_model import (ArmParams, RobotState, arm_pd_target, ee_velocity, fk,
                          grasp_orientation_error, grasp_zone_diagonal, grasp_zone_test,
                          initial_robot_state, step_robot)

logger = get_logger('env')

ACTION_DIM = 9
PASS_DISTANCE = 0.5

# раскладка наблюдений: (имя, длина); привилегированный блок - в хвосте
TEACHER_FIELDS = (
    ("orientation", 2), ("base_velocity", 3), ("joint_pos", 6), ("joint_vel", 6),
    ("prev_action", 9), ("handle_pos", 3), ("doorway_pos", 3), ("doorway_dir", 2),
)
PRIVILEGED_FIELDS = (
    ("door_joints", 4), ("mass", 1), ("resist_torques", 2), ("door_type", 4), ("stage", 1),
)
STUDENT_FIELDS = tuple(f for f in TEACHER_FIELDS if f[0] not in ("joint_vel", "prev_action"))


def _index_map(spec) -> Dict[str, List[int]]:
    out, start = {}, 0
    for name, size in spec:
        out[name] = [start, start + size]
        start += size
    return out


TEACHER_DIM = sum(s for _, s in TEACHER_FIELDS) + sum(s for _, s in PRIVILEGED_FIELDS)
PROPRIO_DIM = sum(s for _, s in TEACHER_FIELDS)
STUDENT_DIM = sum(s for _, s in STUDENT_FIELDS)


def observation_layout(version: str = "obs-v1") -> Dict:
    """Машиночитаемая карта индексов наблюдений"""
    return {
        "version": version,
        "teacher": _index_map(TEACHER_FIELDS + PRIVILEGED_FIELDS),
        "teacher_dim": TEACHER_DIM,
        "student": _index_map(STUDENT_FIELDS),
        "student_dim": STUDENT_DIM,
        "privileged_start": PROPRIO_DIM,
    }


def student_indices_in_teacher() -> np.ndarray:
    """Индексы полей ученика внутри вектора учителя"""
    teacher = _index_map(TEACHER_FIELDS)
    idx = []
    for name, _ in STUDENT_FIELDS:
        lo, hi = teacher[name]
        idx.extend(range(lo, hi))
    return np.array(idx)


@dataclass(eq=False)
class StepResult:
    teacher_obs: np.ndarray
    student_obs: np.ndarray
    reward: np.ndarray
    breakdown: RewardBreakdown
    done: np.ndarray
    info: Dict[str, np.ndarray]


@dataclass(eq=False)
class _Book:
    """Счётчики эпизода и флаги задачи по средам"""
    grasped: np.ndarray
    prev_in_zone: np.ndarray
    stage: np.ndarray
    passed_doorway: np.ndarray
    prev_action: np.ndarray
    step: np.ndarray
    max_theta: np.ndarray
    max_progress: np.ndarray
    episode: np.ndarray


def episode_metrics(theta_trace, progress_trace, theta_enough: float = math.radians(30.0),
                    pass_distance: float = PASS_DISTANCE):
    """(opened_enough, passed_through) по трассе эпизода.

    progress_trace - координата базы вдоль направления прохода относительно плоскости стены.
    """
    theta = np.asarray(theta_trace, dtype=np.float64)
    progress = np.asarray(progress_trace, dtype=np.float64)
    return bool(np.max(theta) >= theta_enough), bool(np.max(progress) >= pass_distance)


def _assign(dst, src, mask):
    for f in fields(dst):
        target = getattr(dst, f.name)
        target[mask] = getattr(src, f.name)[mask]


class DoorPassEnv:
    """Пакет из num_envs независимых сред открывания и прохода двери"""

    def __init__(self, cfg: ExperimentConfig, num_envs: Optional[int] = None,
                 seed: Optional[int] = None, env_offset: int = 0, student_noise: bool = True,
                 auto_reset: bool = True,
                 episode_hook: Optional[Callable[[int, int, EpisodeSample], EpisodeSample]] = None):
        self.cfg = cfg
        self.n = int(num_envs if num_envs is not None else cfg.env.num_envs)
        self.seed = int(cfg.seed if seed is None else seed)
        self.env_index = np.arange(self.n) + int(env_offset)
        self.dt = cfg.env.physics_dt
        self.substeps = cfg.env.substeps
        self.horizon = cfg.env.episode_steps
        self.student_noise = student_noise
        self.auto_reset = auto_reset
        self.episode_hook = episode_hook
        self.randomizer = DomainRandomizer(cfg.randomization, self.seed, cfg.door, cfg.robot)
        self.arm_template = ArmParams.from_config(cfg.robot)
        self.radii = probe_layout(cfg.contact)
        self.release_distance = cfg.contact.grasp_release_factor \
            * grasp_zone_diagonal(cfg.robot.grasp_zone)
        self.noise_std = self._noise_vector()
        self.layout_version = cfg.env.layout_version

        n = self.n
        self._spec = {k: np.zeros(n) for k in ("d_w", "d_t", "h_l", "h_h", "h_o")}
        self._spec["door_type"] = np.zeros(n, dtype=np.int64)
        self._params = {k: np.zeros(n) for k in ("mass", "tau_hinge", "tau_handle", "k_ar",
                                                  "k_dc", "phi_max", "phi_u", "i_theta")}
        self._kp = np.zeros((n, 6))
        self._kd = np.zeros((n, 6))
        self.door = DoorState.closed(n)
        self.robot = initial_robot_state(self.arm_template, np.zeros(n), np.zeros(n), np.zeros(n),
                                         np.zeros(n), np.zeros(n))
        self.book = _Book(grasped=np.zeros(n, dtype=bool), prev_in_zone=np.zeros(n, dtype=bool),
                          stage=np.zeros(n, dtype=np.int64),
                          passed_doorway=np.zeros(n, dtype=bool),
                          prev_action=np.zeros((n, ACTION_DIM)), step=np.zeros(n, dtype=np.int64),
                          max_theta=np.zeros(n), max_progress=np.zeros(n),
                          episode=np.full(n, -1, dtype=np.int64))
        self.samples: List[Optional[EpisodeSample]] = [None] * n
        self._noise_rngs: List[Optional[np.random.Generator]] = [None] * n
        self._last_in_zone = np.zeros(n, dtype=bool)

    # --- параметры пакета ---
    @property
    def spec(self) -> DoorSpec:
        d = self.cfg.door
        return DoorSpec(panel_height=d.panel_height, theta_max=math.radians(d.theta_max_deg),
                        handle_standoff=d.handle_standoff, grasp_fraction=d.handle_grasp_fraction,
                        wall_thickness=d.wall_thickness, wall_extent=d.wall_extent,
                        wall_height=d.wall_height, **self._spec)

    @property
    def params(self) -> DoorDynamicsParams:
        return DoorDynamicsParams(i_phi=self.cfg.door.handle_inertia, **self._params)

    @property
    def arm(self) -> ArmParams:
        return self.arm_template.with_gains(self._kp, self._kd)

    def _noise_vector(self) -> np.ndarray:
        table = self.cfg.env.noise
        parts = []
        for name, size in STUDENT_FIELDS:
            std = table.get(name, 0.0)
            parts.append(np.full(size, std))
        return np.concatenate(parts)

    # --- сброс ---
    def reset(self, env_ids=None) -> Dict[str, np.ndarray]:
        ids = np.arange(self.n) if env_ids is None else np.asarray(env_ids, dtype=np.int64)
        for i in ids:
            self._reset_one(int(i))
        teacher = self.build_teacher_obs()
        return {"teacher": teacher, "student": self.build_student_obs(teacher, ids)}

    def _reset_one(self, i: int):
        self.book.episode[i] += 1
        env_index, episode = int(self.env_index[i]), int(self.book.episode[i])
        sample = self.randomizer.sample_episode(env_index, episode)
        if self.episode_hook is not None:
            sample = self.episode_hook(env_index, episode, sample)
        self.samples[i] = sample
        for k in ("d_w", "d_t", "h_l", "h_h", "h_o", "door_type"):
            self._spec[k][i] = getattr(sample.spec, k)
        for k in self._params:
            self._params[k][i] = getattr(sample.params, k)
        self._kp[i] = sample.kp
        self._kd[i] = sample.kd

        self.door.theta[i] = 0.0
        self.door.theta_dot[i] = 0.0
        self.door.phi[i] = 0.0
        self.door.phi_dot[i] = 0.0
        self.door.latched[i] = True

        base, arm = self.robot.base, self.robot.arm
        base.x[i], base.y[i], base.yaw[i] = sample.base_x, sample.base_y, sample.base_yaw
        base.vx[i], base.vy[i] = sample.base_vx, sample.base_vy
        base.omega[i] = 0.0
        base.psi[i] = 0.0
        arm.q[i] = self.arm_template.q_default
        arm.qd[i] = 0.0
        arm.qdd[i] = 0.0
        arm.targets[i] = self.arm_template.q_default

        b = self.book
        b.grasped[i] = False
        b.prev_in_zone[i] = False
        b.stage[i] = int(Stage.OPENING)
        b.passed_doorway[i] = False
        b.prev_action[i] = 0.0
        b.step[i] = 0
        b.max_theta[i] = 0.0
        b.max_progress[i] = self._progress()[i]
        self._last_in_zone[i] = False
        self._noise_rngs[i] = episode_stream(self.seed, env_index, episode, PURPOSE_NOISE)

    # --- геометрия в системе базы ---
    def _progress(self) -> np.ndarray:
        """Координата базы вдоль направления прохода от плоскости стены"""
        spec = self.spec
        rel = vec3(self.robot.base.x - spec.wall_x, self.robot.base.y - spec.wall_y, 0.0)
        return rotate_z(rel, -np.asarray(spec.wall_yaw))[..., 0]

    def _doorway(self, spec: DoorSpec):
        center, through = doorway_frame(spec)
        return (np.broadcast_to(center, (self.n, 3)).copy(),
                np.broadcast_to(through, (self.n, 3)).copy())

    def _relative(self, point: np.ndarray) -> np.ndarray:
        base = self.robot.base
        return rotate_z(point - vec3(base.x, base.y, 0.0 * base.x), -base.yaw)

    def build_teacher_obs(self) -> np.ndarray:
        spec, params, door, base, arm = self.spec, self.params, self.door, self.robot.base, self.robot.arm
        handle = handle_kinematics(spec, door)
        center, through = self._doorway(spec)
        through_local = rotate_z(through, -base.yaw)
        hinge_res, handle_res = resistive_torques(door, params)
        one_hot = np.zeros((self.n, 4))
        one_hot[np.arange(self.n), self._spec["door_type"]] = 1.0
        parts = [
            wrap_angle(base.yaw - spec.wall_yaw)[:, None], base.psi[:, None],
            np.stack([base.vx, base.vy, base.omega], -1),
            arm.q, arm.qd, self.book.prev_action,
            self._relative(handle.point), self._relative(center), through_local[:, :2],
            np.stack([door.theta, door.phi, door.theta_dot, door.phi_dot], -1),
            params.mass[:, None], np.stack([hinge_res, handle_res], -1), one_hot,
            self.book.stage[:, None].astype(np.float64),
        ]
        return np.concatenate(parts, axis=-1)

    def build_student_obs(self, teacher_obs: np.ndarray, env_ids=None) -> np.ndarray:
        """Подмножество без скоростей суставов и прошлого действия, с гауссовым шумом"""
        obs = teacher_obs[:, student_indices_in_teacher()].copy()
        if not self.student_noise:
            return obs
        ids = range(self.n) if env_ids is None else env_ids
        for i in ids:
            i = int(i)
            obs[i] += self.noise_std * self._noise_rngs[i].standard_normal(STUDENT_DIM)
        return obs

    # --- шаг ---
    def step(self, actions: np.ndarray) -> StepResult:
        actions = np.array(actions, dtype=np.float64).reshape(self.n, ACTION_DIM)
        nan_abort = ~np.all(np.isfinite(actions), axis=-1)
        actions[nan_abort] = 0.0
        door_before, robot_before = self.door.copy(), self.robot.copy()

        spec, params, arm = self.spec, self.params, self.arm
        self.robot.arm.targets = arm_pd_target(actions[:, 3:], self.robot.arm.q, arm)
        hits = np.zeros((self.n, len(self.radii)), dtype=bool)
        grasp_lost = np.zeros(self.n, dtype=bool)
        hinge_applied = np.zeros(self.n)
        handle_applied = np.zeros(self.n)
        ee_force = np.zeros((self.n, 3))
        base_force = np.zeros((self.n, 3))

        for _ in range(self.substeps):
            base = self.robot.base
            kin = fk(self.robot.arm.q, base.x, base.y, base.yaw, arm)
            handle = handle_kinematics(spec, self.door)
            in_zone = grasp_zone_test(kin.frame, kin.ee, handle.point, arm.grasp_zone)
            dist = ee_handle_distance(kin.ee, handle)
            self.book.grasped, lost = update_grasp(self.book.grasped, in_zone, dist,
                                                   self.release_distance)
            grasp_lost |= lost
            handle_torque, hinge_torque, reaction = handle_coupling(
                kin.ee, ee_velocity(kin, self.robot), handle, handle_velocity(handle, self.door),
                self.book.grasped, self.cfg.contact.k_g, self.cfg.contact.d_g)
            positions, velocities = probe_kinematics(self.robot, kin, arm)
            contact = panel_contact(positions, velocities, self.radii, spec, self.door,
                                    self.cfg.contact.k_c, self.cfg.contact.d_c)
            hits |= contact.panel_hit | contact.wall_hit

            probe_forces = contact.probe_forces
            ee_force = reaction + probe_forces[:, EE_PROBE]
            # контакты корпуса и звеньев руки плюс горизонтальная реакция ЭЗ идут в базу
            base_force = ee_force * np.array([1.0, 1.0, 0.0])
            for k in range(EE_PROBE):
                base_force = base_force + probe_forces[:, k]
            hinge_applied = hinge_torque + contact.hinge_torque
            handle_applied = handle_torque
            broken = ~(np.isfinite(hinge_applied) & np.isfinite(handle_applied)
                       & np.all(np.isfinite(ee_force), axis=-1)
                       & np.all(np.isfinite(base_force), axis=-1))
            if np.any(broken):
                nan_abort |= broken
                hinge_applied = np.where(broken, 0.0, hinge_applied)
                handle_applied = np.where(broken, 0.0, handle_applied)
                ee_force = np.where(broken[:, None], 0.0, ee_force)
                base_force = np.where(broken[:, None], 0.0, base_force)

            self.door = step_door(self.door, spec, params, hinge_applied, handle_applied, self.dt)
            self.robot = step_robot(self.robot, actions, ee_force, base_force, self.dt, arm, kin)

            bad = ~self._finite()
            if np.any(bad):
                nan_abort |= bad
                _assign(self.door, door_before, bad)
                self.robot = self._restore_robot(robot_before, bad)

        if np.any(nan_abort):
            logger.warning(f"NaN-защита: эпизоды прерваны в средах {np.flatnonzero(nan_abort).tolist()}")

        # отчёт о контактах на частоте управления
        base = self.robot.base
        kin = fk(self.robot.arm.q, base.x, base.y, base.yaw, arm)
        handle = handle_kinematics(spec, self.door)
        in_zone = grasp_zone_test(kin.frame, kin.ee, handle.point, arm.grasp_zone)
        e_o = grasp_orientation_error(kin.frame, handle.axis)
        zone_base, zone_ee, behind_base, behind_ee = zones(kin.ee, self.robot, spec, self.door,
                                                           self.cfg.reward.zone_radius)
        links = colliding_links(hits)
        progress = self._progress()
        self.book.passed_doorway |= progress > 0.0
        is_pull = spec.is_pull
        self.book.stage = stage_update(self.book.stage, self.door.theta, is_pull, behind_base,
                                       behind_ee, self.cfg.reward.theta_pass)

        center, through = self._doorway(spec)
        breakdown = compute_breakdown(
            e=kin.ee, h=handle.point, e_o=e_o, in_zone=in_zone, prev_in_zone=self.book.prev_in_zone,
            phi=self.door.phi, phi_max=params.phi_max, theta=self.door.theta, zone_base=zone_base,
            zone_ee=zone_ee, is_pull=is_pull, v_b=base.world_velocity()[:, :2],
            base_xy=np.stack([base.x, base.y], -1), doorway_center_xy=center[:, :2],
            through_xy=through[:, :2], passed_doorway=self.book.passed_doorway,
            qd=self.robot.arm.qd, qdd=self.robot.arm.qdd, psi=base.psi, shoulder=kin.shoulder,
            actions=actions, n_colliding=links.sum(axis=-1), stage=self.book.stage,
            cfg=self.cfg.reward)

        self.book.prev_in_zone = in_zone
        self.book.prev_action = actions.copy()
        self.book.step += 1
        self.book.max_theta = np.maximum(self.book.max_theta, self.door.theta)
        self.book.max_progress = np.maximum(self.book.max_progress, progress)

        done = (self.book.step >= self.horizon) | nan_abort
        info = {
            "opened_enough": self.book.max_theta >= self.cfg.reward.theta_enough,
            "passed_through": self.book.max_progress >= PASS_DISTANCE,
            "stage": self.book.stage.copy(),
            "theta": self.door.theta.copy(),
            "phi": self.door.phi.copy(),
            "latched": self.door.latched.copy(),
            "door_type": self._spec["door_type"].copy(),
            "grasped": self.book.grasped.copy(),
            "grasp_lost": grasp_lost,
            "in_zone": in_zone,
            "colliding": links,
            "zone_base": zone_base,
            "zone_ee": zone_ee,
            "progress": progress,
            "max_theta": self.book.max_theta.copy(),
            "max_progress": self.book.max_progress.copy(),
            "nan_abort": nan_abort,
            "episode": self.book.episode.copy(),
            "step": self.book.step.copy(),
        }

        teacher = self.build_teacher_obs()
        student = self.build_student_obs(teacher)
        if self.auto_reset and np.any(done):
            ids = np.flatnonzero(done)
            for i in ids:
                self._reset_one(int(i))
            fresh = self.build_teacher_obs()
            teacher[ids] = fresh[ids]
            student[ids] = self.build_student_obs(fresh, ids)[ids]
        return StepResult(teacher_obs=teacher, student_obs=student, reward=breakdown.total,
                          breakdown=breakdown, done=done, info=info)

    def _finite(self) -> np.ndarray:
        d, b, a = self.door, self.robot.base, self.robot.arm
        ok = np.isfinite(d.theta) & np.isfinite(d.theta_dot) & np.isfinite(d.phi) \
            & np.isfinite(d.phi_dot)
        for v in (b.x, b.y, b.yaw, b.vx, b.vy, b.omega, b.psi):
            ok &= np.isfinite(v)
        for v in (a.q, a.qd, a.qdd):
            ok &= np.all(np.isfinite(v), axis=-1)
        return ok

    def _restore_robot(self, before: RobotState, mask) -> RobotState:
        robot = self.robot.copy()
        _assign(robot.base, before.base, mask)
        _assign(robot.arm, before.arm, mask)
        return robot
