"""Слагаемые награды, их композиция по стадиям и автомат стадий открывания/прохода"""
from dataclasses import dataclass, fields
from enum import IntEnum
from typing import Dict

import numpy as np

from ..core.config import RewardConfig
from .geometry import row_sum

ZONE_SCORE = np.array([0.0, 1.0, 2.0])  # none, Z1, Z2

TERM_NAMES = ("r_ehd", "r_th", "r_eho", "r_hg", "r_plg", "r_od", "r_adp", "r_hm", "r_o", "r_p",
              "r_ma", "r_pbt", "r_psa", "r_pcl", "r_pc", "r_s", "total")


class Stage(IntEnum):
    OPENING = 0
    PASSING = 1


@dataclass(eq=False)
class StageState:
    stage: np.ndarray
    passed_doorway: np.ndarray

    @classmethod
    def initial(cls, n: int = 1) -> 'StageState':
        return cls(stage=np.zeros(n, dtype=np.int64), passed_doorway=np.zeros(n, dtype=bool))


@dataclass(eq=False)
class RewardBreakdown:
    r_ehd: np.ndarray
    r_th: np.ndarray
    r_eho: np.ndarray
    r_hg: np.ndarray
    r_plg: np.ndarray
    r_od: np.ndarray
    r_adp: np.ndarray
    r_hm: np.ndarray
    r_o: np.ndarray
    r_p: np.ndarray
    r_ma: np.ndarray
    r_pbt: np.ndarray
    r_psa: np.ndarray
    r_pcl: np.ndarray
    r_pc: np.ndarray
    r_s: np.ndarray
    total: np.ndarray

    def as_dict(self) -> Dict[str, np.ndarray]:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    def row(self, index: int):
        return [float(np.atleast_1d(getattr(self, name))[index]) for name in TERM_NAMES]


def handle_manipulation_terms(e, h, e_o, in_zone, prev_in_zone, phi, phi_max,
                              hg_scale: float = 0.5):
    """(r_ehd, r_th, r_eho, r_hg, r_plg, r_hm)"""
    e = np.asarray(e, dtype=np.float64)
    h = np.asarray(h, dtype=np.float64)
    dist = np.sqrt(row_sum((e - h) ** 2))
    near = dist <= 1.0
    r_ehd = np.exp(-dist)
    r_th = np.asarray(phi, dtype=np.float64) / np.asarray(phi_max, dtype=np.float64)
    r_eho = 1.0 - np.abs(np.asarray(e_o, dtype=np.float64)) / np.pi
    in_zone = np.asarray(in_zone, dtype=bool)
    r_hg = np.where(in_zone & near, 1.0, 0.0)
    r_plg = np.where(np.asarray(prev_in_zone, dtype=bool) & ~in_zone & near, -1.0, 0.0)
    r_hm = r_ehd + r_th + r_eho + hg_scale * r_hg + r_plg
    return r_ehd, r_th, r_eho, r_hg, r_plg, r_hm


def open_door_terms(theta, theta_hat, zone_base, zone_ee, is_pull, theta_enough):
    """(r_od, r_adp); r_adp только для тянущих дверей и при θ ≥ θ_enough"""
    theta = np.asarray(theta, dtype=np.float64)
    r_od = 1.0 - np.abs(theta - theta_hat) / theta_hat
    score = ZONE_SCORE[np.asarray(zone_base, dtype=np.int64)] \
        + ZONE_SCORE[np.asarray(zone_ee, dtype=np.int64)]
    active = np.asarray(is_pull, dtype=bool) & (theta >= theta_enough)
    r_adp = np.where(active, score, 0.0)
    return r_od, r_adp


def progress_vector(base_xy, doorway_center_xy, through_xy, passed_doorway):
    base_xy = np.asarray(base_xy, dtype=np.float64)
    to_center = np.asarray(doorway_center_xy, dtype=np.float64) - base_xy
    length = np.sqrt(row_sum(to_center ** 2))[..., None]
    toward = to_center / np.maximum(length, 1e-9)
    through = np.broadcast_to(np.asarray(through_xy, dtype=np.float64), toward.shape)
    return np.where(np.asarray(passed_doorway, dtype=bool)[..., None], through, toward)


def passing_term(v_b, base_xy, doorway_center_xy, through_xy, passed_doorway, v_max: float = 0.5):
    """r_p = min(1, p·v_B / v_max) без нижнего ограничения"""
    p = progress_vector(base_xy, doorway_center_xy, through_xy, passed_doorway)
    v_b = np.asarray(v_b, dtype=np.float64)
    return np.minimum(1.0, row_sum(p * v_b) / v_max)


def shaping_terms(qd, qdd, psi, e, s, actions, n_colliding, cfg: RewardConfig):
    """(r_ma, r_pbt, r_psa, r_pcl, r_pc, r_s)"""
    qd = np.asarray(qd, dtype=np.float64)
    qdd = np.asarray(qdd, dtype=np.float64)
    r_ma = row_sum(np.exp(-cfg.ma_vel_coef * qd ** 2) + np.exp(-cfg.ma_acc_coef * qdd ** 2))
    r_pbt = np.where(np.asarray(psi) > cfg.psi_bar, -1.0, 0.0)
    reach = np.sqrt(row_sum((np.asarray(e) - np.asarray(s)) ** 2))
    r_psa = -np.clip((reach - cfg.psa_reach) / cfg.psa_ramp, 0.0, 1.0)
    limits = np.asarray(cfg.action_limits)
    ramps = np.asarray(cfg.action_ramps)
    excess = np.clip((np.abs(np.asarray(actions, dtype=np.float64)) - limits) / ramps, 0.0, 1.0)
    r_pcl = -row_sum(excess)
    r_pc = -np.asarray(n_colliding, dtype=np.float64)
    r_s = cfg.w_ma * r_ma + cfg.w_pbt * r_pbt + cfg.w_psa * r_psa + cfg.w_pcl * r_pcl \
        + cfg.w_pc * r_pc
    return r_ma, r_pbt, r_psa, r_pcl, r_pc, r_s


def stage_update(stage, theta, is_pull, behind_base, behind_ee, theta_pass: float):
    """Opening -> Passing при θ > θ_pass (для тянущих ещё и база, и ЭЗ за панелью)"""
    stage = np.asarray(stage, dtype=np.int64)
    gate = np.where(np.asarray(is_pull, dtype=bool),
                    np.asarray(behind_base, dtype=bool) & np.asarray(behind_ee, dtype=bool), True)
    advance = (np.asarray(theta) > theta_pass) & gate
    return np.where((stage == Stage.PASSING) | advance, int(Stage.PASSING), int(Stage.OPENING))


def compose_reward(terms: Dict[str, np.ndarray], stage, theta, is_pull, cfg: RewardConfig):
    """Возвращает (r_o, total) по правилам стадий"""
    theta = np.asarray(theta, dtype=np.float64)
    handle_part = np.where(theta < cfg.theta_enough, terms["r_hm"],
                           cfg.r_hm_max + cfg.adp_scale * terms["r_adp"])
    r_o = cfg.open_scale * terms["r_od"] + handle_part
    r_o_max = np.where(np.asarray(is_pull, dtype=bool), cfg.r_o_max(True), cfg.r_o_max(False))
    passing = np.asarray(stage) == Stage.PASSING
    total = np.where(passing, r_o_max + terms["r_p"], r_o) + terms["r_s"]
    return r_o, total


def compute_breakdown(*, e, h, e_o, in_zone, prev_in_zone, phi, phi_max, theta, zone_base,
                      zone_ee, is_pull, v_b, base_xy, doorway_center_xy, through_xy,
                      passed_doorway, qd, qdd, psi, shoulder, actions, n_colliding, stage,
                      cfg: RewardConfig) -> RewardBreakdown:
    r_ehd, r_th, r_eho, r_hg, r_plg, r_hm = handle_manipulation_terms(
        e, h, e_o, in_zone, prev_in_zone, phi, phi_max, cfg.hg_scale)
    r_od, r_adp = open_door_terms(theta, cfg.theta_hat, zone_base, zone_ee, is_pull,
                                  cfg.theta_enough)
    r_p = passing_term(v_b, base_xy, doorway_center_xy, through_xy, passed_doorway, cfg.v_max)
    r_ma, r_pbt, r_psa, r_pcl, r_pc, r_s = shaping_terms(qd, qdd, psi, e, shoulder, actions,
                                                          n_colliding, cfg)
    terms = dict(r_hm=r_hm, r_adp=r_adp, r_od=r_od, r_p=r_p, r_s=r_s)
    r_o, total = compose_reward(terms, stage, theta, is_pull, cfg)
    return RewardBreakdown(r_ehd=r_ehd, r_th=r_th, r_eho=r_eho, r_hg=r_hg, r_plg=r_plg,
                           r_od=r_od, r_adp=r_adp, r_hm=r_hm, r_o=r_o, r_p=r_p, r_ma=r_ma,
                           r_pbt=r_pbt, r_psa=r_psa, r_pcl=r_pcl, r_pc=r_pc, r_s=r_s,
                           total=total)
