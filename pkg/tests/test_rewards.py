import math

import numpy as np
import pytest

from doorpass_lab.core.config import RewardConfig
from doorpass_lab.sim.rewards import (Stage, compose_reward, handle_manipulation_terms,
                                      open_door_terms, passing_term, shaping_terms, stage_update)

CFG = RewardConfig()


def deg(x):
    return math.radians(x)


class TestHandleManipulation:
    def test_all_maxima(self):
        *_, r_hm = handle_manipulation_terms(np.zeros(3), np.zeros(3), 0.0, True, True, 1.0, 1.0)
        assert float(r_hm) == pytest.approx(3.5)

    @pytest.mark.parametrize("hg_scale", [0.5, 1.0, 2.0])
    def test_grasp_scale_matches_config_maximum(self, hg_scale):
        cfg = RewardConfig(hg_scale=hg_scale)
        *_, r_hm = handle_manipulation_terms(np.zeros(3), np.zeros(3), 0.0, True, True, 1.0, 1.0,
                                             cfg.hg_scale)
        assert float(r_hm) == pytest.approx(cfg.r_hm_max)

    def test_distance_term(self):
        r_ehd, *_ = handle_manipulation_terms(np.zeros(3), np.array([1.0, 0.0, 0.0]), 0.0,
                                              False, False, 0.0, 1.0)
        assert float(r_ehd) == pytest.approx(math.exp(-1.0))

    def test_losing_grasp_is_penalised(self):
        _, _, _, r_hg, r_plg, _ = handle_manipulation_terms(
            np.zeros(3), np.array([0.3, 0.0, 0.0]), 0.0, False, True, 0.0, 1.0)
        assert float(r_plg) == -1.0
        assert float(r_hg) == 0.0

    def test_no_grasp_credit_far_from_handle(self):
        _, _, _, r_hg, r_plg, _ = handle_manipulation_terms(
            np.zeros(3), np.array([1.5, 0.0, 0.0]), 0.0, True, False, 0.0, 1.0)
        assert float(r_hg) == 0.0
        assert float(r_plg) == 0.0


class TestOpenDoor:
    def test_target_angle(self):
        r_od, _ = open_door_terms(CFG.theta_hat, CFG.theta_hat, 0, 0, False, CFG.theta_enough)
        assert float(r_od) == pytest.approx(1.0)
        r_od, _ = open_door_terms(0.0, CFG.theta_hat, 0, 0, False, CFG.theta_enough)
        assert float(r_od) == pytest.approx(0.0)

    def test_zone_score_for_pull_doors(self):
        _, r_adp = open_door_terms(deg(40.0), CFG.theta_hat, 2, 1, True, CFG.theta_enough)
        assert float(r_adp) == 3.0

    def test_zone_score_gated(self):
        _, r_adp = open_door_terms(deg(40.0), CFG.theta_hat, 2, 1, False, CFG.theta_enough)
        assert float(r_adp) == 0.0
        _, r_adp = open_door_terms(deg(20.0), CFG.theta_hat, 2, 2, True, CFG.theta_enough)
        assert float(r_adp) == 0.0


class TestPassing:
    @pytest.mark.parametrize("speed, expected", [(0.5, 1.0), (0.25, 0.5), (-0.5, -1.0),
                                                 (0.8, 1.0)])
    def test_progress_toward_doorway(self, speed, expected):
        base = np.array([-1.0, 0.0])
        r_p = passing_term(np.array([speed, 0.0]), base, np.zeros(2), np.array([1.0, 0.0]), False)
        assert float(r_p) == pytest.approx(expected)

    def test_through_direction_after_crossing(self):
        # после плоскости стены p - направление прохода, а не на центр проёма
        r_p = passing_term(np.array([0.0, 0.5]), np.array([0.5, 0.0]), np.zeros(2),
                           np.array([0.0, 1.0]), True)
        assert float(r_p) == pytest.approx(1.0)


class TestShaping:
    def test_motion_term_at_rest(self):
        r_ma, *_ = shaping_terms(np.zeros(6), np.zeros(6), 0.0, np.zeros(3), np.zeros(3),
                                 np.zeros(9), 0, CFG)
        assert float(r_ma) == pytest.approx(12.0)

    @pytest.mark.parametrize("reach, expected", [(0.6, 0.0), (0.65, -0.5), (0.7, -1.0),
                                                 (1.2, -1.0)])
    def test_reach_penalty(self, reach, expected):
        _, _, r_psa, *_ = shaping_terms(np.zeros(6), np.zeros(6), 0.0, np.array([reach, 0, 0]),
                                        np.zeros(3), np.zeros(9), 0, CFG)
        assert float(r_psa) == pytest.approx(expected)

    def test_collisions(self):
        *_, r_pc, r_s = shaping_terms(np.zeros(6), np.zeros(6), 0.0, np.zeros(3), np.zeros(3),
                                      np.zeros(9), 2, CFG)
        assert float(r_pc) == -2.0
        # при прочих нулевых штрафах r_s = w_ma·12 − 4
        assert float(r_s) == pytest.approx(CFG.w_ma * 12.0 - 4.0)

    def test_tilt_and_command_limits(self):
        actions = np.zeros(9)
        actions[0] = 0.5 + 0.5 * CFG.action_ramps[0]
        _, r_pbt, _, r_pcl, _, _ = shaping_terms(np.zeros(6), np.zeros(6), deg(10.0),
                                                 np.zeros(3), np.zeros(3), actions, 0, CFG)
        assert float(r_pbt) == -1.0
        assert float(r_pcl) == pytest.approx(-0.5)


class TestStageMachine:
    def test_push_door_advances(self):
        stage = stage_update(Stage.OPENING, deg(71.0), False, False, False, CFG.theta_pass)
        assert int(stage) == Stage.PASSING

    def test_pull_door_needs_robot_behind_panel(self):
        stage = stage_update(Stage.OPENING, deg(80.0), True, False, True, CFG.theta_pass)
        assert int(stage) == Stage.OPENING
        stage = stage_update(Stage.OPENING, deg(80.0), True, True, True, CFG.theta_pass)
        assert int(stage) == Stage.PASSING

    def test_passing_is_absorbing(self):
        stage = stage_update(Stage.PASSING, deg(20.0), False, False, False, CFG.theta_pass)
        assert int(stage) == Stage.PASSING


class TestComposition:
    def terms(self, **values):
        base = dict(r_hm=0.0, r_adp=0.0, r_od=0.0, r_p=0.0, r_s=0.0)
        base.update(values)
        return {k: np.asarray(v, dtype=np.float64) for k, v in base.items()}

    def test_closed_door(self):
        _, total = compose_reward(self.terms(), Stage.OPENING, 0.0, False, CFG)
        assert float(total) == pytest.approx(0.0)

    def test_opened_pull_door(self):
        theta = deg(40.0)
        r_od = 1.0 - abs(40.0 - 75.0) / 75.0
        r_o, total = compose_reward(self.terms(r_od=r_od, r_adp=4.0), Stage.OPENING, theta,
                                    True, CFG)
        assert float(r_o) == pytest.approx(7.1)
        assert float(total) == pytest.approx(7.1)

    def test_passing_push_door(self):
        _, total = compose_reward(self.terms(r_p=1.0), Stage.PASSING, deg(90.0), False, CFG)
        assert float(total) == pytest.approx(7.5)

    def test_best_opening_reward_equals_cap(self):
        best_open, _ = compose_reward(self.terms(r_od=1.0, r_adp=4.0), Stage.OPENING,
                                      CFG.theta_hat, True, CFG)
        assert float(best_open) == pytest.approx(CFG.r_o_max(True))
