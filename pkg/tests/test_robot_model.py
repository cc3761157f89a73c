import math

import numpy as np
import pytest

from doorpass_lab.core.config import RobotConfig
from doorpass_lab.core.exceptions import NumericalError
from doorpass_lab.sim.robot_model import (ArmParams, arm_pd_target, clip_base_command, fk,
                                          grasp_orientation_error, grasp_zone_test, hook_axis,
                                          initial_robot_state, step_robot)


@pytest.fixture
def arm() -> ArmParams:
    return ArmParams.from_config(RobotConfig())


def rest_state(arm, n=1):
    zeros = np.zeros(n)
    return initial_robot_state(arm, zeros, zeros, zeros, zeros, zeros)


class TestBaseCommand:
    def test_speed_limited(self):
        np.testing.assert_allclose(clip_base_command([0.8, 0.0, 0.0]), [0.5, 0.0, 0.0])

    def test_deadband(self):
        np.testing.assert_array_equal(clip_base_command([0.05, 0.0, 0.05]), [0.0, 0.0, 0.0])

    def test_boundary_unchanged(self):
        np.testing.assert_allclose(clip_base_command([0.3, 0.4, 0.5]), [0.3, 0.4, 0.5])

    def test_yaw_rate_limited(self):
        np.testing.assert_allclose(clip_base_command([0.0, 0.0, -3.0]), [0.0, 0.0, -1.0])


class TestPdTarget:
    @pytest.fixture
    def single(self) -> ArmParams:
        return ArmParams.from_config(RobotConfig(q_default=(0.3,) * 6, kp=(50.0,) * 6,
                                                 tau_limits=(40.0,) * 6))

    def test_inside_bound(self, single):
        target = arm_pd_target(np.full(6, 0.6), np.full(6, 0.2), single)
        assert target[0] == pytest.approx(0.6)

    def test_clipped_to_bound(self, single):
        target = arm_pd_target(np.full(6, 2.0), np.full(6, 0.2), single)
        assert target[0] == pytest.approx(0.76)

    def test_rest_fixed_point(self, single):
        target = arm_pd_target(np.zeros(6), np.full(6, 0.3), single)
        np.testing.assert_allclose(target, np.full(6, 0.3))


class TestKinematics:
    def test_zero_configuration(self, arm):
        kin = fk(np.zeros((1, 6)), 0.0, 0.0, 0.0, arm)
        reach = float(np.sum(arm.link_lengths[1:]))
        expected = arm.mount_offset + np.array([reach, 0.0, arm.link_lengths[0]])
        np.testing.assert_allclose(kin.ee[0], expected, atol=1e-12)

    def test_first_joint_yaws_about_mount(self, arm):
        q = np.zeros((1, 6))
        before = fk(q, 0.0, 0.0, 0.0, arm).ee[0]
        q[0, 0] = 1.0
        after = fk(q, 0.0, 0.0, 0.0, arm).ee[0]
        mount = arm.mount_offset
        assert after[2] == pytest.approx(before[2])
        assert np.hypot(*(after - mount)[:2]) == pytest.approx(np.hypot(*(before - mount)[:2]))
        angle = math.atan2(after[1] - mount[1], after[0] - mount[0])
        assert angle == pytest.approx(1.0)

    def test_jacobian_matches_finite_differences(self, arm):
        q = np.array([[0.3, -0.7, 1.4, -0.5, 0.4, -0.2]])
        base = (0.4, -0.3, 0.6)
        kin = fk(q, *base, arm)
        eps = 1e-6
        for i in range(6):
            shifted = q.copy()
            shifted[0, i] += eps
            column = (fk(shifted, *base, arm).ee[0] - kin.ee[0]) / eps
            np.testing.assert_allclose(kin.jacobian[0, :, i], column, atol=1e-5)


class TestStepRobot:
    def test_equilibrium_is_preserved(self, arm):
        state = rest_state(arm)
        nxt = step_robot(state, np.zeros((1, 9)), np.zeros((1, 3)), np.zeros((1, 3)), 0.005, arm)
        np.testing.assert_array_equal(nxt.arm.q, state.arm.q)
        assert float(nxt.base.x[0]) == 0.0
        assert float(nxt.base.vx[0]) == 0.0

    def test_velocity_tracking_is_first_order(self, arm):
        state = rest_state(arm)
        action = np.zeros((1, 9))
        action[0, 0] = 0.5
        dt = 0.005
        for _ in range(200):
            state = step_robot(state, action, np.zeros((1, 3)), np.zeros((1, 3)), dt, arm)
        expected = 0.5 * (1.0 - math.exp(-1.0 / arm.tau_loco))
        assert float(state.base.vx[0]) == pytest.approx(expected, abs=1e-3)

    def test_tilt_from_horizontal_force(self, arm):
        state = rest_state(arm)
        push = np.array([[100.0, 0.0, 0.0]])
        nxt = step_robot(state, np.zeros((1, 9)), push, np.zeros((1, 3)), 0.005, arm)
        assert float(nxt.base.psi[0]) == pytest.approx(0.2)
        nxt = step_robot(state, np.zeros((1, 9)), 10 * push, np.zeros((1, 3)), 0.005, arm)
        assert float(nxt.base.psi[0]) == pytest.approx(arm.tilt_cap)

    def test_deterministic(self, arm):
        action = np.array([[0.3, -0.2, 0.4, 0.5, -0.5, 0.2, 0.1, 0.0, -0.3]])
        force = np.array([[3.0, -1.0, 2.0]])
        a = step_robot(rest_state(arm), action, force, force, 0.005, arm)
        b = step_robot(rest_state(arm), action, force, force, 0.005, arm)
        assert a.arm.q.tobytes() == b.arm.q.tobytes()
        assert a.base.x.tobytes() == b.base.x.tobytes()

    def test_non_finite_input_rejected(self, arm):
        action = np.zeros((1, 9))
        action[0, 4] = np.nan
        with pytest.raises(NumericalError):
            step_robot(rest_state(arm), action, np.zeros((1, 3)), np.zeros((1, 3)), 0.005, arm)


class TestGraspZone:
    def test_containment(self, arm):
        kin = fk(np.zeros((1, 6)), 0.0, 0.0, 0.0, arm)
        assert bool(grasp_zone_test(kin.frame, kin.ee, kin.ee, arm.grasp_zone)[0])
        far = kin.ee + np.array([[1.0, 0.0, 0.0]])
        assert not bool(grasp_zone_test(kin.frame, kin.ee, far, arm.grasp_zone)[0])

    def test_aligned_hook_has_zero_error(self, arm):
        kin = fk(np.zeros((1, 6)), 0.0, 0.0, 0.0, arm)
        error = grasp_orientation_error(kin.frame, hook_axis(kin.frame))
        assert float(error[0]) == pytest.approx(0.0, abs=1e-6)
