import numpy as np
import pytest

from doorpass_lab.core.config import ContactConfig
from doorpass_lab.sim.door_model import DoorSpec, DoorState, handle_kinematics
from doorpass_lab.sim.interaction import (EE_PROBE, LINK_NAMES, PROBE_LINKS, colliding_links,
                                          handle_coupling, panel_contact, probe_layout,
                                          update_grasp)

K_G = 2000.0


def closed_handle(spec):
    return handle_kinematics(spec, DoorState.closed(1))


class TestHandleCoupling:
    def test_rest_gives_zero_force(self):
        spec = DoorSpec.make("push", "right")
        handle = closed_handle(spec)
        zeros = np.zeros((1, 3))
        handle_torque, hinge_torque, reaction = handle_coupling(handle.point, zeros, handle,
                                                                zeros, np.array([True]), K_G)
        assert float(handle_torque[0]) == 0.0
        assert float(hinge_torque[0]) == 0.0
        np.testing.assert_array_equal(reaction, 0.0)

    def test_hinge_torque_from_lever_arm(self):
        # точка захвата в 0.4 м (по панели) от петли: d_w − h_o = 0.4
        spec = DoorSpec.make("push", "right", d_w=0.9, h_l=0.1, h_o=0.5)
        handle = closed_handle(spec)
        normal = np.array([[1.0, 0.0, 0.0]])
        ee = handle.point + normal * (10.0 / K_G)
        zeros = np.zeros((1, 3))
        handle_torque, hinge_torque, reaction = handle_coupling(ee, zeros, handle, zeros,
                                                                np.array([True]), K_G)
        assert float(hinge_torque[0]) == pytest.approx(4.0)
        assert float(handle_torque[0]) == pytest.approx(0.0, abs=1e-12)
        np.testing.assert_allclose(reaction[0], [-10.0, 0.0, 0.0])

    def test_force_along_lever_is_frictionless(self):
        spec = DoorSpec.make("pull", "left")
        handle = closed_handle(spec)
        ee = handle.point + 0.01 * handle.lever_dir
        zeros = np.zeros((1, 3))
        handle_torque, hinge_torque, reaction = handle_coupling(ee, zeros, handle, zeros,
                                                                np.array([True]), K_G)
        assert float(handle_torque[0]) == pytest.approx(0.0, abs=1e-9)
        assert float(hinge_torque[0]) == pytest.approx(0.0, abs=1e-9)
        np.testing.assert_allclose(reaction, 0.0, atol=1e-9)

    def test_no_force_without_grasp(self):
        spec = DoorSpec.make("push", "right")
        handle = closed_handle(spec)
        ee = handle.point + 0.02
        zeros = np.zeros((1, 3))
        _, hinge_torque, reaction = handle_coupling(ee, zeros, handle, zeros,
                                                    np.array([False]), K_G)
        assert float(hinge_torque[0]) == 0.0
        np.testing.assert_array_equal(reaction, 0.0)


class TestGraspHysteresis:
    def test_grasp_and_release(self):
        grasped, lost = update_grasp(np.array([False]), np.array([True]), np.array([0.0]), 0.1)
        assert grasped[0] and not lost[0]
        grasped, lost = update_grasp(grasped, np.array([False]), np.array([0.05]), 0.1)
        assert grasped[0] and not lost[0]
        grasped, lost = update_grasp(grasped, np.array([False]), np.array([0.3]), 0.1)
        assert not grasped[0] and lost[0]


def probes_far_away():
    radii = probe_layout(ContactConfig())
    positions = np.tile(np.array([-5.0, 0.0, 1.0]), (1, len(radii), 1))
    return positions, np.zeros_like(positions), radii


class TestPanelContact:
    def test_no_penetration(self):
        spec = DoorSpec.make("push", "right")
        positions, velocities, radii = probes_far_away()
        contact = panel_contact(positions, velocities, radii, spec, DoorState.closed(1))
        np.testing.assert_array_equal(contact.probe_forces, 0.0)
        assert float(contact.hinge_torque[0]) == 0.0
        assert not colliding_links(contact.panel_hit | contact.wall_hit).any()

    def test_static_penetration(self):
        spec = DoorSpec.make("push", "right", d_w=0.9, d_t=0.04)
        radius = 0.35
        # база вдавлена в панель на 0.01 м в 0.5 м от петли
        position = np.array([[[-(0.02 + radius - 0.01), 0.45 - 0.5, 1.0]]])
        contact = panel_contact(position, np.zeros_like(position), [radius], spec,
                                DoorState.closed(1))
        np.testing.assert_allclose(contact.probe_forces[0, 0], [-50.0, 0.0, 0.0], atol=1e-9)
        assert float(contact.hinge_torque[0]) == pytest.approx(25.0)
        assert bool(contact.panel_hit[0, 0]) and not bool(contact.wall_hit[0, 0])

    def test_wall_contact_has_no_door_torque(self):
        spec = DoorSpec.make("push", "right", d_w=0.9)
        positions, velocities, radii = probes_far_away()
        positions[0, EE_PROBE] = [-0.06, -0.8, 1.0]
        contact = panel_contact(positions, velocities, radii, spec, DoorState.closed(1))
        assert float(contact.hinge_torque[0]) == 0.0
        flags = colliding_links(contact.panel_hit | contact.wall_hit)[0]
        hit = {name for name, flag in zip(LINK_NAMES, flags) if flag}
        assert hit == {LINK_NAMES[PROBE_LINKS[EE_PROBE]]}
        assert contact.probe_forces[0, EE_PROBE, 0] < 0.0
