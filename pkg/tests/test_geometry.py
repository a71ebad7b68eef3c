import math

import numpy as np
import pytest

from worldwalk import (
    Action, ActionParams, CameraPose, Rotation, action_to_trajectory,
    camera_to_world, forward_vector, rotation_y, slerp, world_to_camera,
)

from util import random_pose, random_rotation


class TestForwardVector:
    def test_identity_looks_down_negative_z(self):
        np.testing.assert_allclose(forward_vector(CameraPose.identity()), [0, 0, -1], atol=1e-12)

    def test_yaw_90_looks_down_negative_x(self):
        np.testing.assert_allclose(
            forward_vector(CameraPose(rotation_y(90), np.zeros(3))), [-1, 0, 0], atol=1e-12)

    def test_half_turn_reverses(self):
        np.testing.assert_allclose(
            forward_vector(CameraPose(rotation_y(180), np.zeros(3))), [0, 0, 1], atol=1e-12)

    def test_unit_norm_for_random_rotations(self):
        rng = np.random.default_rng(3)
        for _ in range(100):
            f = forward_vector(CameraPose(random_rotation(rng), np.zeros(3)))
            assert abs(np.linalg.norm(f) - 1.0) < 1e-9


class TestRotationY:
    def test_zero_is_identity(self):
        np.testing.assert_allclose(rotation_y(0).as_matrix(), np.eye(3), atol=1e-15)

    def test_90_degrees_matrix(self):
        expected = np.array([[0, 0, 1], [0, 1, 0], [-1, 0, 0]], dtype=float)
        np.testing.assert_allclose(rotation_y(90).as_matrix(), expected, atol=1e-15)

    def test_full_turn_is_identity(self):
        np.testing.assert_allclose(rotation_y(360).as_matrix(), np.eye(3), atol=1e-12)

    def test_rejects_non_finite(self):
        with pytest.raises(ValueError):
            rotation_y(float("nan"))


class TestSlerp:
    def test_equal_endpoints(self):
        rng = np.random.default_rng(7)
        r = random_rotation(rng)
        assert r.angle_to(slerp(r, r, 0.7)) < 1e-9

    def test_same_axis_midpoint(self):
        mid = slerp(Rotation.identity(), rotation_y(90), 0.5)
        assert mid.angle_to(rotation_y(45)) < 1e-9

    def test_same_axis_linear_angle(self):
        third = slerp(Rotation.identity(), rotation_y(30), 1 / 3)
        assert third.angle_to(rotation_y(10)) < 1e-9

    def test_endpoints_exact(self):
        rng = np.random.default_rng(11)
        a, b = random_rotation(rng), random_rotation(rng)
        assert a.angle_to(slerp(a, b, 0.0)) < 1e-12
        assert b.angle_to(slerp(a, b, 1.0)) < 1e-12

    def test_angle_proportional(self):
        rng = np.random.default_rng(13)
        for _ in range(50):
            a, b = random_rotation(rng), random_rotation(rng)
            total = a.angle_to(b)
            for u in (0.2, 0.5, 0.9):
                assert abs(a.angle_to(slerp(a, b, u)) - u * total) < 1e-9

    def test_rejects_out_of_range_fraction(self):
        with pytest.raises(ValueError):
            slerp(Rotation.identity(), rotation_y(10), 1.5)


class TestWorldToCamera:
    def test_identity_pose(self):
        np.testing.assert_allclose(
            world_to_camera(CameraPose.identity(), [1, 2, -3]), [1, 2, -3], atol=1e-15)

    def test_pure_translation(self):
        pose = CameraPose(Rotation.identity(), np.array([0.0, 0.0, -4.0]))
        np.testing.assert_allclose(world_to_camera(pose, [0, 0, -5]), [0, 0, -1], atol=1e-15)

    def test_yaw_90_pose(self):
        pose = CameraPose(rotation_y(90), np.zeros(3))
        np.testing.assert_allclose(world_to_camera(pose, [-1, 0, 0]), [0, 0, -1], atol=1e-12)

    def test_round_trip_random(self):
        rng = np.random.default_rng(17)
        for _ in range(1000):
            pose = random_pose(rng)
            x = rng.uniform(-10, 10, 3)
            back = world_to_camera(pose, camera_to_world(pose, x))
            assert np.abs(back - x).max() < 1e-9


class TestActionValidation:
    def test_rejects_unknown_keys(self):
        with pytest.raises(ValueError):
            Action(frozenset("WX"))

    def test_rejects_negative_eta(self):
        with pytest.raises(ValueError):
            ActionParams(eta=-0.1)

    def test_rejects_bad_theta(self):
        with pytest.raises(ValueError):
            ActionParams(theta_deg=181)

    def test_rejects_bad_frames(self):
        with pytest.raises(ValueError):
            ActionParams(frames=0)

    def test_keys_string_canonical_order(self):
        assert Action.of("AW").keys_string() == "WA"


class TestActionToTrajectory:
    def test_forward_walk(self):
        traj = action_to_trajectory(
            Action.of("W", ActionParams(eta=1.0, frames=4)), CameraPose.identity())
        got = [p.translation.tolist() for p in traj.poses[1:]]
        assert got == [[0, 0, -1], [0, 0, -2], [0, 0, -3], [0, 0, -4]]

    def test_left_turn_rotations(self):
        traj = action_to_trajectory(
            Action.of("A", ActionParams(theta_deg=90, frames=3)), CameraPose.identity())
        for k, deg in [(1, 30), (2, 60), (3, 90)]:
            assert traj[k].rotation.angle_to(rotation_y(deg)) < 1e-9
            np.testing.assert_array_equal(traj[k].translation, np.zeros(3))

    def test_arc_walk_matches_brute_force(self):
        # independent oracle: same-axis slerp angle is linear, so frame k of a
        # 90-degree turn over 90 frames yaws exactly k degrees
        p = [0.0, 0.0, 0.0]
        for k in range(1, 91):
            a = math.radians(k)
            p[0] -= math.sin(a)
            p[2] -= math.cos(a)
        oracle_norm = math.hypot(p[0], p[2])
        assert oracle_norm == pytest.approx(81.02949690840157, abs=1e-12)

        traj = action_to_trajectory(
            Action.of("WA", ActionParams(eta=1.0, theta_deg=90, frames=90)),
            CameraPose.identity())
        assert np.abs(traj.final.translation - p).max() < 1e-9
        assert np.linalg.norm(traj.final.translation) == pytest.approx(oracle_norm, abs=1e-9)

    def test_idle_keeps_pose(self):
        start = CameraPose(rotation_y(25), np.array([1.0, 2.0, 3.0]))
        traj = action_to_trajectory(Action.of("", ActionParams(frames=5)), start)
        assert len(traj) == 6
        for pose in traj.poses:
            assert pose.rotation == start.rotation
            np.testing.assert_array_equal(pose.translation, start.translation)

    def test_opposite_keys_cancel(self):
        start = CameraPose.identity()
        traj = action_to_trajectory(Action.of("WS", ActionParams(frames=5)), start)
        np.testing.assert_array_equal(traj.final.translation, start.translation)
        traj = action_to_trajectory(Action.of("AD", ActionParams(frames=5)), start)
        assert traj.final.rotation == start.rotation

    def test_pose_zero_is_initial_bit_exact(self):
        rng = np.random.default_rng(19)
        start = random_pose(rng)
        traj = action_to_trajectory(Action.of("WA"), start)
        assert traj[0] is start

    def test_continuity_across_steps_bit_exact(self):
        rng = np.random.default_rng(23)
        pose = CameraPose.identity()
        for _ in range(100):
            keys = "".join(rng.choice(list("WASD"), size=rng.integers(0, 3), replace=False))
            params = ActionParams(eta=float(rng.uniform(0, 0.2)),
                                  theta_deg=float(rng.uniform(0, 60)),
                                  frames=int(rng.integers(1, 12)))
            traj = action_to_trajectory(Action.of(keys, params), pose)
            assert traj[0] is pose
            assert traj[0].rotation == pose.rotation
            assert np.array_equal(traj[0].translation, pose.translation)
            pose = traj.final

    def test_inverse_actions_return_home(self):
        params = ActionParams(eta=0.3, theta_deg=40, frames=7)
        start = CameraPose.identity()
        mid = action_to_trajectory(Action.of("W", params), start).final
        back = action_to_trajectory(Action.of("S", params), mid).final
        assert np.abs(back.translation - start.translation).max() < 1e-9

        mid = action_to_trajectory(Action.of("A", params), start).final
        back = action_to_trajectory(Action.of("D", params), mid).final
        assert back.rotation.angle_to(start.rotation) < 1e-9

    def test_slerp_uniform_angular_steps(self):
        rng = np.random.default_rng(29)
        start = random_pose(rng)
        params = ActionParams(theta_deg=50, frames=9)
        traj = action_to_trajectory(Action.of("A", params), start)
        expected = math.radians(params.theta_deg) / params.frames
        for k in range(len(traj) - 1):
            delta = traj[k].rotation.angle_to(traj[k + 1].rotation)
            assert abs(delta - expected) < 1e-9

    def test_eta_scaling_is_exactly_linear(self):
        # power-of-two scale factors scale every partial sum bit-exactly
        start = CameraPose(rotation_y(33), np.zeros(3))
        for scale in (2.0, 4.0, 0.5):
            a = action_to_trajectory(Action.of("W", ActionParams(eta=0.05, frames=8)), start)
            b = action_to_trajectory(Action.of("W", ActionParams(eta=0.05 * scale, frames=8)), start)
            for k in range(len(a)):
                da = a[k].translation - a[0].translation
                db = b[k].translation - b[0].translation
                np.testing.assert_array_equal(db, da * scale)

    def test_eta_scaling_linear_from_any_start(self):
        rng = np.random.default_rng(31)
        for _ in range(20):
            start = random_pose(rng)
            scale = float(rng.uniform(0.2, 5.0))
            a = action_to_trajectory(Action.of("S", ActionParams(eta=0.07, frames=6)), start)
            b = action_to_trajectory(Action.of("S", ActionParams(eta=0.07 * scale, frames=6)), start)
            for k in range(len(a)):
                da = a[k].translation - a[0].translation
                db = b[k].translation - b[0].translation
                np.testing.assert_allclose(db, da * scale, rtol=1e-12, atol=1e-13)

    def test_trajectory_length(self):
        traj = action_to_trajectory(Action.of("W", ActionParams(frames=33)), CameraPose.identity())
        assert len(traj) == 34
