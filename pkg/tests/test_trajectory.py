"""Velocity holding, Kalman integration, capture scheduling, trajectory IO."""

import numpy as np
import pytest

import sweepnav as sn
from sweepnav.geometry import wrap_angle

from .oracles import line_trajectory, turn_in_place_trajectory


class TestTrajectoryType:
    def test_non_uniform_spacing_rejected(self):
        t = np.array([0.0, 0.02, 0.05])
        with pytest.raises(ValueError):
            sn.Trajectory(t, np.zeros((3, 2)), np.zeros(3), 50.0)

    def test_pose_and_path_length(self):
        traj = line_trajectory(speed=0.5, n_frames=101)
        assert traj.path_length() == pytest.approx(1.0, abs=1e-12)
        p = traj.pose(100)
        assert isinstance(p, sn.Pose2)
        assert p.x == pytest.approx(1.0, abs=1e-12)

    def test_pose_wraps_yaw(self):
        assert sn.Pose2(0.0, 0.0, 0.0, 7.0).yaw == pytest.approx(7.0 - 2.0 * np.pi)

    def test_csv_round_trip_is_bit_exact(self, tmp_path):
        rng = np.random.default_rng(12)
        traj = sn.Trajectory(np.arange(30) / 50.0, rng.normal(size=(30, 2)),
                             rng.uniform(-3, 3, 30), 50.0)
        path = tmp_path / "traj.csv"
        sn.save_trajectory(traj, path)
        back = sn.load_trajectory(path)
        assert np.array_equal(back.t, traj.t)
        assert np.array_equal(back.xy, traj.xy)
        assert np.array_equal(back.yaw, traj.yaw)
        assert back.frame_rate == pytest.approx(50.0)


class TestHeldVelocities:
    def test_frames_hold_the_latest_window_estimate(self):
        """Window estimates cover the frames after their start; frame 0
        mirrors frame 1 so integration has a velocity everywhere."""
        ests = [
            sn.VelocityEstimate(np.array([1.0, 0.0]), 0),
            sn.VelocityEstimate(np.array([0.0, 1.0]), 64),
        ]
        held = sn.held_velocities(ests, 129)
        assert held.shape == (129, 2)
        assert np.all(held[0] == [1.0, 0.0])
        assert np.all(held[1:65] == [1.0, 0.0])
        assert np.all(held[65:] == [0.0, 1.0])

    def test_order_of_estimates_does_not_matter(self):
        ests = [
            sn.VelocityEstimate(np.array([0.0, 1.0]), 64),
            sn.VelocityEstimate(np.array([1.0, 0.0]), 0),
        ]
        held = sn.held_velocities(ests, 129)
        np.testing.assert_allclose(held[1], [1.0, 0.0])

    def test_array_input_passes_through(self):
        v = np.ones((10, 2))
        assert np.array_equal(sn.held_velocities(v, 10), v)
        with pytest.raises(ValueError):
            sn.held_velocities(np.ones((9, 2)), 10)


class TestIntegrate:
    def test_constant_velocity_straight_line(self):
        """1 m/s east for 2 s lands at (2, 0)."""
        n = 101
        v = np.tile([1.0, 0.0], (n, 1))
        traj = sn.integrate(v, np.zeros(n), frame_rate=50.0)
        np.testing.assert_allclose(traj.xy[-1], [2.0, 0.0], atol=1e-6)
        np.testing.assert_allclose(traj.xy[0], [0.0, 0.0])
        assert len(traj) == n

    def test_two_window_turn(self):
        """One window east then one window north ends near (1.28, 1.28)."""
        ests = [
            sn.VelocityEstimate(np.array([1.0, 0.0]), 0),
            sn.VelocityEstimate(np.array([0.0, 1.0]), 64),
        ]
        held = sn.held_velocities(ests, 129)
        traj = sn.integrate(held, np.zeros(129), frame_rate=50.0)
        np.testing.assert_allclose(traj.xy[-1], [1.28, 1.28], atol=0.05)

    def test_matches_riemann_sum_when_observations_are_trusted(self):
        """Tiny observation noise makes the filter follow the velocity
        stream, so 60 s of smooth motion integrates to the running sum.
        The filter spreads each velocity change over the step it happens
        in, so the agreement bound scales with dt times the velocity
        excursion; a gentle arc keeps that well inside 1e-3 m."""
        n = 3001
        t = np.arange(n) / 50.0
        phi = 0.15 * np.sin(2.0 * np.pi * t / 60.0)
        v = 0.5 * np.column_stack([np.cos(phi), np.sin(phi)])
        ref = np.vstack([[0.0, 0.0], np.cumsum(v[1:] * 0.02, axis=0)])
        for kf in (sn.KalmanConfig(sigma_process=0.1, sigma_obs=1e-6),
                   sn.KalmanConfig(sigma_process=1e-3, sigma_obs=1e-8)):
            traj = sn.integrate(v, np.zeros(n), kf=kf, frame_rate=50.0)
            np.testing.assert_allclose(traj.xy, ref, atol=1e-3)

    def test_origin_and_clock_offsets(self):
        v = np.zeros((10, 2))
        traj = sn.integrate(v, np.zeros(10), origin=(3.0, 4.0), t0=2.5)
        np.testing.assert_allclose(traj.xy, np.tile([3.0, 4.0], (10, 1)))
        assert traj.t[0] == pytest.approx(2.5)

    def test_yaws_are_carried_through(self):
        yaws = np.linspace(0.0, 1.0, 10)
        traj = sn.integrate(np.zeros((10, 2)), yaws)
        np.testing.assert_allclose(traj.yaw, yaws, atol=1e-12)


class TestCaptureSchedule:
    def test_every_metre_on_a_five_metre_run(self):
        """5 m at 0.5 m/s with a 1 m gate: the start plus five more."""
        traj = line_trajectory(speed=0.5, n_frames=501)
        caps = sn.capture_schedule(traj, distance_m=1.0)
        assert [c.frame for c in caps] == [0, 100, 200, 300, 400, 500]
        assert caps[0].trigger == "first"
        assert all(c.trigger == "distance" for c in caps[1:])

    def test_turn_in_place_200_degrees(self):
        """A 200 degree spin with a 90 degree gate captures twice more."""
        traj = turn_in_place_trajectory(np.deg2rad(200.0), n_frames=201)
        caps = sn.capture_schedule(traj, distance_m=1.0, rotation_rad=np.pi / 2)
        assert [c.frame for c in caps] == [0, 90, 180]
        assert [c.trigger for c in caps] == ["first", "rotation", "rotation"]

    def test_stationary_run_captures_once(self):
        traj = sn.Trajectory(np.arange(100) / 50.0, np.zeros((100, 2)),
                             np.zeros(100), 50.0)
        caps = sn.capture_schedule(traj)
        assert len(caps) == 1 and caps[0].frame == 0

    def test_and_mode_requires_both_gates(self):
        traj = line_trajectory(speed=0.5, n_frames=501)
        caps = sn.capture_schedule(traj, mode="and")
        assert [c.frame for c in caps] == [0]

    def test_single_gate_modes(self):
        traj = turn_in_place_trajectory(np.deg2rad(200.0), n_frames=201)
        assert len(sn.capture_schedule(traj, mode="distance")) == 1
        assert len(sn.capture_schedule(traj, mode="rotation")) == 3

    def test_spacing_invariant_on_simulated_sweep(self, default_sim_traj):
        """Between consecutive captures neither accumulator reaches its
        gate early, and each capture's trigger names a gate that fired."""
        d, th = 1.0, np.pi / 2
        caps = sn.capture_schedule(default_sim_traj, distance_m=d, rotation_rad=th)
        assert caps[0].frame == 0
        xy, yaw = default_sim_traj.xy, default_sim_traj.yaw
        for a, b in zip(caps, caps[1:]):
            seg = np.linalg.norm(np.diff(xy[a.frame:b.frame + 1], axis=0), axis=1)
            rot = np.abs(wrap_angle(np.diff(yaw[a.frame:b.frame + 1])))
            dist_cum, rot_cum = seg.cumsum(), rot.cumsum()
            # strictly below both gates at every frame before the capture
            assert np.all(dist_cum[:-1] < d) and np.all(rot_cum[:-1] < th)
            fired_dist = dist_cum[-1] >= d * (1 - 1e-9)
            fired_rot = rot_cum[-1] >= th * (1 - 1e-9)
            assert fired_dist or fired_rot
            assert fired_dist if b.trigger == "distance" else fired_rot

    def test_rigid_motion_equivariance(self, default_sim_traj):
        """Translating or rotating the whole path never moves a capture."""
        base = [c.frame for c in sn.capture_schedule(default_sim_traj)]
        shifted = sn.Trajectory(
            default_sim_traj.t, default_sim_traj.xy + [10.0, -5.0],
            default_sim_traj.yaw, default_sim_traj.frame_rate,
        )
        assert [c.frame for c in sn.capture_schedule(shifted)] == base
        c, s = np.cos(0.7), np.sin(0.7)
        rot_xy = default_sim_traj.xy @ np.array([[c, s], [-s, c]])
        rotated = sn.Trajectory(
            default_sim_traj.t, rot_xy,
            wrap_angle(default_sim_traj.yaw + 0.7), default_sim_traj.frame_rate,
        )
        assert [c.frame for c in sn.capture_schedule(rotated)] == base

    def test_image_ids_are_zero_padded(self):
        assert sn.image_id_for_frame(42) == "img_000042"

    def test_capture_log_round_trip(self, tmp_path, default_sim_traj):
        from sweepnav.trajectory import load_captures, save_captures

        caps = sn.capture_schedule(default_sim_traj)
        path = tmp_path / "captures.jsonl"
        save_captures(caps, path)
        back = load_captures(path)
        assert len(back) == len(caps)
        assert all(a.frame == b.frame and a.trigger == b.trigger
                   for a, b in zip(caps, back))
        np.testing.assert_allclose([c.pose.x for c in back], [c.pose.x for c in caps])
