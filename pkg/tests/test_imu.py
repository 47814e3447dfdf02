"""IMU sequences, file round trips, the anchored frame, and windowing."""

import numpy as np
import pytest

import sweepnav as sn
from sweepnav import geometry as geo
from sweepnav.imu import HacfSequence

from .conftest import make_window


def _static_seq(acc, n=50, rate=100.0):
    t = np.arange(n) / rate
    return sn.ImuSequence(t, np.tile(acc, (n, 1)), np.zeros((n, 3)))


def _identity_orients(t):
    q = np.tile(geo.quat_identity(), (len(t), 1))
    return sn.OrientationSequence(t, q)


class TestImuSequence:
    def test_non_monotonic_timestamp_is_named(self):
        """The error points at the first offending sample."""
        with pytest.raises(ValueError, match="non-monotonic timestamp at index 2"):
            sn.ImuSequence([0.0, 0.02, 0.01], np.zeros((3, 3)), np.zeros((3, 3)))

    def test_non_finite_rejected(self):
        acc = np.zeros((3, 3))
        acc[1, 0] = np.nan
        with pytest.raises(ValueError):
            sn.ImuSequence([0.0, 0.01, 0.02], acc, np.zeros((3, 3)))

    def test_sample_rate_from_median_spacing(self):
        seq = _static_seq(np.array([0.0, 0.0, 9.81]), n=100, rate=50.0)
        assert seq.sample_rate() == pytest.approx(50.0)

    def test_arrays_are_read_only(self):
        seq = _static_seq(np.array([0.0, 0.0, 9.81]))
        with pytest.raises(ValueError):
            seq.acc[0, 0] = 1.0


class TestFileRoundTrip:
    @pytest.mark.parametrize("suffix", [".csv", ".jsonl"])
    def test_bit_exact_round_trip(self, tmp_path, suffix):
        """Written floats parse back to the identical doubles."""
        rng = np.random.default_rng(0)
        seq = sn.ImuSequence(np.arange(20) / 50.0, rng.normal(size=(20, 3)),
                             rng.normal(size=(20, 3)))
        path = tmp_path / f"imu{suffix}"
        sn.save_imu(seq, path)
        back = sn.load_imu(path)
        assert np.array_equal(back.t, seq.t)
        assert np.array_equal(back.acc, seq.acc)
        assert np.array_equal(back.gyro, seq.gyro)

    def test_parse_error_names_line(self, tmp_path):
        path = tmp_path / "imu.csv"
        path.write_text("t,ax,ay,az,gx,gy,gz\n0.0,0,0,9.81,0,0,0\nnot-a-number\n")
        with pytest.raises(ValueError, match=":3:"):
            sn.load_imu(path)


class TestResample:
    def test_uniform_input_passes_through(self):
        seq = _static_seq(np.array([0.0, 0.0, 9.81]), n=100, rate=50.0)
        out = sn.resample(seq, rate_hz=50.0)
        assert np.array_equal(out.t, seq.t)
        assert np.array_equal(out.acc, seq.acc)

    def test_jittered_input_lands_on_grid(self):
        rng = np.random.default_rng(1)
        t = np.arange(100) / 50.0 + rng.uniform(-2e-3, 2e-3, 100)
        t = np.sort(t)
        seq = sn.ImuSequence(t, np.tile([0.0, 0.0, 9.81], (100, 1)), np.zeros((100, 3)))
        out = sn.resample(seq, rate_hz=50.0)
        np.testing.assert_allclose(np.diff(out.t), 0.02, atol=1e-12)
        np.testing.assert_allclose(out.acc[:, 2], 9.81, atol=1e-9)

    def test_gap_is_an_error(self):
        t = np.concatenate([np.arange(50) / 50.0, np.arange(50) / 50.0 + 2.0])
        seq = sn.ImuSequence(t, np.zeros((100, 3)), np.zeros((100, 3)))
        with pytest.raises(ValueError, match="gap"):
            sn.resample(seq, rate_hz=50.0, max_gap_s=0.5)


class TestAnchoredFrame:
    def test_level_static_device_reads_zero(self):
        """Gravity is removed exactly for a level, motionless device."""
        seq = _static_seq(np.array([0.0, 0.0, 9.81]))
        hacf = sn.to_hacf(seq, _identity_orients(seq.t))
        np.testing.assert_allclose(hacf.a, 0.0, atol=1e-12)
        np.testing.assert_allclose(hacf.g, 0.0, atol=1e-12)

    def test_tilted_static_device_reads_zero(self):
        """A device rolled 90 degrees senses gravity along its y axis."""
        q = geo.quat_from_axis_angle(np.array([1.0, 0.0, 0.0]), np.pi / 2)
        seq = _static_seq(np.array([0.0, 9.81, 0.0]))
        orients = sn.OrientationSequence(seq.t, np.tile(q, (len(seq.t), 1)))
        hacf = sn.to_hacf(seq, orients)
        np.testing.assert_allclose(hacf.a, 0.0, atol=1e-9)

    def test_initial_heading_does_not_leak(self):
        """The same device-frame motion maps to the same anchored vector
        no matter which way the device initially faces."""
        acc = np.array([1.0, 0.0, 9.81])
        seq = _static_seq(acc)
        base = sn.to_hacf(seq, _identity_orients(seq.t))
        for yaw0 in (np.pi / 2, -2.0, 0.3):
            q = geo.quat_about_z(yaw0)
            orients = sn.OrientationSequence(seq.t, np.tile(q, (len(seq.t), 1)))
            out = sn.to_hacf(seq, orients)
            np.testing.assert_allclose(out.a, base.a, atol=1e-12)
        np.testing.assert_allclose(base.a[0], [1.0, 0.0, 0.0], atol=1e-12)

    def test_anchoring_invariance_for_arbitrary_orientations(self):
        """Pre-rotating every orientation about z leaves the output alone."""
        rng = np.random.default_rng(2)
        n = 40
        t = np.arange(n) / 50.0
        q = np.array([geo.quat_normalize(rng.normal(size=4)) for _ in range(n)])
        seq = sn.ImuSequence(t, rng.normal(size=(n, 3)), rng.normal(size=(n, 3)))
        base = sn.to_hacf(seq, sn.OrientationSequence(t, q))
        delta = 1.234
        qz = geo.quat_about_z(delta)
        q2 = np.array([geo.quat_multiply(qz, qi) for qi in q])
        out = sn.to_hacf(seq, sn.OrientationSequence(t, q2))
        np.testing.assert_allclose(out.a, base.a, atol=1e-12)
        np.testing.assert_allclose(out.g, base.g, atol=1e-12)

    def test_gyro_is_rotated_but_not_offset(self):
        gyro = np.tile([0.1, -0.2, 0.3], (30, 1))
        t = np.arange(30) / 50.0
        seq = sn.ImuSequence(t, np.tile([0.0, 0.0, 9.81], (30, 1)), gyro)
        hacf = sn.to_hacf(seq, _identity_orients(t))
        np.testing.assert_allclose(hacf.g, gyro, atol=1e-12)


class TestWindows:
    def _hacf(self, n):
        t = np.arange(n) / 50.0
        return HacfSequence(t, np.zeros((n, 3)), np.zeros((n, 3)))

    def test_counts_at_boundaries(self):
        """129 samples hold exactly two 65-sample windows; 64 hold none."""
        assert [w.start_frame for w in sn.make_windows(self._hacf(129), tau=64)] == [0, 64]
        assert sn.make_windows(self._hacf(64), tau=64) == []
        assert [w.start_frame for w in sn.make_windows(self._hacf(65), tau=64)] == [0]

    def test_full_coverage_when_length_divides(self):
        """Back-to-back windows jointly cover every frame."""
        windows = sn.make_windows(self._hacf(129), tau=64)
        covered = set()
        for w in windows:
            covered.update(range(w.start_frame, w.start_frame + w.tau + 1))
        assert covered == set(range(129))

    def test_custom_stride_overlaps(self):
        starts = [w.start_frame for w in sn.make_windows(self._hacf(129), tau=64, stride=32)]
        assert starts == [0, 32, 64]

    def test_window_shape_contract(self):
        w = make_window(tau=64)
        assert w.tau == 64
        with pytest.raises(ValueError):
            sn.ImuWindow(0, np.zeros((1, 3)), np.zeros((1, 3)))
        with pytest.raises(ValueError):
            sn.ImuWindow(0, np.zeros((5, 3)), np.zeros((4, 3)))
