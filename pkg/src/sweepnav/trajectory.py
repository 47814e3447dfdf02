"""Planar trajectories: Kalman-filtered velocity integration and captures.

Windowed velocity estimates are fused by a constant-velocity Kalman
filter into per-frame positions; yaw comes from the orientation stream,
not from the filter.  A capture schedule walks the resulting trajectory
and fires whenever the robot has moved or turned enough since the last
capture, which is how image capture is throttled on the real system.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .geometry import wrap_angle
from .imu import _frozen

TRAJECTORY_CSV_HEADER = "t,x,y,yaw"

# relative slack on capture thresholds so that accumulated float error in
# "exactly d meters" fixtures cannot swallow the triggering frame
_TRIGGER_EPS = 1e-9


@dataclass(frozen=True)
class Pose2:
    t: float
    x: float
    y: float
    yaw: float

    def __post_init__(self):
        object.__setattr__(self, "yaw", float(wrap_angle(self.yaw)))

    @property
    def xy(self) -> np.ndarray:
        return np.array([self.x, self.y])


@dataclass(frozen=True)
class Trajectory:
    """Uniformly sampled poses. Yaw is wrapped to (-pi, pi] at construction."""

    t: np.ndarray  # (n,)
    xy: np.ndarray  # (n, 2)
    yaw: np.ndarray  # (n,)
    frame_rate: float

    def __post_init__(self):
        t = _frozen(self.t)
        xy = _frozen(self.xy)
        yaw = _frozen(wrap_angle(np.asarray(self.yaw, dtype=float)))
        n = len(t)
        if xy.shape != (n, 2) or yaw.shape != (n,):
            raise ValueError(f"expected xy ({n}, 2) and yaw ({n},), got {xy.shape}, {yaw.shape}")
        if not (np.isfinite(t).all() and np.isfinite(xy).all() and np.isfinite(yaw).all()):
            raise ValueError("non-finite trajectory entry")
        if self.frame_rate <= 0:
            raise ValueError("frame_rate must be positive")
        if n >= 2:
            dt = np.diff(t)
            if (dt <= 0).any():
                raise ValueError(f"non-monotonic timestamp at index {int(np.argmax(dt <= 0)) + 1}")
            if np.max(np.abs(dt - 1.0 / self.frame_rate)) > 1e-6:
                raise ValueError("timestamps are not uniform at the stated frame rate")
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "xy", xy)
        object.__setattr__(self, "yaw", yaw)

    def __len__(self) -> int:
        return len(self.t)

    def pose(self, i: int) -> Pose2:
        return Pose2(float(self.t[i]), float(self.xy[i, 0]), float(self.xy[i, 1]), float(self.yaw[i]))

    def path_length(self) -> float:
        if len(self) < 2:
            return 0.0
        return float(np.linalg.norm(np.diff(self.xy, axis=0), axis=1).sum())


def save_trajectory(traj: Trajectory, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(TRAJECTORY_CSV_HEADER + "\n")
        for i in range(len(traj)):
            vals = [traj.t[i], traj.xy[i, 0], traj.xy[i, 1], traj.yaw[i]]
            fh.write(",".join(repr(float(v)) for v in vals) + "\n")


def load_trajectory(path, frame_rate: float | None = None) -> Trajectory:
    path = Path(path)
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0].strip() != TRAJECTORY_CSV_HEADER:
        raise ValueError(f"{path}:1: expected header '{TRAJECTORY_CSV_HEADER}'")
    rows = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) != 4:
            raise ValueError(f"{path}:{lineno}: expected 4 fields, got {len(parts)}")
        try:
            rows.append([float(p) for p in parts])
        except ValueError as exc:
            raise ValueError(f"{path}:{lineno}: {exc}") from None
    if not rows:
        raise ValueError(f"{path}: empty trajectory")
    arr = np.asarray(rows, dtype=float)
    if frame_rate is None:
        if len(arr) < 2:
            raise ValueError(f"{path}: cannot infer frame rate from a single pose")
        frame_rate = 1.0 / float(np.median(np.diff(arr[:, 0])))
    try:
        return Trajectory(arr[:, 0], arr[:, 1:3], arr[:, 3], frame_rate)
    except ValueError as exc:
        raise ValueError(f"{path}: {exc}") from None


# ---------------------------------------------------------------------------
# Kalman-filtered integration


@dataclass(frozen=True)
class KalmanConfig:
    """Constant-velocity filter noise levels.

    ``sigma_process`` is the white-acceleration density driving the
    velocity state; ``sigma_obs`` is the per-axis standard deviation
    assigned to velocity observations.
    """

    sigma_process: float = 0.1
    sigma_obs: float = 0.1

    def __post_init__(self):
        if self.sigma_process < 0 or self.sigma_obs <= 0:
            raise ValueError("sigma_process must be >= 0 and sigma_obs > 0")


def held_velocities(velocities, n_frames: int) -> np.ndarray:
    """Expand windowed estimates to one velocity per frame.

    Frame f (f >= 1) takes the estimate of the most recent window that
    started at or before f - 1; frames past the last window hold its
    value.  With non-overlapping windows this assigns each window's
    velocity to exactly the frames it spans.  Frame 0 mirrors frame 1
    so the array is fully populated.  An already-expanded (n_frames, 2)
    array passes through unchanged.
    """
    if isinstance(velocities, np.ndarray):
        v = np.asarray(velocities, dtype=float)
        if v.shape != (n_frames, 2):
            raise ValueError(f"expected ({n_frames}, 2) velocities, got {v.shape}")
        return v
    if len(velocities) == 0:
        raise ValueError("no velocity estimates")
    ests = sorted(velocities, key=lambda e: e.window_start)
    starts = np.array([e.window_start for e in ests])
    vs = np.array([e.v for e in ests])
    out = np.zeros((n_frames, 2))
    for f in range(1, n_frames):
        idx = int(np.searchsorted(starts, f - 1, side="right")) - 1
        out[f] = vs[max(idx, 0)]
    if n_frames > 1:
        out[0] = out[1]
    elif n_frames == 1:
        out[0] = vs[0]
    return out


def integrate(velocities, yaws, kf: KalmanConfig | None = None,
              frame_rate: float = 50.0, origin=(0.0, 0.0), t0: float = 0.0) -> Trajectory:
    """Fuse velocity estimates into per-frame positions.

    State is (x, y, vx, vy).  Each frame's held velocity estimate is
    applied as an observation of (vx, vy) covering the step into that
    frame: the filter updates velocity first, then propagates position,
    so in the small-noise limit the positions converge to the Riemann
    sum of the observations.  The velocity state is initialized from
    the first observation.  Yaw is copied from ``yaws`` (the heading
    stream), wrapped; the filter never touches it.
    """
    kf = kf or KalmanConfig()
    yaws = np.asarray(yaws, dtype=float)
    n = len(yaws)
    if n == 0:
        raise ValueError("empty yaw stream")
    v_obs = held_velocities(velocities, n)
    dt = 1.0 / frame_rate
    q = kf.sigma_process ** 2
    F = np.array([[1, 0, dt, 0], [0, 1, 0, dt], [0, 0, 1, 0], [0, 0, 0, 1]], dtype=float)
    Q = q * np.array(
        [
            [dt ** 4 / 4, 0, dt ** 3 / 2, 0],
            [0, dt ** 4 / 4, 0, dt ** 3 / 2],
            [dt ** 3 / 2, 0, dt ** 2, 0],
            [0, dt ** 3 / 2, 0, dt ** 2],
        ]
    )
    H = np.array([[0, 0, 1, 0], [0, 0, 0, 1]], dtype=float)
    R = kf.sigma_obs ** 2 * np.eye(2)
    x = np.array([origin[0], origin[1], v_obs[min(1, n - 1), 0], v_obs[min(1, n - 1), 1]])
    P = np.diag([0.0, 0.0, kf.sigma_obs ** 2, kf.sigma_obs ** 2])
    poses = np.empty((n, 2))
    poses[0] = x[:2]
    eye4 = np.eye(4)
    for f in range(1, n):
        # measurement update with the velocity over the step (f-1, f]
        innov = v_obs[f] - x[2:]
        S = P[2:, 2:] + R
        K = P[:, 2:] @ np.linalg.inv(S)
        x = x + K @ innov
        P = (eye4 - K @ H) @ P
        # time update to frame f
        x = F @ x
        P = F @ P @ F.T + Q
        poses[f] = x[:2]
    t = t0 + np.arange(n) * dt
    return Trajectory(t, poses, yaws, frame_rate)


# ---------------------------------------------------------------------------
# Capture scheduling


@dataclass(frozen=True)
class CaptureEvent:
    frame: int
    pose: Pose2
    trigger: str  # "first" | "distance" | "rotation"


def capture_schedule(traj: Trajectory, distance_m: float = 1.0,
                     rotation_rad: float = np.pi / 2, mode: str = "or") -> list[CaptureEvent]:
    """Spatial-interval capture events along a trajectory.

    Frame 0 always captures.  Afterwards a capture fires when the path
    distance accumulated since the last capture reaches ``distance_m``,
    or the accumulated absolute yaw change reaches ``rotation_rad``
    (``mode="and"`` requires both; ``"distance"``/``"rotation"`` watch
    a single trigger).  Both accumulators reset on every capture.
    """
    if distance_m <= 0 or rotation_rad <= 0:
        raise ValueError("capture thresholds must be positive")
    if mode not in ("or", "and", "distance", "rotation"):
        raise ValueError("mode must be one of 'or', 'and', 'distance', 'rotation'")
    if len(traj) == 0:
        return []
    events = [CaptureEvent(0, traj.pose(0), "first")]
    acc_d = 0.0
    acc_r = 0.0
    d_gate = distance_m * (1.0 - _TRIGGER_EPS)
    r_gate = rotation_rad * (1.0 - _TRIGGER_EPS)
    for f in range(1, len(traj)):
        acc_d += float(np.linalg.norm(traj.xy[f] - traj.xy[f - 1]))
        acc_r += abs(float(wrap_angle(traj.yaw[f] - traj.yaw[f - 1])))
        hit_d = acc_d >= d_gate
        hit_r = acc_r >= r_gate
        if mode == "and":
            fire = hit_d and hit_r
        elif mode == "distance":
            fire = hit_d
        elif mode == "rotation":
            fire = hit_r
        else:
            fire = hit_d or hit_r
        if fire:
            if mode == "rotation":
                trigger = "rotation"
            elif mode == "distance" or hit_d:
                trigger = "distance"
            else:
                trigger = "rotation"
            events.append(CaptureEvent(f, traj.pose(f), trigger))
            acc_d = 0.0
            acc_r = 0.0
    return events


def image_id_for_frame(frame: int) -> str:
    """Naming convention tying capture frames to image files and captions."""
    return f"img_{frame:06d}"


def save_captures(events, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for ev in events:
            rec = {
                "frame": ev.frame,
                "t": ev.pose.t,
                "x": ev.pose.x,
                "y": ev.pose.y,
                "yaw": ev.pose.yaw,
                "trigger": ev.trigger,
            }
            fh.write(json.dumps(rec, sort_keys=True) + "\n")


def load_captures(path) -> list[CaptureEvent]:
    path = Path(path)
    events = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                events.append(
                    CaptureEvent(
                        int(rec["frame"]),
                        Pose2(float(rec["t"]), float(rec["x"]), float(rec["y"]), float(rec["yaw"])),
                        str(rec["trigger"]),
                    )
                )
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from None
    return events
