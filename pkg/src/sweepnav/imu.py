"""IMU data model, file formats, gravity-aligned frame transform, windowing.

The estimator consumes inertial data expressed in a heading-anchored
gravity-aligned frame: z points along gravity (up), and the horizontal
axes are fixed by the heading at frame 0.  ``to_hacf`` performs that
transform given a per-sample orientation stream; ``make_windows`` cuts
the result into fixed-length windows for the velocity estimator.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .geometry import (
    GRAVITY_VEC,
    quat_yaw,
    quats_to_matrices,
    rotate_xyz_about_z,
    wrap_angle,
)

IMU_FIELDS = ("t", "ax", "ay", "az", "gx", "gy", "gz")
IMU_CSV_HEADER = ",".join(IMU_FIELDS)


def _frozen(a, dtype=float) -> np.ndarray:
    """Copy to an owned array and mark it read-only."""
    out = np.array(a, dtype=dtype, copy=True)
    out.flags.writeable = False
    return out


@dataclass(frozen=True)
class ImuSample:
    t: float
    acc: np.ndarray  # (3,) specific force, device frame, m/s^2
    gyro: np.ndarray  # (3,) angular rate, device frame, rad/s


@dataclass(frozen=True)
class ImuSequence:
    """A time-ordered IMU recording.

    Arrays are copied at construction and marked read-only, so a
    sequence can be shared across threads safely.
    """

    t: np.ndarray  # (n,)
    acc: np.ndarray  # (n, 3)
    gyro: np.ndarray  # (n, 3)

    def __post_init__(self):
        t = _frozen(np.atleast_1d(self.t))
        acc = _frozen(np.atleast_2d(self.acc) if np.size(self.acc) else np.zeros((0, 3)))
        gyro = _frozen(np.atleast_2d(self.gyro) if np.size(self.gyro) else np.zeros((0, 3)))
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "acc", acc)
        object.__setattr__(self, "gyro", gyro)
        n = len(t)
        if acc.shape != (n, 3) or gyro.shape != (n, 3):
            raise ValueError(
                f"shape mismatch: t has {n} samples, acc {acc.shape}, gyro {gyro.shape}"
            )
        if n and not np.isfinite(t).all():
            raise ValueError("non-finite timestamp")
        if n and (t < 0).any():
            raise ValueError("negative timestamp")
        if not (np.isfinite(acc).all() and np.isfinite(gyro).all()):
            raise ValueError("non-finite IMU sample")
        if n >= 2:
            bad = np.nonzero(np.diff(t) <= 0)[0]
            if bad.size:
                raise ValueError(f"non-monotonic timestamp at index {bad[0] + 1}")

    def __len__(self) -> int:
        return len(self.t)

    def __getitem__(self, i: int) -> ImuSample:
        return ImuSample(float(self.t[i]), self.acc[i], self.gyro[i])

    def sample_rate(self) -> float:
        if len(self) < 2:
            raise ValueError("need at least two samples to infer a rate")
        return 1.0 / float(np.median(np.diff(self.t)))


def load_imu(path) -> ImuSequence:
    """Load an IMU recording from CSV or JSONL (by file suffix).

    CSV has a literal ``t,ax,ay,az,gx,gy,gz`` header; JSONL carries one
    object per line with the same keys.  Parse failures report the
    1-based line number.  An empty file yields an empty sequence.
    """
    path = Path(path)
    if path.suffix.lower() == ".jsonl":
        return _load_imu_jsonl(path)
    return _load_imu_csv(path)


def _load_imu_csv(path: Path) -> ImuSequence:
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines or all(not ln.strip() for ln in lines):
        return ImuSequence(np.zeros(0), np.zeros((0, 3)), np.zeros((0, 3)))
    header = lines[0].strip()
    if header != IMU_CSV_HEADER:
        raise ValueError(f"{path}:1: expected header '{IMU_CSV_HEADER}', got '{header}'")
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) != 7:
            raise ValueError(f"{path}:{lineno}: expected 7 fields, got {len(parts)}")
        try:
            rows.append([float(p) for p in parts])
        except ValueError as exc:
            raise ValueError(f"{path}:{lineno}: {exc}") from None
    return _rows_to_sequence(rows, path)


def _load_imu_jsonl(path: Path) -> ImuSequence:
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                rows.append([float(obj[k]) for k in IMU_FIELDS])
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from None
    return _rows_to_sequence(rows, path)


def _rows_to_sequence(rows, path) -> ImuSequence:
    if not rows:
        return ImuSequence(np.zeros(0), np.zeros((0, 3)), np.zeros((0, 3)))
    arr = np.asarray(rows, dtype=float)
    try:
        return ImuSequence(arr[:, 0], arr[:, 1:4], arr[:, 4:7])
    except ValueError as exc:
        raise ValueError(f"{path}: {exc}") from None


def save_imu(seq: ImuSequence, path) -> None:
    """Write a recording as CSV or JSONL depending on the file suffix."""
    path = Path(path)
    if path.suffix.lower() == ".jsonl":
        with open(path, "w", encoding="utf-8") as fh:
            for i in range(len(seq)):
                rec = {
                    "t": float(seq.t[i]),
                    "ax": float(seq.acc[i, 0]),
                    "ay": float(seq.acc[i, 1]),
                    "az": float(seq.acc[i, 2]),
                    "gx": float(seq.gyro[i, 0]),
                    "gy": float(seq.gyro[i, 1]),
                    "gz": float(seq.gyro[i, 2]),
                }
                fh.write(json.dumps(rec) + "\n")
        return
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(IMU_CSV_HEADER + "\n")
        for i in range(len(seq)):
            vals = [seq.t[i], *seq.acc[i], *seq.gyro[i]]
            fh.write(",".join(repr(float(v)) for v in vals) + "\n")


def resample(seq: ImuSequence, rate_hz: float = 50.0, max_gap_s: float = 0.5) -> ImuSequence:
    """Resample onto a uniform grid at ``rate_hz`` via linear interpolation.

    Input already uniform at the requested rate is returned unchanged
    (bit-for-bit).  A gap between consecutive samples larger than
    ``max_gap_s`` is an error: interpolating across it would fabricate
    motion.
    """
    if rate_hz <= 0:
        raise ValueError("rate_hz must be positive")
    n = len(seq)
    if n < 2:
        return seq
    dt = 1.0 / rate_hz
    diffs = np.diff(seq.t)
    worst = int(np.argmax(diffs))
    if diffs[worst] > max_gap_s:
        raise ValueError(
            f"gap of {diffs[worst]:.3f} s at t={seq.t[worst]:.3f} exceeds {max_gap_s} s"
        )
    if np.max(np.abs(diffs - dt)) < 1e-9:
        return seq
    m = int(np.floor((seq.t[-1] - seq.t[0]) * rate_hz)) + 1
    grid = seq.t[0] + np.arange(m) * dt
    acc = np.column_stack([np.interp(grid, seq.t, seq.acc[:, i]) for i in range(3)])
    gyro = np.column_stack([np.interp(grid, seq.t, seq.gyro[:, i]) for i in range(3)])
    return ImuSequence(grid, acc, gyro)


# ---------------------------------------------------------------------------
# Heading-anchored gravity-aligned frame


@dataclass(frozen=True)
class HacfSequence:
    """Gravity-removed inertial data in the heading-anchored frame."""

    t: np.ndarray  # (n,)
    a: np.ndarray  # (n, 3) linear acceleration, gravity removed
    g: np.ndarray  # (n, 3) angular rate

    def __post_init__(self):
        object.__setattr__(self, "t", _frozen(self.t))
        object.__setattr__(self, "a", _frozen(self.a))
        object.__setattr__(self, "g", _frozen(self.g))

    def __len__(self) -> int:
        return len(self.t)


def to_hacf(seq: ImuSequence, orientations) -> HacfSequence:
    """Rotate device-frame samples into the heading-anchored frame.

    Per sample: ``a = Rz(-yaw0) R(q) acc - (0, 0, 9.81)`` and
    ``g = Rz(-yaw0) R(q) gyro`` where ``yaw0`` is the yaw of the first
    orientation.  Anchoring makes the output frame's x axis coincide
    with the heading at frame 0, so the transform is idempotent with
    respect to the initial heading.
    """
    if len(orientations) != len(seq):
        raise ValueError(
            f"orientation stream has {len(orientations)} samples, IMU has {len(seq)}"
        )
    if len(seq) == 0:
        return HacfSequence(np.zeros(0), np.zeros((0, 3)), np.zeros((0, 3)))
    mats = quats_to_matrices(orientations.q)
    a_world = np.einsum("nij,nj->ni", mats, seq.acc)
    g_world = np.einsum("nij,nj->ni", mats, seq.gyro)
    yaw0 = quat_yaw(orientations.q[0])
    a = rotate_xyz_about_z(a_world, -yaw0) - GRAVITY_VEC
    g = rotate_xyz_about_z(g_world, -yaw0)
    return HacfSequence(seq.t, a, g)


@dataclass(frozen=True)
class ImuWindow:
    """A fixed-length slice of heading-anchored samples.

    ``rotation`` tracks the net planar rotation applied to the window's
    contents after it was cut (see ``rae.rotate_window``); it exists so
    that test doubles can honor frame equivariance exactly.
    """

    start_frame: int
    a_seq: np.ndarray  # (tau + 1, 3)
    g_seq: np.ndarray  # (tau + 1, 3)
    rotation: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "a_seq", _frozen(self.a_seq))
        object.__setattr__(self, "g_seq", _frozen(self.g_seq))
        if self.a_seq.shape != self.g_seq.shape or self.a_seq.ndim != 2:
            raise ValueError("a_seq and g_seq must share shape (tau + 1, 3)")
        if len(self.a_seq) < 2:
            raise ValueError("a window needs at least two samples")

    @property
    def tau(self) -> int:
        return len(self.a_seq) - 1


def make_windows(hacf: HacfSequence, tau: int = 64, stride: int | None = None) -> list[ImuWindow]:
    """Cut windows of ``tau + 1`` samples starting at frames 0, stride, ...

    A window starting at frame ``s`` covers frames ``s .. s + tau``
    inclusive.  Windows that would run past the end of the recording are
    not emitted, so a recording shorter than ``tau + 1`` samples yields
    an empty list.
    """
    if tau < 1:
        raise ValueError("tau must be >= 1")
    if stride is None:
        stride = tau
    if stride < 1:
        raise ValueError("stride must be >= 1")
    n = len(hacf)
    out = []
    for s in range(0, n - tau, stride):
        out.append(ImuWindow(s, hacf.a[s : s + tau + 1], hacf.g[s : s + tau + 1]))
    return out
