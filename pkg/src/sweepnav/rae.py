"""Rotation-augmented ensembling of windowed velocity estimates.

A velocity estimator trained on handheld data sees a coverage robot's
motion as out-of-domain, and its errors are not rotation-equivariant.
Ensembling helps: rotate the window inputs by K angles about gravity,
run the estimator on each copy, rotate each estimate back, and reduce.
Any error component that is fixed in the estimator's input frame is
spread over K directions by the rotate-back step, so the mean cancels
it exactly on a uniform angle grid and the median suppresses it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .estimator import (
    NonFiniteEstimateError,
    VelocityEstimate,
    clamp_speed,
    estimate_velocity,
)
from .geometry import rotate_xy, rotate_xyz_about_z
from .imu import ImuWindow

_ANGLE_MODES = ("grid", "seeded_random")
_REDUCERS = ("median", "mean", "trimmed_mean")


@dataclass(frozen=True)
class RaeConfig:
    """Ensemble shape: member count, angle selection, reducer."""

    k: int = 5
    angle_mode: str = "grid"
    reducer: str = "median"
    trim_fraction: float = 0.1

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.angle_mode not in _ANGLE_MODES:
            raise ValueError(f"angle_mode must be one of {_ANGLE_MODES}")
        if self.reducer not in _REDUCERS:
            raise ValueError(f"reducer must be one of {_REDUCERS}")
        if not 0.0 <= self.trim_fraction < 0.5:
            raise ValueError("trim_fraction must lie in [0, 0.5)")


def ensemble_angles(cfg: RaeConfig, rng_seed: int = 0) -> np.ndarray:
    """Rotation angles for the K ensemble members.

    ``grid``: theta_k = -pi + 2 pi k / K for k = 0..K-1.
    ``seeded_random``: K draws from U(-pi, pi), fixed per recording by
    ``rng_seed`` (the window does not enter the seed).
    """
    if cfg.angle_mode == "grid":
        return -np.pi + 2.0 * np.pi * np.arange(cfg.k) / cfg.k
    rng = np.random.default_rng(rng_seed)
    return rng.uniform(-np.pi, np.pi, cfg.k)


def rotate_window(window: ImuWindow, theta: float) -> ImuWindow:
    """Rotate every acceleration and angular-rate vector about z by ``theta``.

    z components are untouched.  The window's ``rotation`` bookkeeping
    field accumulates ``theta`` so estimators that honor input-frame
    equivariance by construction can do so exactly.
    """
    return ImuWindow(
        window.start_frame,
        rotate_xyz_about_z(window.a_seq, theta),
        rotate_xyz_about_z(window.g_seq, theta),
        rotation=window.rotation + theta,
    )


def reduce_members(members: np.ndarray, reducer: str, trim_fraction: float = 0.1) -> np.ndarray:
    """Reduce a (K, 2) stack of member estimates to one velocity.

    ``median`` and ``mean`` are component-wise (an even count medians by
    averaging the two middle values).  ``trimmed_mean`` sorts each
    component and drops ``floor(K * trim_fraction)`` entries from both
    ends before averaging.  All reducers are permutation-invariant.
    """
    members = np.asarray(members, dtype=float)
    if members.ndim != 2 or members.shape[1] != 2:
        raise ValueError("members must have shape (K, 2)")
    if reducer == "median":
        return np.median(members, axis=0)
    if reducer == "mean":
        return members.mean(axis=0)
    if reducer == "trimmed_mean":
        k = len(members)
        cut = int(np.floor(k * trim_fraction))
        srt = np.sort(members, axis=0)
        return srt[cut : k - cut].mean(axis=0)
    raise ValueError(f"reducer must be one of {_REDUCERS}")


def rae_estimate(window: ImuWindow, model, cfg: RaeConfig,
                 rng_seed: int = 0, v_max: float = 2.0) -> VelocityEstimate:
    """Ensemble velocity estimate for one window.

    Member k runs the model on the window rotated by theta_k and
    rotates the estimate back by -theta_k.  Members with non-finite
    output are dropped; if every member is dropped the estimate fails.
    The reduced velocity is clamped to ``v_max`` like any single
    estimate.
    """
    angles = ensemble_angles(cfg, rng_seed)
    members = []
    clamped_any = False
    for theta in angles:
        rotated = rotate_window(window, theta)
        try:
            est = estimate_velocity(rotated, model, v_max)
        except NonFiniteEstimateError:
            continue
        members.append(rotate_xy(est.v, -theta))
        clamped_any = clamped_any or est.clamped
    if not members:
        raise NonFiniteEstimateError(
            f"all {cfg.k} ensemble members were non-finite for window {window.start_frame}"
        )
    v = reduce_members(np.asarray(members), cfg.reducer, cfg.trim_fraction)
    v, clamped = clamp_speed(v, v_max)
    return VelocityEstimate(v, window.start_frame, clamped or clamped_any)


def equivariance_error(window: ImuWindow, model, thetas, v_max: float = 2.0) -> float:
    """Largest pairwise disagreement between rotated-back estimates.

    Zero (to fp precision) for a perfectly rotation-equivariant model;
    grows with the model's frame sensitivity.  Needs at least two
    angles.
    """
    thetas = np.asarray(thetas, dtype=float)
    if thetas.size < 2:
        raise ValueError("need at least two angles to measure disagreement")
    ests = []
    for theta in thetas:
        est = estimate_velocity(rotate_window(window, theta), model, v_max)
        ests.append(rotate_xy(est.v, -theta))
    ests = np.asarray(ests)
    diff = ests[:, None, :] - ests[None, :, :]
    return float(np.sqrt((diff ** 2).sum(-1)).max())
