"""Shared fixtures: simulated datasets are expensive, so build them once."""

from __future__ import annotations

import numpy as np
import pytest

import sweepnav as sn


@pytest.fixture(scope="session")
def default_sim_traj() -> sn.Trajectory:
    """Boustrophedon sweep of the default 4 m x 2 m room."""
    return sn.generate_trajectory(sn.SimConfig())


@pytest.fixture(scope="session")
def clean_imu(default_sim_traj) -> sn.ImuSequence:
    """Noise-free IMU stream synthesized from the default sweep."""
    return sn.synthesize_imu(default_sim_traj, sn.SimConfig())


def make_window(start_frame=0, tau=64, rotation=0.0) -> sn.ImuWindow:
    """Zero-content window; estimator doubles only read its bookkeeping."""
    z = np.zeros((tau + 1, 3))
    return sn.ImuWindow(start_frame, z, z, rotation)
