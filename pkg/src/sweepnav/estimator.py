"""Windowed velocity estimation: dense network inference and an oracle double.

The network maps a flattened window of heading-anchored samples to a
planar velocity.  The oracle replaces the network in tests and
simulation studies: it reads the true mean velocity straight from a
ground-truth trajectory, re-expressed in the frame of the window's
inputs, then adds a configurable input-frame bias and seeded noise.
Because the oracle honors frame rotations exactly, ensemble properties
can be checked against closed-form expectations.
"""

from __future__ import annotations

import base64
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .geometry import rotate_xy
from .imu import ImuWindow

INPUT_LAYOUT = "acc_then_gyro_rowmajor"


class NonFiniteEstimateError(RuntimeError):
    """A model produced NaN or infinite output (corrupt weights, bad input)."""


@dataclass(frozen=True)
class VelocityEstimate:
    """A planar velocity attributed to the window starting at ``window_start``."""

    v: np.ndarray  # (2,) m/s
    window_start: int
    clamped: bool = False

    def __post_init__(self):
        v = np.array(self.v, dtype=float, copy=True)
        if v.shape != (2,):
            raise ValueError(f"velocity must be a 2-vector, got shape {v.shape}")
        v.flags.writeable = False
        object.__setattr__(self, "v", v)


@dataclass(frozen=True)
class WeightsMeta:
    tau: int
    sample_rate_hz: float
    gravity_subtracted: bool
    input_layout: str = INPUT_LAYOUT


@dataclass(frozen=True)
class Layer:
    kind: str  # "dense" | "relu"
    rows: int = 0
    cols: int = 0
    weights: np.ndarray | None = None  # (rows, cols)
    bias: np.ndarray | None = None  # (cols,)


@dataclass(frozen=True)
class WeightsBundle:
    meta: WeightsMeta
    layers: tuple[Layer, ...]

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))
        dim = 6 * (self.meta.tau + 1)
        for i, layer in enumerate(self.layers):
            if layer.kind == "relu":
                continue
            if layer.kind != "dense":
                raise ValueError(f"layer {i}: unknown kind '{layer.kind}'")
            if layer.rows != dim:
                raise ValueError(
                    f"layer {i}: expects {layer.rows} inputs but receives {dim}"
                )
            dim = layer.cols
        if dim != 2:
            raise ValueError(f"final layer must produce 2 outputs, got {dim}")
        if self.meta.input_layout != INPUT_LAYOUT:
            raise ValueError(f"unsupported input layout '{self.meta.input_layout}'")


def load_weights(path, expected_tau: int | None = None,
                 expected_rate: float | None = None) -> WeightsBundle:
    """Load a weights bundle from JSON.

    Dense layer data is base64 of little-endian float32, row-major
    weights followed by the bias vector (``rows*cols + cols`` values).
    When ``expected_tau`` or ``expected_rate`` are given, a metadata
    mismatch with the calling pipeline is an error rather than a silent
    reinterpretation of the input.
    """
    path = Path(path)
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValueError(f"{path}: {exc}") from None
    try:
        meta_doc = doc["meta"]
        meta = WeightsMeta(
            tau=int(meta_doc["tau"]),
            sample_rate_hz=float(meta_doc["sample_rate_hz"]),
            gravity_subtracted=bool(meta_doc["gravity_subtracted"]),
            input_layout=str(meta_doc.get("input_layout", INPUT_LAYOUT)),
        )
        layer_docs = doc["layers"]
    except (KeyError, TypeError, ValueError) as exc:
        raise ValueError(f"{path}: malformed weights bundle: {exc}") from None
    if expected_tau is not None and meta.tau != expected_tau:
        raise ValueError(
            f"{path}: weights were trained for tau={meta.tau}, pipeline uses tau={expected_tau}"
        )
    if expected_rate is not None and abs(meta.sample_rate_hz - expected_rate) > 1e-9:
        raise ValueError(
            f"{path}: weights expect {meta.sample_rate_hz} Hz input, pipeline runs at {expected_rate} Hz"
        )
    layers = []
    for i, ld in enumerate(layer_docs):
        kind = ld.get("kind")
        if kind == "relu":
            layers.append(Layer("relu"))
            continue
        if kind != "dense":
            raise ValueError(f"{path}: layer {i}: unknown kind '{kind}'")
        rows, cols = int(ld["rows"]), int(ld["cols"])
        raw = base64.b64decode(ld.get("data", ""))
        flat = np.frombuffer(raw, dtype="<f4").astype(float)
        expected = rows * cols + cols
        if flat.size != expected:
            raise ValueError(
                f"{path}: layer {i}: expected {expected} parameters, got {flat.size}"
            )
        weights = flat[: rows * cols].reshape(rows, cols)
        bias = flat[rows * cols :]
        layers.append(Layer("dense", rows, cols, weights, bias))
    return WeightsBundle(meta, tuple(layers))


def save_weights(bundle: WeightsBundle, path) -> None:
    doc = {
        "meta": {
            "tau": bundle.meta.tau,
            "sample_rate_hz": bundle.meta.sample_rate_hz,
            "gravity_subtracted": bundle.meta.gravity_subtracted,
            "input_layout": bundle.meta.input_layout,
        },
        "layers": [],
    }
    for layer in bundle.layers:
        if layer.kind == "relu":
            doc["layers"].append({"kind": "relu", "rows": 0, "cols": 0, "data": ""})
            continue
        flat = np.concatenate([layer.weights.ravel(), layer.bias]).astype("<f4")
        doc["layers"].append(
            {
                "kind": "dense",
                "rows": layer.rows,
                "cols": layer.cols,
                "data": base64.b64encode(flat.tobytes()).decode("ascii"),
            }
        )
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, sort_keys=True)
        fh.write("\n")


def make_random_bundle(tau: int = 64, sample_rate_hz: float = 50.0,
                       hidden: tuple[int, ...] = (64, 64), seed: int = 0,
                       scale: float = 0.05) -> WeightsBundle:
    """A seeded random bundle for exercising the network code path."""
    rng = np.random.default_rng(seed)
    dims = [6 * (tau + 1), *hidden, 2]
    layers = []
    for i in range(len(dims) - 1):
        rows, cols = dims[i], dims[i + 1]
        w = rng.normal(0.0, scale / np.sqrt(rows), (rows, cols))
        b = np.zeros(cols)
        layers.append(Layer("dense", rows, cols, w, b))
        if i < len(dims) - 2:
            layers.append(Layer("relu"))
    meta = WeightsMeta(tau, sample_rate_hz, gravity_subtracted=True)
    return WeightsBundle(meta, tuple(layers))


class DenseVelocityNetwork:
    """Forward pass of a dense network over a flattened window.

    Parameters are stored as float32 in the bundle but promoted to
    float64 for the forward pass, which keeps repeated runs bit-stable.
    """

    def __init__(self, bundle: WeightsBundle):
        self.bundle = bundle
        self.tau = bundle.meta.tau

    def raw_velocity(self, window: ImuWindow) -> np.ndarray:
        if window.tau != self.tau:
            raise ValueError(
                f"window has tau={window.tau}, network expects tau={self.tau}"
            )
        x = np.concatenate([window.a_seq.ravel(), window.g_seq.ravel()])
        for layer in self.bundle.layers:
            if layer.kind == "dense":
                x = x @ layer.weights + layer.bias
            else:
                x = np.maximum(x, 0.0)
        if not np.all(np.isfinite(x)):
            raise NonFiniteEstimateError("network produced non-finite output")
        return x


@dataclass(frozen=True)
class OracleConfig:
    """Configuration of the ground-truth-backed estimator double.

    ``bias_hacf`` is added in the estimator's input frame, after any
    rotation of the window contents; that is exactly the error mode a
    rotation ensemble averages out.  Noise is drawn once per window
    from a generator seeded by ``(rng_seed, window_start)``, so
    evaluation order (or parallelism) cannot change results.
    """

    trajectory: "Trajectory"
    bias_hacf: np.ndarray = field(default_factory=lambda: np.zeros(2))
    noise_sigma: float = 0.0

    def __post_init__(self):
        b = np.array(self.bias_hacf, dtype=float, copy=True)
        if b.shape != (2,):
            raise ValueError("bias_hacf must be a 2-vector")
        b.flags.writeable = False
        object.__setattr__(self, "bias_hacf", b)
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be non-negative")


def oracle_velocity(window: ImuWindow, cfg: OracleConfig, rng_seed: int = 0) -> np.ndarray:
    """True mean velocity over the window, expressed in the window's frame.

    The output is ``Rz(window.rotation) @ v_true + bias + noise``: if the
    window inputs were rotated by theta, the output rotates by theta,
    exactly.  ``v_true`` is the ground-truth displacement across the
    window divided by its duration.
    """
    traj = cfg.trajectory
    s = window.start_frame
    e = s + window.tau
    if s < 0 or e >= len(traj):
        raise ValueError(
            f"window frames [{s}, {e}] fall outside the ground-truth span of {len(traj)} frames"
        )
    duration = window.tau / traj.frame_rate
    v_true = (traj.xy[e] - traj.xy[s]) / duration
    v = rotate_xy(v_true, window.rotation) + cfg.bias_hacf
    if cfg.noise_sigma > 0.0:
        if rng_seed < 0:
            raise ValueError("rng_seed must be non-negative")
        rng = np.random.default_rng((rng_seed, s))
        v = v + rng.normal(0.0, cfg.noise_sigma, 2)
    return v


class OracleVelocityEstimator:
    """Model-protocol wrapper around ``oracle_velocity``."""

    tau = None  # accepts any window length

    def __init__(self, cfg: OracleConfig, rng_seed: int = 0):
        self.cfg = cfg
        self.rng_seed = rng_seed

    def raw_velocity(self, window: ImuWindow) -> np.ndarray:
        return oracle_velocity(window, self.cfg, self.rng_seed)


def estimate_velocity(window: ImuWindow, model, v_max: float = 2.0) -> VelocityEstimate:
    """Run ``model`` on a window, then validate and clamp the output.

    Estimates with speed above ``v_max`` are scaled back to ``v_max``
    and flagged; non-finite output raises ``NonFiniteEstimateError``.
    """
    if getattr(model, "tau", None) is not None and model.tau != window.tau:
        raise ValueError(f"window has tau={window.tau}, model expects tau={model.tau}")
    v = np.asarray(model.raw_velocity(window), dtype=float)
    if v.shape != (2,):
        raise ValueError(f"model output must be a 2-vector, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise NonFiniteEstimateError("velocity estimate is non-finite")
    v, clamped = clamp_speed(v, v_max)
    return VelocityEstimate(v, window.start_frame, clamped)


def clamp_speed(v: np.ndarray, v_max: float) -> tuple[np.ndarray, bool]:
    if v_max <= 0:
        raise ValueError("v_max must be positive")
    speed = float(np.linalg.norm(v))
    if speed > v_max:
        return v * (v_max / speed), True
    return v, False
