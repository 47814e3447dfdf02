"""Geo-localized object mapping from captures, depth, and captions.

Each capture pairs a robot pose with a depth raster and a caption (a
list of item names seen in the image).  Every named item in an image is
assigned to the central-region ray at the median valid depth, unprojected
through the pinhole model to a world-frame 3D point, and the points are
clustered per name; cluster centroids are the estimated item positions.

Conventions: camera frame has X right, Y down, Z forward (depth);
raster depths are forward Z-depth in meters, 0 marks invalid pixels.
The camera is mounted horizontal and forward-facing at a configured
height and forward offset from the robot origin.  Robot frame is x
forward, y left, z up.
"""

from __future__ import annotations

import json
import logging
import os
import struct
import time
import unicodedata
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .imu import _frozen
from .metrics import AlignmentResult, apply_alignment
from .trajectory import CaptureEvent, Pose2

logger = logging.getLogger(__name__)

RASTER_MAGIC = b"DRAS"
RASTER_VERSION = 1
ITEMS_CSV_HEADER = "name,x,y,z"
DEFAULT_PROMPT = (
    "Describe the names of all the products in the image while "
    "emphasizing texts if they exist."
)
CAPTION_TOKEN_ENV = "SWEEPNAV_CAPTION_TOKEN"


@dataclass(frozen=True)
class DepthRaster:
    """Dense metric depth image with pinhole intrinsics."""

    width: int
    height: int
    depth: np.ndarray  # (height, width) meters, 0 = invalid
    focal_length: float  # pixels
    cx: float
    cy: float

    def __post_init__(self):
        depth = _frozen(self.depth)
        if depth.shape != (self.height, self.width):
            raise ValueError(
                f"depth shape {depth.shape} does not match {self.height}x{self.width}"
            )
        if self.focal_length <= 0:
            raise ValueError("focal_length must be positive")
        valid = depth[depth != 0.0]
        if len(valid) and (not np.isfinite(valid).all() or (valid < 0).any()):
            raise ValueError("valid depths must be positive and finite")
        object.__setattr__(self, "depth", depth)


@dataclass(frozen=True)
class CaptionRecord:
    image_id: str
    frame: int
    items: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "items", tuple(str(s) for s in self.items))


@dataclass(frozen=True)
class ItemObservation:
    name: str  # normalized
    point: np.ndarray  # (3,) world-frame meters
    image_id: str

    def __post_init__(self):
        point = _frozen(self.point)
        if point.shape != (3,) or not np.isfinite(point).all():
            raise ValueError("observation point must be a finite 3-vector")
        object.__setattr__(self, "point", point)


@dataclass(frozen=True)
class ItemCluster:
    name: str
    centroid: np.ndarray  # (3,)
    n_observations: int
    spread: float  # RMS distance of members to centroid

    def __post_init__(self):
        object.__setattr__(self, "centroid", _frozen(self.centroid))


@dataclass(frozen=True)
class MapConfig:
    """Mount calibration, depth gating, and clustering settings."""

    mount_height: float = 0.3  # camera height above floor, m
    mount_forward: float = 0.0  # camera offset ahead of robot origin, m
    center_fraction: float = 0.2  # side fraction of the central sampling box
    depth_min: float = 0.3  # valid-depth band, m
    depth_max: float = 5.0
    z_min: float = 0.0  # indoor sanity band on observation height, m
    z_max: float = 3.0
    cluster_eps: float = 1.5  # single-linkage merge distance, m
    min_observations: int = 1

    def __post_init__(self):
        if not 0.0 < self.center_fraction <= 1.0:
            raise ValueError("center_fraction must be in (0, 1]")
        if not 0.0 <= self.depth_min < self.depth_max:
            raise ValueError("require 0 <= depth_min < depth_max")
        if self.cluster_eps <= 0:
            raise ValueError("cluster_eps must be positive")
        if self.min_observations < 1:
            raise ValueError("min_observations must be >= 1")


# ---------------------------------------------------------------------------
# Geometry


def camera_to_robot(points_cam: np.ndarray, cfg: MapConfig) -> np.ndarray:
    """Camera (X right, Y down, Z fwd) to robot (x fwd, y left, z up)."""
    p = np.asarray(points_cam, dtype=float).reshape(-1, 3)
    out = np.column_stack([p[:, 2], -p[:, 0], -p[:, 1]])
    out += np.array([cfg.mount_forward, 0.0, cfg.mount_height])
    return out


def robot_to_world(points_robot: np.ndarray, pose: Pose2) -> np.ndarray:
    p = np.asarray(points_robot, dtype=float).reshape(-1, 3)
    c, s = np.cos(pose.yaw), np.sin(pose.yaw)
    out = np.empty_like(p)
    out[:, 0] = c * p[:, 0] - s * p[:, 1] + pose.x
    out[:, 1] = s * p[:, 0] + c * p[:, 1] + pose.y
    out[:, 2] = p[:, 2]
    return out


def world_to_camera(points_world: np.ndarray, pose: Pose2, cfg: MapConfig) -> np.ndarray:
    """Inverse of the unprojection frame chain (used by projection)."""
    p = np.asarray(points_world, dtype=float).reshape(-1, 3)
    c, s = np.cos(pose.yaw), np.sin(pose.yaw)
    dx = p[:, 0] - pose.x
    dy = p[:, 1] - pose.y
    rx = c * dx + s * dy - cfg.mount_forward
    ry = -s * dx + c * dy
    rz = p[:, 2] - cfg.mount_height
    return np.column_stack([-ry, -rz, rx])


def unproject(raster: DepthRaster, region: tuple[int, int, int, int],
              pose: Pose2, cfg: MapConfig | None = None) -> np.ndarray:
    """Lift a pixel region to world-frame 3D points.

    ``region`` is half-open ``(u0, v0, u1, v1)``.  Zero-depth pixels are
    skipped; the result is (n, 3) and may be empty.
    """
    cfg = cfg or MapConfig()
    u0, v0, u1, v1 = region
    if not (0 <= u0 < u1 <= raster.width and 0 <= v0 < v1 <= raster.height):
        raise ValueError(f"region {region} outside raster {raster.width}x{raster.height}")
    d = raster.depth[v0:v1, u0:u1]
    vv, uu = np.nonzero(d != 0.0)
    if len(vv) == 0:
        return np.zeros((0, 3))
    depth = d[vv, uu]
    u = uu + u0
    v = vv + v0
    x = (u - raster.cx) * depth / raster.focal_length
    y = (v - raster.cy) * depth / raster.focal_length
    cam = np.column_stack([x, y, depth])
    return robot_to_world(camera_to_robot(cam, cfg), pose)


def project(raster: DepthRaster, points_world: np.ndarray, pose: Pose2,
            cfg: MapConfig | None = None) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Project world points back through the pinhole: (u, v, depth)."""
    cfg = cfg or MapConfig()
    cam = world_to_camera(points_world, pose, cfg)
    z = cam[:, 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        u = raster.cx + raster.focal_length * cam[:, 0] / z
        v = raster.cy + raster.focal_length * cam[:, 1] / z
    return u, v, z


def center_region(raster: DepthRaster, fraction: float) -> tuple[int, int, int, int]:
    """Axis-aligned central box covering ``fraction`` of each side (>= 1 px)."""
    bw = max(1, int(round(raster.width * fraction)))
    bh = max(1, int(round(raster.height * fraction)))
    u0 = (raster.width - bw) // 2
    v0 = (raster.height - bh) // 2
    return u0, v0, u0 + bw, v0 + bh


# ---------------------------------------------------------------------------
# Observation and clustering


def normalize_name(name: str) -> str:
    """Canonical item key: NFC, lowercase, punctuation out, spaces collapsed."""
    s = unicodedata.normalize("NFC", name).lower()
    s = "".join(" " if unicodedata.category(ch).startswith("P") else ch for ch in s)
    return " ".join(s.split())


def observe_items(caption: CaptionRecord, raster: DepthRaster, pose: Pose2,
                  cfg: MapConfig | None = None) -> list[ItemObservation]:
    """One world-frame observation per named item in a captioned image.

    All items in an image share the central-box median-depth ray along
    the camera axis.  Items are skipped (with a log line) when the name
    normalizes to empty, the central box holds no in-band depth, or the
    resulting point leaves the configured height band.
    """
    cfg = cfg or MapConfig()
    region = center_region(raster, cfg.center_fraction)
    u0, v0, u1, v1 = region
    d = raster.depth[v0:v1, u0:u1]
    valid = d[(d != 0.0) & (d >= cfg.depth_min) & (d <= cfg.depth_max)]
    names = []
    for raw in caption.items:
        name = normalize_name(raw)
        if not name:
            logger.warning("%s: item %r empty after normalization, skipped",
                           caption.image_id, raw)
            continue
        names.append(name)
    if not names:
        return []
    if len(valid) == 0:
        for name in names:
            logger.warning("%s: no valid depth in center region, skipped %r",
                           caption.image_id, name)
        return []
    depth = float(np.median(valid))
    cam = np.array([[0.0, 0.0, depth]])  # principal ray
    point = robot_to_world(camera_to_robot(cam, cfg), pose)[0]
    if not cfg.z_min <= point[2] <= cfg.z_max:
        for name in names:
            logger.warning("%s: point height %.3f outside [%s, %s], skipped %r",
                           caption.image_id, point[2], cfg.z_min, cfg.z_max, name)
        return []
    return [ItemObservation(name, point, caption.image_id) for name in names]


def cluster_items(observations: list[ItemObservation],
                  cfg: MapConfig | None = None) -> list[ItemCluster]:
    """Group observations by name, then single-linkage merge within eps.

    Observations are sorted by (name, x, y, z) first, so the result does
    not depend on input order.  Clusters are returned in that same order
    of their first member.
    """
    cfg = cfg or MapConfig()
    obs = sorted(observations, key=lambda o: (o.name, o.point[0], o.point[1], o.point[2]))
    clusters: list[ItemCluster] = []
    i = 0
    while i < len(obs):
        j = i
        while j < len(obs) and obs[j].name == obs[i].name:
            j += 1
        group = obs[i:j]
        pts = np.array([o.point for o in group])
        parent = list(range(len(group)))

        def find(a):
            while parent[a] != a:
                parent[a] = parent[parent[a]]
                a = parent[a]
            return a

        for a in range(len(group)):
            for b in range(a + 1, len(group)):
                if np.linalg.norm(pts[a] - pts[b]) <= cfg.cluster_eps:
                    ra, rb = find(a), find(b)
                    if ra != rb:
                        parent[max(ra, rb)] = min(ra, rb)
        members: dict[int, list[int]] = {}
        for a in range(len(group)):
            members.setdefault(find(a), []).append(a)
        for root in sorted(members):
            idx = members[root]
            if len(idx) < cfg.min_observations:
                continue
            sub = pts[idx]
            centroid = sub.mean(axis=0)
            spread = float(np.sqrt(np.mean(np.sum((sub - centroid) ** 2, axis=1))))
            clusters.append(ItemCluster(obs[i].name, centroid, len(idx), spread))
        i = j
    return clusters


@dataclass(frozen=True)
class MapEvalReport:
    per_item: dict[str, float]
    mean_error: float
    std_error: float
    n_matched: int
    unmatched_gt: tuple[str, ...]
    unmatched_est: tuple[str, ...]


def evaluate_map(clusters: list[ItemCluster], ground_truth: dict[str, np.ndarray],
                 alignment: AlignmentResult | None = None) -> MapEvalReport:
    """Positional error of estimated item positions after pose alignment.

    ``ground_truth`` maps normalized names to 3-vectors; errors are x-y
    Euclidean distances of aligned centroids.  When several clusters
    share a name, the one with the most observations represents it
    (ties by proximity).  Unmatched names on either side are listed,
    not averaged.
    """
    by_name: dict[str, list[ItemCluster]] = {}
    for c in clusters:
        by_name.setdefault(c.name, []).append(c)
    per_item: dict[str, float] = {}
    for name in sorted(ground_truth):
        if name not in by_name:
            continue
        gt_xy = np.asarray(ground_truth[name], dtype=float)[:2]
        dists = []
        for c in by_name[name]:
            xy = c.centroid[:2]
            if alignment is not None:
                xy = apply_alignment(xy.reshape(1, 2), alignment)[0]
            dists.append((-c.n_observations, float(np.linalg.norm(xy - gt_xy))))
        dists.sort()
        per_item[name] = dists[0][1]
    if not per_item:
        raise ValueError("no item names shared between estimate and ground truth")
    errors = np.array(list(per_item.values()))
    return MapEvalReport(
        per_item=per_item,
        mean_error=float(errors.mean()),
        std_error=float(errors.std()),
        n_matched=len(per_item),
        unmatched_gt=tuple(sorted(set(ground_truth) - set(per_item))),
        unmatched_est=tuple(sorted(set(by_name) - set(ground_truth))),
    )


# ---------------------------------------------------------------------------
# Caption acquisition


@dataclass(frozen=True)
class CaptionServiceConfig:
    endpoint: str = ""
    prompt: str = DEFAULT_PROMPT
    token_env: str = CAPTION_TOKEN_ENV
    max_workers: int = 4
    retries: int = 3
    backoff_s: float = 0.5
    timeout_s: float = 10.0

    def __post_init__(self):
        if self.max_workers < 1 or self.retries < 1:
            raise ValueError("max_workers and retries must be >= 1")


class MockCaptioner:
    """File-backed captioner: pre-authored JSONL keyed by image_id."""

    def __init__(self, path):
        self._records = {rec.image_id: rec for rec in load_captions(path)}

    def caption(self, image_id: str, frame: int) -> list[str] | None:
        rec = self._records.get(image_id)
        if rec is None:
            logger.warning("%s: no mock caption on file, skipped", image_id)
            return None
        return list(rec.items)


class HttpCaptioner:
    """JSON-over-HTTP captioner with bearer auth and retry."""

    def __init__(self, cfg: CaptionServiceConfig):
        if not cfg.endpoint:
            raise ValueError("captioning endpoint is not configured")
        self.cfg = cfg
        self._token = os.environ.get(cfg.token_env, "")

    def caption(self, image_id: str, frame: int) -> list[str] | None:
        import requests

        headers = {"Content-Type": "application/json"}
        if self._token:
            headers["Authorization"] = f"Bearer {self._token}"
        payload = {"image_ref": image_id, "prompt": self.cfg.prompt}
        last_error = "unknown error"
        for attempt in range(self.cfg.retries):
            if attempt:
                time.sleep(self.cfg.backoff_s * 2 ** (attempt - 1))
            try:
                resp = requests.post(self.cfg.endpoint, json=payload,
                                     headers=headers, timeout=self.cfg.timeout_s)
            except requests.RequestException as exc:
                last_error = f"connection error: {exc}"
                continue
            if resp.status_code >= 500:
                last_error = f"server error {resp.status_code}"
                continue
            if resp.status_code != 200:
                logger.warning("%s: captioning failed with status %d, skipped",
                               image_id, resp.status_code)
                return None
            try:
                items = resp.json()["items"]
                if not isinstance(items, list):
                    raise TypeError("items is not a list")
            except (ValueError, KeyError, TypeError) as exc:
                logger.warning("%s: malformed caption response (%s), skipped",
                               image_id, exc)
                return None
            if attempt:
                logger.info("%s: captioned after %d retries", image_id, attempt)
            return [str(s) for s in items]
        logger.warning("%s: captioning failed after %d attempts (%s), skipped",
                       image_id, self.cfg.retries, last_error)
        return None


def fetch_captions(captures: list[CaptureEvent], captioner,
                   image_ids: list[str] | None = None,
                   max_workers: int = 4) -> list[CaptionRecord]:
    """Caption every capture, concurrently, in image_id order.

    Per-image failures are logged by the captioner and dropped here;
    the call itself never raises for them.
    """
    if image_ids is None:
        from .trajectory import image_id_for_frame

        image_ids = [image_id_for_frame(ev.frame) for ev in captures]
    order = sorted(range(len(captures)), key=lambda i: image_ids[i])
    jobs = [(image_ids[i], captures[i].frame) for i in order]
    if max_workers > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            results = list(pool.map(lambda j: captioner.caption(*j), jobs))
    else:
        results = [captioner.caption(*j) for j in jobs]
    records = []
    for (image_id, frame), items in zip(jobs, results):
        if items is not None:
            records.append(CaptionRecord(image_id, frame, tuple(items)))
    return records


# ---------------------------------------------------------------------------
# File formats


def save_raster(raster: DepthRaster, path) -> None:
    header = struct.pack("<BIIfff", RASTER_VERSION, raster.width, raster.height,
                         raster.focal_length, raster.cx, raster.cy)
    with open(path, "wb") as fh:
        fh.write(RASTER_MAGIC)
        fh.write(header)
        fh.write(np.ascontiguousarray(raster.depth, dtype="<f4").tobytes())


def load_raster(path) -> DepthRaster:
    path = Path(path)
    raw = path.read_bytes()
    if raw[:4] != RASTER_MAGIC:
        raise ValueError(f"{path}: not a depth raster (bad magic)")
    header_size = 4 + struct.calcsize("<BIIfff")
    if len(raw) < header_size:
        raise ValueError(f"{path}: truncated header")
    version, width, height, focal, cx, cy = struct.unpack("<BIIfff", raw[4:header_size])
    if version != RASTER_VERSION:
        raise ValueError(f"{path}: unsupported raster version {version}")
    expected = header_size + width * height * 4
    if len(raw) != expected:
        raise ValueError(f"{path}: expected {expected} bytes, got {len(raw)}")
    depth = np.frombuffer(raw[header_size:], dtype="<f4").astype(float)
    return DepthRaster(width, height, depth.reshape(height, width), focal, cx, cy)


def save_captions(records: list[CaptionRecord], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(
                {"image_id": rec.image_id, "frame": rec.frame, "items": list(rec.items)},
                sort_keys=True) + "\n")


def load_captions(path) -> list[CaptionRecord]:
    path = Path(path)
    records = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                records.append(CaptionRecord(str(rec["image_id"]), int(rec["frame"]),
                                             tuple(rec["items"])))
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from None
    return records


def save_items_csv(items: dict[str, np.ndarray], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(ITEMS_CSV_HEADER + "\n")
        for name in sorted(items):
            p = np.asarray(items[name], dtype=float)
            fh.write(name + "," + ",".join(repr(float(v)) for v in p[:3]) + "\n")


def load_items_csv(path) -> dict[str, np.ndarray]:
    path = Path(path)
    items: dict[str, np.ndarray] = {}
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip()
        if header != ITEMS_CSV_HEADER:
            raise ValueError(f"{path}:1: expected header {ITEMS_CSV_HEADER!r}")
        for lineno, line in enumerate(fh, start=2):
            if not line.strip():
                continue
            parts = line.rstrip("\n").split(",")
            if len(parts) != 4:
                raise ValueError(f"{path}:{lineno}: expected 4 fields, got {len(parts)}")
            try:
                items[parts[0]] = np.array([float(v) for v in parts[1:]])
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from None
    return items


def save_map(clusters: list[ItemCluster], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for c in clusters:
            rec = {
                "name": c.name,
                "x": float(c.centroid[0]),
                "y": float(c.centroid[1]),
                "z": float(c.centroid[2]),
                "n_obs": c.n_observations,
                "spread": c.spread,
            }
            fh.write(json.dumps(rec, sort_keys=True) + "\n")


def load_map(path) -> list[ItemCluster]:
    path = Path(path)
    clusters = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                clusters.append(ItemCluster(
                    str(rec["name"]),
                    np.array([float(rec["x"]), float(rec["y"]), float(rec["z"])]),
                    int(rec["n_obs"]),
                    float(rec["spread"]),
                ))
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from None
    return clusters


def save_map_eval(report: MapEvalReport, path) -> None:
    payload = {
        "per_item": report.per_item,
        "mean_error": report.mean_error,
        "std_error": report.std_error,
        "n_matched": report.n_matched,
        "unmatched_gt": list(report.unmatched_gt),
        "unmatched_est": list(report.unmatched_est),
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, sort_keys=True, indent=2)
        fh.write("\n")
