"""Command-line pipeline: simulate | infer | refine | eval | map | plot.

Every command reads and extends a dataset manifest (manifest.json in
the dataset directory) so the stages compose without positional
plumbing.  Reruns with identical inputs and seeds produce byte-identical
primary outputs; wall-clock timings live only in run_meta_*.json files.

Exit codes: 0 success, 1 runtime failure, 2 configuration/validation
failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import estimator as est_mod
from . import loop_closure, metrics, object_map, rae, sim, trajectory
from .config import DEFAULTS, ConfigError, PipelineConfig, load_config, parse_override
from .imu import load_imu, resample, save_imu, to_hacf, make_windows
from .orientation import (estimate_orientation, load_orientations, relative_yaw,
                          save_orientations)

logger = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.json"


# ---------------------------------------------------------------------------
# Manifest


def load_manifest(dataset: Path) -> dict:
    path = dataset / MANIFEST_NAME
    if not path.is_file():
        raise ConfigError(f"no {MANIFEST_NAME} in {dataset}")
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


def save_manifest(dataset: Path, manifest: dict) -> None:
    with open(dataset / MANIFEST_NAME, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, sort_keys=True, indent=2)
        fh.write("\n")


def _manifest_file(dataset: Path, manifest: dict, key: str) -> Path:
    if key not in manifest:
        raise ConfigError(f"manifest has no {key!r} entry; run the producing stage first")
    path = dataset / manifest[key]
    if not path.exists():
        raise ConfigError(f"manifest entry {key!r} points to missing file {path}")
    return path


def _write_meta(dataset: Path, command: str, payload: dict) -> None:
    with open(dataset / f"run_meta_{command}.json", "w", encoding="utf-8") as fh:
        json.dump(payload, fh, sort_keys=True, indent=2)
        fh.write("\n")


# ---------------------------------------------------------------------------
# Config -> module configs


def _sim_config(cfg: PipelineConfig) -> sim.SimConfig:
    for key in ("sim.room_width", "sim.room_height", "sim.row_spacing"):
        if cfg[key] <= 0:
            raise ConfigError(f"{key} must be positive")
    try:
        return sim.SimConfig(
            room_width=cfg["sim.room_width"],
            room_height=cfg["sim.room_height"],
            row_spacing=cfg["sim.row_spacing"],
            speed=cfg["sim.speed"],
            sample_rate_hz=cfg["sim.sample_rate_hz"],
            acc_noise=cfg["sim.acc_noise"],
            gyro_noise=cfg["sim.gyro_noise"],
            acc_bias=tuple(cfg["sim.acc_bias"]),
            gyro_bias=tuple(cfg["sim.gyro_bias"]),
            seed=cfg["sim.seed"],
            turn_model=cfg["sim.turn_model"],
            turn_rate=cfg["sim.turn_rate"],
        )
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"sim.*: {exc}") from None


def _scene_config(cfg: PipelineConfig) -> sim.SceneConfig:
    try:
        return sim.SceneConfig(
            width_px=cfg["scene.width_px"],
            height_px=cfg["scene.height_px"],
            focal_px=cfg["scene.focal_px"],
            item_radius=cfg["scene.item_radius"],
            caption_half_angle=cfg["scene.caption_half_angle"],
            caption_z_min=cfg["scene.caption_z_min"],
            caption_z_max=cfg["scene.caption_z_max"],
            item_z=cfg["scene.item_z"],
            wall_margin=cfg["scene.wall_margin"],
        )
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"scene.*: {exc}") from None


def _map_config(cfg: PipelineConfig) -> object_map.MapConfig:
    try:
        return object_map.MapConfig(
            mount_height=cfg["map.mount_height"],
            mount_forward=cfg["map.mount_forward"],
            center_fraction=cfg["map.center_fraction"],
            depth_min=cfg["map.depth_min"],
            depth_max=cfg["map.depth_max"],
            z_min=cfg["map.z_min"],
            z_max=cfg["map.z_max"],
            cluster_eps=cfg["map.cluster_eps"],
            min_observations=cfg["map.min_observations"],
        )
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"map.*: {exc}") from None


def _rae_config(cfg: PipelineConfig) -> rae.RaeConfig:
    try:
        return rae.RaeConfig(
            k=cfg["rae.k"],
            angle_mode=cfg["rae.angle_mode"],
            reducer=cfg["rae.reducer"],
            trim_fraction=cfg["rae.trim_fraction"],
        )
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"rae.*: {exc}") from None


def _refine_config(cfg: PipelineConfig) -> loop_closure.RefineConfig:
    try:
        return loop_closure.RefineConfig(
            epochs=cfg["refine.epochs"],
            learning_rate=cfg["refine.learning_rate"],
            lambda_loop=cfg["refine.lambda_loop"],
            lambda_rot=cfg["refine.lambda_rot"],
            lambda_smooth=cfg["refine.lambda_smooth"],
            seed=cfg["refine.seed"],
            hidden=cfg["refine.hidden"],
        )
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"refine.*: {exc}") from None


def _kalman_config(cfg: PipelineConfig) -> trajectory.KalmanConfig:
    try:
        return trajectory.KalmanConfig(
            sigma_process=cfg["kalman.sigma_process"],
            sigma_obs=cfg["kalman.sigma_obs"],
        )
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"kalman.*: {exc}") from None


def _pick_trajectory(dataset: Path, manifest: dict, which: str) -> tuple[str, "trajectory.Trajectory"]:
    """Resolve 'auto'/'gt'/'est'/'refined' to a loaded trajectory."""
    if which == "auto":
        for key in ("refined_trajectory", "est_trajectory", "gt_trajectory"):
            if key in manifest:
                which = {"refined_trajectory": "refined", "est_trajectory": "est",
                         "gt_trajectory": "gt"}[key]
                break
        else:
            raise ConfigError("manifest holds no trajectory")
    key = {"gt": "gt_trajectory", "est": "est_trajectory",
           "refined": "refined_trajectory"}.get(which)
    if key is None:
        raise ConfigError(f"unknown trajectory selector {which!r}")
    return which, trajectory.load_trajectory(_manifest_file(dataset, manifest, key))


# ---------------------------------------------------------------------------
# Commands


def cmd_simulate(cfg: PipelineConfig, out_dir: Path) -> None:
    t_start = time.perf_counter()
    sim_cfg = _sim_config(cfg)
    scene_cfg = _scene_config(cfg)
    map_cfg = _map_config(cfg)
    out_dir.mkdir(parents=True, exist_ok=True)
    rasters_dir = out_dir / "rasters"
    rasters_dir.mkdir(exist_ok=True)
    traj = sim.generate_trajectory(sim_cfg)
    imu = sim.synthesize_imu(traj, sim_cfg)
    orientations = sim.true_orientations(traj)
    captures = trajectory.capture_schedule(
        traj, cfg["capture.distance_m"], cfg["capture.rotation_rad"], cfg["capture.mode"])
    items = sim.default_items(sim_cfg, cfg["sim.n_items"], seed=sim_cfg.seed)
    rasters, captions, gt_items = sim.generate_scene(captures, items, sim_cfg,
                                                     scene_cfg, map_cfg)
    save_imu(imu, out_dir / "imu.csv")
    trajectory.save_trajectory(traj, out_dir / "gt_trajectory.csv")
    save_orientations(orientations, out_dir / "orientations.csv")
    object_map.save_items_csv(gt_items, out_dir / "items.csv")
    object_map.save_captions(captions, out_dir / "captions.jsonl")
    trajectory.save_captures(captures, out_dir / "gt_captures.jsonl")
    for ev, raster in zip(captures, rasters):
        name = trajectory.image_id_for_frame(ev.frame)
        object_map.save_raster(raster, rasters_dir / f"{name}.dras")
    PipelineConfig(cfg.as_dict()).save(out_dir / "config.json")
    manifest = {
        "imu": "imu.csv",
        "gt_trajectory": "gt_trajectory.csv",
        "orientations": "orientations.csv",
        "items": "items.csv",
        "captions": "captions.jsonl",
        "gt_captures": "gt_captures.jsonl",
        "rasters_dir": "rasters",
    }
    save_manifest(out_dir, manifest)
    _write_meta(out_dir, "simulate", {
        "command": "simulate",
        "n_frames": len(traj),
        "n_captures": len(captures),
        "elapsed_s": time.perf_counter() - t_start,
    })
    print(f"simulate: {len(traj)} frames, {len(captures)} captures -> {out_dir}")


def cmd_infer(cfg: PipelineConfig, dataset: Path) -> None:
    t_start = time.perf_counter()
    manifest = load_manifest(dataset)
    imu = load_imu(_manifest_file(dataset, manifest, "imu"))
    imu = resample(imu, rate_hz=cfg["sim.sample_rate_hz"])
    t_orient = time.perf_counter()
    if cfg["orientation.source"] == "file":
        orientations = load_orientations(_manifest_file(dataset, manifest, "orientations"))
        if len(orientations) != len(imu):
            raise ValueError(
                f"orientation file covers {len(orientations)} frames, IMU has {len(imu)}")
    elif cfg["orientation.source"] == "filter":
        orientations = estimate_orientation(imu, alpha=cfg["orientation.alpha"])
    else:
        raise ConfigError("orientation.source must be 'filter' or 'file'")
    hacf = to_hacf(imu, orientations)
    tau = cfg["hacf.tau"]
    stride = cfg["hacf.stride"] or None
    windows = make_windows(hacf, tau=tau, stride=stride)
    if not windows:
        raise ValueError(
            f"recording too short: {len(imu)} frames yield no windows of {tau + 1} samples")
    t_model = time.perf_counter()
    if cfg["estimator.kind"] == "network":
        weights_path = cfg["estimator.weights"]
        if not weights_path:
            raise ConfigError(
                "estimator.weights must point to a weights file when "
                "estimator.kind is 'network'")
        rate = float(imu.sample_rate())
        bundle = est_mod.load_weights(Path(weights_path), expected_tau=tau,
                                      expected_rate=rate)
        model = est_mod.DenseVelocityNetwork(bundle)
    elif cfg["estimator.kind"] == "oracle":
        gt = trajectory.load_trajectory(_manifest_file(dataset, manifest, "gt_trajectory"))
        oracle_cfg = est_mod.OracleConfig(
            trajectory=gt,
            bias_hacf=np.asarray(cfg["oracle.bias"], dtype=float),
            noise_sigma=cfg["oracle.noise_sigma"],
        )
        model = est_mod.OracleVelocityEstimator(oracle_cfg, rng_seed=cfg["oracle.seed"])
    else:
        raise ConfigError("estimator.kind must be 'oracle' or 'network'")
    rae_cfg = _rae_config(cfg)
    t_rae = time.perf_counter()
    estimates = [rae.rae_estimate(w, model, rae_cfg, rng_seed=cfg["rae.seed"],
                                  v_max=cfg["estimator.v_max"])
                 for w in windows]
    t_integrate = time.perf_counter()
    held = trajectory.held_velocities(estimates, len(imu))
    yaws = relative_yaw(orientations)
    est_traj = trajectory.integrate(held, yaws, _kalman_config(cfg),
                                    frame_rate=float(imu.sample_rate()),
                                    t0=float(imu.t[0]))
    captures = trajectory.capture_schedule(
        est_traj, cfg["capture.distance_m"], cfg["capture.rotation_rad"],
        cfg["capture.mode"])
    t_end = time.perf_counter()
    trajectory.save_trajectory(est_traj, dataset / "est_trajectory.csv")
    with open(dataset / "velocities.csv", "w", encoding="utf-8") as fh:
        fh.write("frame,vx,vy\n")
        for f in range(len(held)):
            fh.write(f"{f},{float(held[f, 0])!r},{float(held[f, 1])!r}\n")
    trajectory.save_captures(captures, dataset / "captures.jsonl")
    manifest.update({
        "est_trajectory": "est_trajectory.csv",
        "velocities": "velocities.csv",
        "captures": "captures.jsonl",
    })
    save_manifest(dataset, manifest)
    _write_meta(dataset, "infer", {
        "command": "infer",
        "estimator": cfg["estimator.kind"],
        "k": cfg["rae.k"],
        "reducer": cfg["rae.reducer"],
        "n_windows": len(windows),
        "elapsed_s": {
            "total": t_end - t_start,
            "orientation": t_model - t_orient,
            "rae": t_integrate - t_rae,
            "integrate": t_end - t_integrate,
        },
    })
    print(f"infer: {len(windows)} windows, K={cfg['rae.k']} "
          f"({cfg['rae.reducer']}), {len(captures)} captures")


def cmd_refine(cfg: PipelineConfig, dataset: Path) -> None:
    t_start = time.perf_counter()
    manifest = load_manifest(dataset)
    est = trajectory.load_trajectory(_manifest_file(dataset, manifest, "est_trajectory"))
    vel_path = _manifest_file(dataset, manifest, "velocities")
    held = _load_velocities(vel_path, len(est))
    # held[f] is the velocity over the step into frame f, so the
    # displacement of step k -> k+1 is held[k+1] * dt
    per_frame_v = held[1:] / est.frame_rate
    refined, corrections, history = loop_closure.refine(est, per_frame_v,
                                                        _refine_config(cfg))
    trajectory.save_trajectory(refined, dataset / "refined_trajectory.csv")
    loop_closure.save_corrections(corrections, dataset / "corrections.jsonl")
    loop_closure.save_loss_history(history, dataset / "loss_history.csv")
    manifest.update({
        "refined_trajectory": "refined_trajectory.csv",
        "corrections": "corrections.jsonl",
        "loss_history": "loss_history.csv",
    })
    save_manifest(dataset, manifest)
    # the gap is measured against the original start: that is the anchor
    # the loop term pulls the corrected endpoint toward
    gap_before = float(np.linalg.norm(est.xy[-1] - est.xy[0]))
    gap_after = float(np.linalg.norm(refined.xy[-1] - est.xy[0]))
    _write_meta(dataset, "refine", {
        "command": "refine",
        "epochs": cfg["refine.epochs"],
        "loss_initial": history[0].total,
        "loss_final": history[-1].total,
        "endpoint_gap_before_m": gap_before,
        "endpoint_gap_after_m": gap_after,
        "elapsed_s": time.perf_counter() - t_start,
    })
    print(f"refine: endpoint gap {gap_before:.4f} m -> {gap_after:.4f} m "
          f"in {cfg['refine.epochs']} epochs")


def _load_velocities(path: Path, n_frames: int) -> np.ndarray:
    held = np.zeros((n_frames, 2))
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip()
        if header != "frame,vx,vy":
            raise ValueError(f"{path}:1: expected header 'frame,vx,vy'")
        for lineno, line in enumerate(fh, start=2):
            if not line.strip():
                continue
            parts = line.split(",")
            if len(parts) != 3:
                raise ValueError(f"{path}:{lineno}: expected 3 fields")
            try:
                f = int(parts[0])
                held[f] = (float(parts[1]), float(parts[2]))
            except (ValueError, IndexError) as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from None
    return held


def cmd_eval(cfg: PipelineConfig, dataset: Path) -> None:
    manifest = load_manifest(dataset)
    gt = trajectory.load_trajectory(_manifest_file(dataset, manifest, "gt_trajectory"))
    which = cfg["eval.trajectory"]
    if which == "auto":
        which = "refined" if "refined_trajectory" in manifest else "est"
    which, est = _pick_trajectory(dataset, manifest, which)
    grids = cfg["eval.grids"]
    if not grids:
        raise ConfigError("eval.grids must name at least one grid spacing")
    for grid in grids:
        grid = float(grid)
        events = trajectory.capture_schedule(gt, distance_m=grid,
                                             rotation_rad=np.pi / 2, mode="distance")
        frames = np.array([ev.frame for ev in events])
        report, alignment = metrics.evaluate(gt, est, frames=frames,
                                             trim_outliers=cfg["eval.trim_outliers"])
        idx, gt_xy, est_xy, gt_yaw, est_yaw = metrics.match_by_frame(gt, est, frames)
        tag = repr(grid)
        metrics.save_report(report, dataset / f"eval_grid_{tag}.json", extra={
            "grid_m": grid,
            "trajectory": which,
            "alignment": {
                "scale": alignment.scale,
                "rotation": alignment.rotation,
                "tx": float(alignment.translation[0]),
                "ty": float(alignment.translation[1]),
            },
        })
        metrics.save_residuals(idx, gt_xy, est_xy, gt_yaw, est_yaw, alignment,
                               dataset / f"residuals_grid_{tag}.csv")
        manifest[f"eval_grid_{tag}"] = f"eval_grid_{tag}.json"
        manifest[f"residuals_grid_{tag}"] = f"residuals_grid_{tag}.csv"
        print(f"eval[{which}, grid {grid} m]: rte {report.rte:.4f} m, "
              f"rte_metric {report.rte_metric:.4f} m, rre {report.rre:.4f} rad, "
              f"coverage {report.coverage:.3f}")
    save_manifest(dataset, manifest)


def cmd_map(cfg: PipelineConfig, dataset: Path) -> None:
    t_start = time.perf_counter()
    manifest = load_manifest(dataset)
    map_cfg = _map_config(cfg)
    which, traj = _pick_trajectory(dataset, manifest, cfg["map.trajectory"])
    if cfg["caption.mode"] == "mock":
        records = object_map.load_captions(_manifest_file(dataset, manifest, "captions"))
    elif cfg["caption.mode"] == "http":
        if not cfg["caption.endpoint"]:
            raise ConfigError("caption.endpoint is required when caption.mode is 'http'")
        service = object_map.CaptionServiceConfig(
            endpoint=cfg["caption.endpoint"],
            prompt=cfg["caption.prompt"],
            token_env=cfg["caption.token_env"],
            max_workers=cfg["caption.max_workers"],
            retries=cfg["caption.retries"],
            backoff_s=cfg["caption.backoff_s"],
            timeout_s=cfg["caption.timeout_s"],
        )
        captures = trajectory.load_captures(_manifest_file(dataset, manifest,
                                                           "gt_captures"))
        records = object_map.fetch_captions(captures, object_map.HttpCaptioner(service),
                                            max_workers=service.max_workers)
    else:
        raise ConfigError("caption.mode must be 'mock' or 'http'")
    rasters_dir = dataset / manifest.get("rasters_dir", "rasters")
    observations = []
    caption_frames = []
    for rec in records:
        raster_path = rasters_dir / f"{rec.image_id}.dras"
        if not raster_path.is_file():
            logger.warning("%s: no raster at %s, skipped", rec.image_id, raster_path)
            continue
        if not 0 <= rec.frame < len(traj):
            logger.warning("%s: frame %d outside trajectory, skipped",
                           rec.image_id, rec.frame)
            continue
        raster = object_map.load_raster(raster_path)
        pose = traj.pose(rec.frame)
        observations.extend(object_map.observe_items(rec, raster, pose, map_cfg))
        caption_frames.append(rec.frame)
    clusters = object_map.cluster_items(observations, map_cfg)
    object_map.save_map(clusters, dataset / "item_map.jsonl")
    manifest["item_map"] = "item_map.jsonl"
    eval_done = False
    if "items" in manifest and clusters:
        gt_items = object_map.load_items_csv(_manifest_file(dataset, manifest, "items"))
        gt_items = {object_map.normalize_name(k): v for k, v in gt_items.items()}
        if which == "gt":
            alignment = metrics.AlignmentResult(1.0, 0.0, np.zeros(2),
                                                np.ones(1, dtype=bool), 0.0)
        else:
            gt_traj = trajectory.load_trajectory(
                _manifest_file(dataset, manifest, "gt_trajectory"))
            frames = np.array(sorted(set(caption_frames)))
            _, alignment = metrics.evaluate(gt_traj, traj, frames=frames,
                                            trim_outliers=cfg["eval.trim_outliers"])
        try:
            map_report = object_map.evaluate_map(clusters, gt_items, alignment)
        except ValueError as exc:
            logger.warning("map evaluation skipped: %s", exc)
        else:
            object_map.save_map_eval(map_report, dataset / "map_eval.json")
            manifest["map_eval"] = "map_eval.json"
            eval_done = True
            print(f"map[{which}]: {len(clusters)} clusters, "
                  f"{map_report.n_matched} matched, mean error "
                  f"{map_report.mean_error:.3f} m (+/- {map_report.std_error:.3f})")
    save_manifest(dataset, manifest)
    _write_meta(dataset, "map", {
        "command": "map",
        "trajectory": which,
        "n_captions": len(records),
        "n_observations": len(observations),
        "n_clusters": len(clusters),
        "elapsed_s": time.perf_counter() - t_start,
    })
    if not eval_done:
        print(f"map[{which}]: {len(clusters)} clusters from "
              f"{len(observations)} observations")


def cmd_plot(cfg: PipelineConfig, dataset: Path, out: Path | None) -> None:
    manifest = load_manifest(dataset)
    series = []
    colors = {"gt_trajectory": "#888888", "est_trajectory": "#1f77b4",
              "refined_trajectory": "#2ca02c"}
    for key, color in colors.items():
        if key in manifest:
            traj = trajectory.load_trajectory(_manifest_file(dataset, manifest, key))
            series.append((key.replace("_trajectory", ""), color, traj.xy))
    if not series:
        raise ConfigError("manifest holds no trajectory to plot")
    items_xy = {}
    if "items" in manifest:
        items = object_map.load_items_csv(_manifest_file(dataset, manifest, "items"))
        items_xy = {name: p[:2] for name, p in items.items()}
    out = out or dataset / "plot.svg"
    _render_svg(series, items_xy, out)
    manifest["plot"] = out.name if out.parent == dataset else str(out)
    save_manifest(dataset, manifest)
    print(f"plot: {', '.join(name for name, _, _ in series)} -> {out}")


def _render_svg(series, items_xy: dict, path: Path) -> None:
    size, margin = 640.0, 40.0
    all_xy = np.vstack([xy for _, _, xy in series] +
                       ([np.array(list(items_xy.values()))] if items_xy else []))
    lo = all_xy.min(axis=0) - 0.2
    hi = all_xy.max(axis=0) + 0.2
    span = float(max(hi[0] - lo[0], hi[1] - lo[1], 1e-9))
    scale = (size - 2 * margin) / span

    def to_px(p):
        x = margin + (p[0] - lo[0]) * scale
        y = size - margin - (p[1] - lo[1]) * scale  # svg y grows downward
        return f"{x:.2f},{y:.2f}"

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{size:.0f}" '
        f'height="{size:.0f}" viewBox="0 0 {size:.0f} {size:.0f}">',
        f'<rect width="{size:.0f}" height="{size:.0f}" fill="#ffffff"/>',
    ]
    for i, (name, color, xy) in enumerate(series):
        pts = " ".join(to_px(p) for p in xy)
        parts.append(f'<polyline points="{pts}" fill="none" stroke="{color}" '
                     f'stroke-width="1.5"/>')
        parts.append(f'<text x="{margin:.0f}" y="{20 + 16 * i:.0f}" '
                     f'fill="{color}" font-family="monospace" font-size="13">'
                     f'{name}</text>')
    for name in sorted(items_xy):
        px = to_px(items_xy[name]).split(",")
        parts.append(f'<circle cx="{px[0]}" cy="{px[1]}" r="4" fill="#d62728"/>')
        parts.append(f'<text x="{float(px[0]) + 6:.2f}" y="{float(px[1]) - 4:.2f}" '
                     f'fill="#d62728" font-family="monospace" font-size="11">'
                     f'{name}</text>')
    start = to_px(series[0][2][0]).split(",")
    parts.append(f'<circle cx="{start[0]}" cy="{start[1]}" r="5" fill="none" '
                 f'stroke="#000000" stroke-width="1.5"/>')
    parts.append("</svg>")
    path.write_text("\n".join(parts) + "\n", encoding="utf-8")


# ---------------------------------------------------------------------------
# Argument parsing


def _add_common(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--config", type=Path, default=None,
                     help="JSON config file (flat dotted keys)")
    sub.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                     help="override a config key (repeatable)")
    for key in DEFAULTS:
        sub.add_argument(f"--{key}", dest=f"opt::{key}", default=None,
                         metavar="VALUE", help=argparse.SUPPRESS)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sweepnav",
        description="IMU-only indoor navigation and object mapping pipeline")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate a synthetic dataset")
    p.add_argument("--out", type=Path, required=True, help="dataset directory")
    p.add_argument("--seed", type=int, default=None, help="shortcut for --sim.seed")
    _add_common(p)

    p = sub.add_parser("infer", help="estimate a trajectory from IMU data")
    p.add_argument("--dataset", type=Path, required=True)
    p.add_argument("--estimator", choices=["oracle", "network"], default=None,
                   help="shortcut for --estimator.kind")
    _add_common(p)

    p = sub.add_parser("refine", help="loop-closure refinement of the estimate")
    p.add_argument("--dataset", type=Path, required=True)
    p.add_argument("--epochs", type=int, default=None, help="shortcut for --refine.epochs")
    _add_common(p)

    p = sub.add_parser("eval", help="error metrics against ground truth")
    p.add_argument("--dataset", type=Path, required=True)
    p.add_argument("--grid", action="append", type=float, default=None,
                   help="evaluation grid spacing in meters (repeatable)")
    p.add_argument("--trajectory", choices=["auto", "gt", "est", "refined"],
                   default=None, help="shortcut for --eval.trajectory")
    _add_common(p)

    p = sub.add_parser("map", help="geo-localize captioned items")
    p.add_argument("--dataset", type=Path, required=True)
    p.add_argument("--captioner", choices=["mock", "http"], default=None,
                   help="shortcut for --caption.mode")
    p.add_argument("--trajectory", choices=["auto", "gt", "est", "refined"],
                   default=None, help="shortcut for --map.trajectory")
    _add_common(p)

    p = sub.add_parser("plot", help="render trajectories to SVG")
    p.add_argument("--dataset", type=Path, required=True)
    p.add_argument("--out", type=Path, default=None)
    _add_common(p)

    return parser


def _resolve_config(args: argparse.Namespace) -> PipelineConfig:
    overrides = list(args.set)
    cfg = load_config(args.config, overrides)
    flag_values = {}
    for key in DEFAULTS:
        raw = getattr(args, f"opt::{key}", None)
        if raw is None:
            continue
        _, value = parse_override(f"{key}={raw}")
        flag_values[key] = value
    if getattr(args, "seed", None) is not None:
        flag_values["sim.seed"] = args.seed
    if getattr(args, "estimator", None) is not None:
        flag_values["estimator.kind"] = args.estimator
    if getattr(args, "epochs", None) is not None:
        flag_values["refine.epochs"] = args.epochs
    if getattr(args, "grid", None):
        flag_values["eval.grids"] = [float(g) for g in args.grid]
    if getattr(args, "captioner", None) is not None:
        flag_values["caption.mode"] = args.captioner
    if getattr(args, "trajectory", None) is not None:
        if args.command == "map":
            flag_values["map.trajectory"] = args.trajectory
        else:
            flag_values["eval.trajectory"] = args.trajectory
    if flag_values:
        cfg.update(flag_values)
    return cfg


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = _resolve_config(args)
        if args.command == "simulate":
            cmd_simulate(cfg, args.out)
        elif args.command == "infer":
            cmd_infer(cfg, args.dataset)
        elif args.command == "refine":
            cmd_refine(cfg, args.dataset)
        elif args.command == "eval":
            cmd_eval(cfg, args.dataset)
        elif args.command == "map":
            cmd_map(cfg, args.dataset)
        elif args.command == "plot":
            cmd_plot(cfg, args.dataset, args.out)
    except (ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (RuntimeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
