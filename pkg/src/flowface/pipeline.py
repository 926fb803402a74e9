"""End-to-end runs over files: configuration, orchestration, diagnostics.

The service endpoints and the CLI both funnel into the job runners here, so
behavior is identical no matter which surface invoked it. All jobs are
deterministic: two runs over the same inputs produce byte-identical outputs
(diagnostics differ only in their ``generated_at`` stamp).
"""

from __future__ import annotations

import datetime as _dt
import json
import re
from pathlib import Path
from typing import Literal, Optional

import numpy as np
from pydantic import BaseModel, Field, model_validator

from . import losses
from .camera import load_camera
from .controllers import (
    anchor_landmarks,
    compute_controlling_weights,
    load_landmarks,
    save_weights,
)
from .errors import ConfigError, PipelineError
from .fixtures import synthetic_sequence, write_grid_fixture, write_slit_fixture
from .flowio import read_flow
from .mesh import load_obj, save_obj
from .rgbd import load_depth
from .retarget import FrameMotion, retarget_frame
from .tensorio import read_tensor, write_tensor
from .warp import (
    DEFAULT_DICTIONARY_SIZE,
    apply_mask,
    backward_warp,
    depth_motion_combine,
    load_dictionary_level,
    pyramid_refine,
)


class LossWeights(BaseModel):
    reconstruction: float = Field(default=losses.DEFAULT_WEIGHT_REC, ge=0.0)
    smoothness: float = Field(default=losses.DEFAULT_WEIGHT_SMOOTH, ge=0.0)
    structure: float = Field(default=losses.DEFAULT_WEIGHT_STRUCTURE, ge=0.0)


class RunConfig(BaseModel):
    """Resolved configuration of a retargeting run.

    Loadable from a single JSON file; CLI flags override individual fields.
    ``near``/``far`` default to the camera's depth encoding range.
    """

    mesh: str
    camera: str
    landmarks: str
    frames_dir: str
    flow_dir: str
    output_dir: str
    k_nearest: int = Field(default=10, ge=1)
    dict_size: int = Field(default=DEFAULT_DICTIONARY_SIZE, ge=0)
    weight_metric: Literal["geodesic", "euclidean"] = "geodesic"
    loss_weights: LossWeights = Field(default_factory=LossWeights)
    near: Optional[float] = None
    far: Optional[float] = None
    anchor_max_px: Optional[float] = Field(default=None, gt=0.0)
    workers: int = Field(default=1, ge=1)

    @model_validator(mode="after")
    def _near_before_far(self):
        if self.near is not None and self.far is not None and not self.near < self.far:
            raise ValueError(f"near must be < far, got {self.near} >= {self.far}")
        return self


def load_config(path: str | Path, overrides: dict | None = None) -> RunConfig:
    with open(path, "r", encoding="utf-8") as fh:
        data = json.load(fh)
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: config must be a JSON object")
    if overrides:
        data.update({k: v for k, v in overrides.items() if v is not None})
    return RunConfig(**data)


def _indexed_files(directory: Path, pattern: str, what: str) -> dict[int, Path]:
    rx = re.compile(pattern)
    out: dict[int, Path] = {}
    for p in sorted(directory.iterdir()):
        m = rx.fullmatch(p.name)
        if m:
            out[int(m.group(1))] = p
    if not out:
        raise ConfigError(f"no {what} files found in {directory}")
    return out


def _matched_frame_files(frames_dir: Path, flow_dir: Path):
    """Flows and depth frames paired by zero-padded numeric index.

    Indices must form 0..N-1 in both directories; mismatches are errors that
    name the offending frame rather than silently truncating.
    """
    depths = _indexed_files(frames_dir, r"depth_(\d+)\.png", "depth frame")
    flows = _indexed_files(flow_dir, r"flow_(\d+)\.flo", "flow")
    n = max(len(depths), len(flows), max(depths) + 1, max(flows) + 1)
    for i in range(n):
        if i not in flows:
            raise ConfigError(f"missing flow file for frame {i}")
        if i not in depths:
            raise ConfigError(f"missing depth file for frame {i}")
    if len(flows) != len(depths):
        raise ConfigError(
            f"frame/flow counts differ: {len(depths)} depth frames vs {len(flows)} flows"
        )
    return [(i, flows[i], depths[i]) for i in range(n)]


def run_retarget(config: RunConfig) -> dict:
    """Full retargeting run: weights once, then one OBJ per frame.

    Returns the diagnostics document, which is also written to
    ``output_dir/diagnostics.json``.
    """
    mesh = load_obj(config.mesh)
    camera = load_camera(config.camera)
    near = config.near if config.near is not None else camera.near
    far = config.far if config.far is not None else camera.far

    landmarks = load_landmarks(config.landmarks)
    anchor_px = (
        config.anchor_max_px
        if config.anchor_max_px is not None
        else 0.05 * float(np.hypot(camera.width, camera.height))
    )
    cset = anchor_landmarks(mesh, landmarks, camera, max_px=anchor_px)
    if len(cset) == 0:
        raise PipelineError("no landmark could be anchored to the mesh")
    cset = compute_controlling_weights(
        mesh, cset, k=config.k_nearest, metric=config.weight_metric
    )

    frames_dir = Path(config.frames_dir)
    pairs = _matched_frame_files(frames_dir, Path(config.flow_dir))
    rest_path = frames_dir / "rest_depth.png"
    if not rest_path.exists():
        raise ConfigError(f"missing rest depth image {rest_path}")
    rest_depth = load_depth(rest_path, near, far)

    output_dir = Path(config.output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)

    def work(item):
        index, flow_path, depth_path = item
        try:
            motion = FrameMotion(
                flow=read_flow(flow_path),
                depth_src=rest_depth,
                depth_dst=load_depth(depth_path, near, far),
            )
            deformed, diag = retarget_frame(mesh, cset, camera, motion, frame=index)
        except PipelineError:
            raise
        except Exception as exc:  # surface the frame number with the cause
            raise PipelineError(f"frame {index}: {exc}") from exc
        out_path = output_dir / f"frame_{index:05d}.obj"
        save_obj(deformed, out_path)
        return {
            "frame": index,
            "output": out_path.name,
            "clamped_controllers": diag.clamped_controllers,
            "inactive_controllers": diag.inactive_controllers,
            "undeformed_vertices": diag.undeformed_vertices,
        }

    if config.workers <= 1:
        frame_rows = [work(item) for item in pairs]
    else:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=config.workers) as pool:
            frame_rows = list(pool.map(work, pairs))
    frame_rows.sort(key=lambda row: row["frame"])

    resolved = config.model_dump(mode="json")
    resolved["near"] = near
    resolved["far"] = far
    resolved["anchor_max_px"] = anchor_px
    diagnostics = {
        "generated_at": _dt.datetime.now(_dt.timezone.utc).isoformat(),
        "config": resolved,
        "mesh": {"vertices": mesh.n_vertices, "faces": mesh.n_faces},
        "controllers": {
            "count": len(cset),
            "dropped_landmarks": cset.dropped_landmarks,
            "zero_weight_vertices": cset.zero_weight_vertices,
            "metric": cset.metric,
            "k": cset.k,
        },
        "frames": frame_rows,
        "conventions": {
            "deformation": "rest_relative",
            "pixel_to_clip": "x: 2x/W-1, y per camera pixel_convention",
            "depth_sampling": "bilinear over valid texels, nearest within radius 3",
        },
    }
    with open(output_dir / "diagnostics.json", "w", encoding="utf-8") as fh:
        json.dump(diagnostics, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return diagnostics


def run_weights_job(
    mesh_path: str,
    camera_path: str,
    landmarks_path: str,
    output_path: str,
    k: int = 10,
    metric: str = "geodesic",
    anchor_max_px: float | None = None,
) -> dict:
    """mesh + landmarks -> weight file; returns anchoring/weight diagnostics."""
    mesh = load_obj(mesh_path)
    camera = load_camera(camera_path)
    landmarks = load_landmarks(landmarks_path)
    cset = anchor_landmarks(mesh, landmarks, camera, max_px=anchor_max_px)
    if len(cset) == 0:
        raise PipelineError("no landmark could be anchored to the mesh")
    cset = compute_controlling_weights(mesh, cset, k=k, metric=metric)
    save_weights(cset, output_path)
    return {
        "output": str(output_path),
        "controllers": len(cset),
        "dropped_landmarks": cset.dropped_landmarks,
        "zero_weight_vertices": cset.zero_weight_vertices,
        "k": cset.k,
        "metric": cset.metric,
    }


def run_warp_job(
    feature_path: str,
    flow_path: str,
    output_path: str,
    mask_path: str | None = None,
    dictionary_path: str | None = None,
    magnitudes: list[float] | None = None,
) -> dict:
    """Warp a tensor file by a flow field, optionally masking and adding
    dictionary-modeled depth motion."""
    feature = read_tensor(feature_path)
    if feature.ndim == 2:
        feature = feature[None]
    flow = read_flow(flow_path)
    out = backward_warp(feature, flow)
    if mask_path is not None:
        out = apply_mask(out, read_tensor(mask_path))
    if (dictionary_path is None) != (magnitudes is None):
        raise ConfigError("dictionary and magnitudes must be supplied together")
    if dictionary_path is not None:
        level = load_dictionary_level(dictionary_path)
        out = depth_motion_combine(out, np.asarray(magnitudes, dtype=np.float64), level)
    write_tensor(output_path, out.astype(feature.dtype), layout="CHW")
    return {"output": str(output_path), "shape": list(out.shape)}


def run_pyramid_job(levels: list[dict], output_path: str) -> dict:
    """Coarse-to-fine composition of (decoded, inpainted) tensor-file pairs."""
    loaded = []
    for i, level in enumerate(levels):
        try:
            decoded = read_tensor(level["decoded"])
            inpainted = read_tensor(level["inpainted"])
        except KeyError as exc:
            raise ConfigError(f"pyramid level {i} is missing field {exc}") from exc
        if decoded.ndim == 2:
            decoded = decoded[None]
        if inpainted.ndim == 2:
            inpainted = inpainted[None]
        loaded.append((decoded, inpainted))
    out = pyramid_refine(loaded)
    write_tensor(output_path, out, layout="CHW")
    return {"output": str(output_path), "shape": list(out.shape)}


def _load_landmark_frames(path: Path) -> dict[int, list]:
    if path.is_dir():
        files = _indexed_files(path, r"landmarks_(\d+)\.json", "landmark")
        return {i: load_landmarks(p) for i, p in files.items()}
    return {0: load_landmarks(path)}


def run_loss_job(
    pred_dir: str,
    target_dir: str,
    near: float = 0.0,
    far: float = 65535.0,
    weights: LossWeights | None = None,
    reduction: str = "squared",
    landmarks_pred: str | None = None,
    landmarks_target: str | None = None,
    embedding_pred: str | None = None,
    embedding_target: str | None = None,
    features_pred: str | None = None,
    features_target: str | None = None,
    output_path: str | None = None,
) -> dict:
    """Losses and metrics over paired frame directories.

    Directories hold ``color_%05d.png`` and/or ``depth_%05d.png``; both sides
    must cover the same frame indices. Optional landmark files/directories
    add AKD, embedding tensor files add AED/CSIM, and feature-pyramid
    directories (scale_%d.bin) add the perceptual term.
    """
    weights = weights or LossWeights()
    pred_dir = Path(pred_dir)
    target_dir = Path(target_dir)

    def gather(d: Path, kind: str) -> dict[int, Path]:
        rx = re.compile(rf"{kind}_(\d+)\.png")
        return {int(m.group(1)): p for p in sorted(d.iterdir()) if (m := rx.fullmatch(p.name))}

    pred_depth, tgt_depth = gather(pred_dir, "depth"), gather(target_dir, "depth")
    pred_color, tgt_color = gather(pred_dir, "color"), gather(target_dir, "color")
    if not pred_depth and not pred_color:
        raise ConfigError(f"no color_*.png or depth_*.png frames found in {pred_dir}")
    for name, a, b in (("depth", pred_depth, tgt_depth), ("color", pred_color, tgt_color)):
        if set(a) != set(b):
            raise ConfigError(f"{name} frame indices differ between {pred_dir} and {target_dir}")

    landmark_rows = {}
    if (landmarks_pred is None) != (landmarks_target is None):
        raise ConfigError("landmarks must be supplied for both prediction and target")
    if landmarks_pred is not None:
        lp = _load_landmark_frames(Path(landmarks_pred))
        lt = _load_landmark_frames(Path(landmarks_target))
        if set(lp) != set(lt):
            raise ConfigError("landmark frame indices differ between prediction and target")
        for i in lp:
            pred_pts = [(p["x_px"], p["y_px"]) for p in lp[i]]
            tgt_pts = [(p["x_px"], p["y_px"]) for p in lt[i]]
            landmark_rows[i] = losses.akd(np.asarray(pred_pts), np.asarray(tgt_pts))

    indices = sorted(set(pred_depth) | set(pred_color))
    frame_rows = []
    for i in indices:
        row: dict = {"frame": i}
        rec_terms = []
        if i in pred_color:
            from .rgbd import load_color

            ca = load_color(pred_color[i])
            cb = load_color(tgt_color[i])
            row["color_l1"] = losses.l1_loss(ca, cb)
            rec_terms.append((3, row["color_l1"]))
        if i in pred_depth:
            da = load_depth(pred_depth[i], near, far).values
            db = load_depth(tgt_depth[i], near, far).values
            row["depth_l1"] = losses.l1_loss(da, db)
            row["smooth"] = losses.smooth_loss(da, db, reduction=reduction)
            row["structure"] = losses.structure_preserve_loss(da, db, reduction=reduction)
            rec_terms.append((1, row["depth_l1"]))
        total_ch = sum(c for c, _ in rec_terms)
        row["rec_l1"] = sum(c * v for c, v in rec_terms) / total_ch
        row["combined"] = losses.combined_loss(
            0.0,
            row["rec_l1"],
            row.get("smooth", 0.0),
            row.get("structure", 0.0),
            w_rec=weights.reconstruction,
            w_smooth=weights.smoothness,
            w_structure=weights.structure,
        )
        if i in landmark_rows:
            row["akd"] = landmark_rows[i]
        frame_rows.append(row)

    conventions = {
        "reduction": reduction,
        "perceptual_in_combined": False,
        "rec_l1": "channel-weighted mean of color and depth L1",
        "depth_near": near,
        "depth_far": far,
    }
    report = losses.metric_report(frame_rows, conventions)

    if (embedding_pred is None) != (embedding_target is None):
        raise ConfigError("embeddings must be supplied for both prediction and target")
    if embedding_pred is not None:
        e1 = read_tensor(embedding_pred)
        e2 = read_tensor(embedding_target)
        report["identity"] = {"aed": losses.aed(e1, e2), "csim": losses.csim(e1, e2)}

    if (features_pred is None) != (features_target is None):
        raise ConfigError("feature pyramids must be supplied for both prediction and target")
    if features_pred is not None:
        fp = _indexed_files(Path(features_pred), r"scale_(\d+)\.bin", "feature scale")
        ft = _indexed_files(Path(features_target), r"scale_(\d+)\.bin", "feature scale")
        if set(fp) != set(ft):
            raise ConfigError("feature scales differ between prediction and target")
        pyr_p = [read_tensor(fp[i]) for i in sorted(fp)]
        pyr_t = [read_tensor(ft[i]) for i in sorted(ft)]
        report["perceptual"] = losses.perceptual_loss(pyr_p, pyr_t)

    if output_path is not None:
        with open(output_path, "w", encoding="utf-8") as fh:
            json.dump(report, fh, indent=2, sort_keys=True)
            fh.write("\n")
        report["output"] = str(output_path)
    return report


def run_fixture_job(
    kind: str,
    output_dir: str,
    n_frames: int = 20,
    size: int = 128,
    motion_scale: float = 1.0,
) -> dict:
    """Emit the synthetic fixtures (grid, slit, sequence, or all)."""
    out = Path(output_dir)
    result: dict = {"kind": kind, "output_dir": str(out)}
    if kind not in ("grid", "slit", "sequence", "all"):
        raise ConfigError(f"unknown fixture kind {kind!r}")
    if kind in ("grid", "all"):
        result["grid"] = write_grid_fixture(out / "grid" if kind == "all" else out)
    if kind in ("slit", "all"):
        result["slit"] = write_slit_fixture(out / "slit" if kind == "all" else out)
    if kind in ("sequence", "all"):
        result["sequence"] = synthetic_sequence(
            out / "sequence" if kind == "all" else out,
            n_frames=n_frames,
            size=size,
            motion_scale=motion_scale,
        )
    return result
