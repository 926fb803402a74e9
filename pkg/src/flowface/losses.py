"""Reconstruction losses over rasters and identity/keypoint metrics.

The depth losses follow a squared-difference reading of the L2-style
expectation; ``reduction="absolute"`` switches both to mean absolute
differences, and whichever convention ran is recorded in metric reports.
Stencils use replicate padding; windowed maxima shrink at the borders.
"""

from __future__ import annotations

import numpy as np
from scipy.ndimage import maximum_filter

from .errors import LossError

REDUCTIONS = ("squared", "absolute")

DEFAULT_WEIGHT_REC = 200.0
DEFAULT_WEIGHT_SMOOTH = 200.0
DEFAULT_WEIGHT_STRUCTURE = 50.0


def _as_raster(arr, name: str, min_size: int = 1) -> np.ndarray:
    arr = np.asarray(arr, dtype=np.float64)
    if arr.ndim == 3 and arr.shape[0] == 1:
        arr = arr[0]
    if arr.ndim != 2:
        raise LossError(f"{name} must be a 2-D raster, got shape {arr.shape}")
    if arr.shape[0] < min_size or arr.shape[1] < min_size:
        raise LossError(f"{name} is too small ({arr.shape}), need at least {min_size}x{min_size}")
    return arr


def _check_reduction(reduction: str) -> None:
    if reduction not in REDUCTIONS:
        raise LossError(f"unknown reduction {reduction!r}, expected one of {REDUCTIONS}")


def l1_loss(a: np.ndarray, b: np.ndarray) -> float:
    """Mean absolute difference over all elements."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise LossError(f"shape mismatch: {a.shape} vs {b.shape}")
    return float(np.mean(np.abs(a - b)))


def laplacian(d: np.ndarray) -> np.ndarray:
    """5-point Laplacian stencil with replicate padding at the borders."""
    d = _as_raster(d, "raster", min_size=3)
    p = np.pad(d, 1, mode="edge")
    return p[1:-1, 2:] + p[1:-1, :-2] + p[2:, 1:-1] + p[:-2, 1:-1] - 4.0 * d


def smooth_loss(d: np.ndarray, d_hat: np.ndarray, reduction: str = "squared") -> float:
    """Mean (squared) difference of the two rasters' Laplacians.

    Averaged over interior pixels, where the stencil is fully supported;
    replicate padding would otherwise charge linear ramps at the borders.
    """
    _check_reduction(reduction)
    d = _as_raster(d, "d", min_size=3)
    d_hat = _as_raster(d_hat, "d_hat", min_size=3)
    if d.shape != d_hat.shape:
        raise LossError(f"shape mismatch: {d.shape} vs {d_hat.shape}")
    diff = (laplacian(d) - laplacian(d_hat))[1:-1, 1:-1]
    if reduction == "squared":
        return float(np.mean(diff * diff))
    return float(np.mean(np.abs(diff)))


def gradient_maps(d: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Central-difference gradients (d/dx, d/dy) with replicate padding."""
    d = _as_raster(d, "raster", min_size=3)
    p = np.pad(d, 1, mode="edge")
    gx = p[1:-1, 2:] - p[1:-1, :-2]
    gy = p[2:, 1:-1] - p[:-2, 1:-1]
    return gx, gy


def gradient_magnitude(d: np.ndarray) -> np.ndarray:
    gx, gy = gradient_maps(d)
    return np.hypot(gx, gy)


def structure_preserve_loss(
    d: np.ndarray, d_hat: np.ndarray, window: int = 5, reduction: str = "squared"
) -> float:
    """Difference of windowed gradient-magnitude maxima.

    Per pixel, the gradient magnitude is maximized over a ``window`` x
    ``window`` neighborhood (shrunk at borders); the loss is the mean
    (squared) difference of the two maximum maps.
    """
    _check_reduction(reduction)
    if window < 1 or window % 2 == 0:
        raise LossError(f"window must be odd and >= 1, got {window}")
    d = _as_raster(d, "d", min_size=3)
    d_hat = _as_raster(d_hat, "d_hat", min_size=3)
    if d.shape != d_hat.shape:
        raise LossError(f"shape mismatch: {d.shape} vs {d_hat.shape}")
    # mode="nearest" replicates border values, which equals shrinking the window
    m = maximum_filter(gradient_magnitude(d), size=window, mode="nearest")
    m_hat = maximum_filter(gradient_magnitude(d_hat), size=window, mode="nearest")
    diff = m - m_hat
    if reduction == "squared":
        return float(np.mean(diff * diff))
    return float(np.mean(np.abs(diff)))


def perceptual_loss(pred_features: list, target_features: list) -> float:
    """Sum over scales of the mean absolute feature difference."""
    if len(pred_features) != len(target_features):
        raise LossError(
            f"feature pyramids have different depths: "
            f"{len(pred_features)} vs {len(target_features)}"
        )
    total = 0.0
    for scale, (p, t) in enumerate(zip(pred_features, target_features)):
        p = np.asarray(p, dtype=np.float64)
        t = np.asarray(t, dtype=np.float64)
        if p.shape != t.shape:
            raise LossError(f"shape mismatch at scale {scale}: {p.shape} vs {t.shape}")
        total += float(np.mean(np.abs(p - t)))
    return total


def combined_loss(
    l_perceptual: float,
    l_rec: float,
    l_smooth: float,
    l_structure: float,
    w_rec: float = DEFAULT_WEIGHT_REC,
    w_smooth: float = DEFAULT_WEIGHT_SMOOTH,
    w_structure: float = DEFAULT_WEIGHT_STRUCTURE,
) -> float:
    """Weighted total: perceptual + w_rec*rec + w_smooth*smooth + w_structure*structure."""
    for name, w in (("w_rec", w_rec), ("w_smooth", w_smooth), ("w_structure", w_structure)):
        if w < 0:
            raise LossError(f"{name} must be nonnegative, got {w}")
    terms = (l_perceptual, l_rec, l_smooth, l_structure)
    if not all(np.isfinite(terms)):
        raise LossError(f"loss terms must be finite, got {terms}")
    return float(l_perceptual + w_rec * l_rec + w_smooth * l_smooth + w_structure * l_structure)


def akd(pred_landmarks: np.ndarray, gt_landmarks: np.ndarray) -> float:
    """Average keypoint distance: mean Euclidean gap of corresponding points."""
    pred = np.asarray(pred_landmarks, dtype=np.float64).reshape(-1, 2)
    gt = np.asarray(gt_landmarks, dtype=np.float64).reshape(-1, 2)
    if len(pred) != len(gt):
        raise LossError(f"landmark counts differ: {len(pred)} vs {len(gt)}")
    if len(pred) == 0:
        raise LossError("landmark sets are empty")
    return float(np.mean(np.linalg.norm(pred - gt, axis=1)))


def aed(e1: np.ndarray, e2: np.ndarray) -> float:
    """Euclidean distance between two identity embeddings."""
    e1 = np.asarray(e1, dtype=np.float64).reshape(-1)
    e2 = np.asarray(e2, dtype=np.float64).reshape(-1)
    if e1.shape != e2.shape:
        raise LossError(f"embedding dimensions differ: {e1.shape} vs {e2.shape}")
    return float(np.linalg.norm(e1 - e2))


def csim(e1: np.ndarray, e2: np.ndarray) -> float:
    """Cosine similarity between two identity embeddings."""
    e1 = np.asarray(e1, dtype=np.float64).reshape(-1)
    e2 = np.asarray(e2, dtype=np.float64).reshape(-1)
    if e1.shape != e2.shape:
        raise LossError(f"embedding dimensions differ: {e1.shape} vs {e2.shape}")
    n1 = np.linalg.norm(e1)
    n2 = np.linalg.norm(e2)
    if n1 == 0.0 or n2 == 0.0:
        raise LossError("cosine similarity is undefined for a zero-norm embedding")
    return float(np.dot(e1, e2) / (n1 * n2))


def metric_report(frames: list[dict], conventions: dict) -> dict:
    """Per-frame metric rows plus mean/stddev summaries and the conventions used."""
    summary: dict = {}
    if frames:
        keys = sorted(
            {
                k
                for row in frames
                for k in row
                if k != "frame" and isinstance(row[k], (int, float))
            }
        )
        for key in keys:
            vals = np.array([row[key] for row in frames if key in row], dtype=np.float64)
            summary[key] = {"mean": float(vals.mean()), "std": float(vals.std())}
    return {"frames": frames, "summary": summary, "conventions": conventions}
