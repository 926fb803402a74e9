"""Request/response models of the HTTP service.

Jobs reference files by path: the service is expected to run next to the
data (or behind a shared filesystem), which keeps multi-hundred-frame jobs
out of request bodies.
"""

from __future__ import annotations

from typing import List, Optional

from pydantic import BaseModel, Field

from ..pipeline import LossWeights, RunConfig

__all__ = [
    "HealthResponse",
    "WeightsRequest",
    "WeightsResponse",
    "RetargetRequest",
    "RetargetResponse",
    "WarpRequest",
    "WarpResponse",
    "PyramidLevel",
    "PyramidRequest",
    "LossRequest",
    "LossResponse",
    "FixtureRequest",
    "FixtureResponse",
]


class HealthResponse(BaseModel):
    status: str
    version: str


class WeightsRequest(BaseModel):
    mesh: str
    camera: str
    landmarks: str
    output: str
    k: int = Field(default=10, ge=1)
    metric: str = "geodesic"
    anchor_max_px: Optional[float] = Field(default=None, gt=0.0)


class WeightsResponse(BaseModel):
    output: str
    controllers: int
    dropped_landmarks: int
    zero_weight_vertices: int
    k: int
    metric: str


class RetargetRequest(RunConfig):
    pass


class RetargetResponse(BaseModel):
    output_dir: str
    frames_written: int
    diagnostics: dict


class WarpRequest(BaseModel):
    feature: str
    flow: str
    output: str
    mask: Optional[str] = None
    dictionary: Optional[str] = None
    magnitudes: Optional[List[float]] = None


class WarpResponse(BaseModel):
    output: str
    shape: List[int]


class PyramidLevel(BaseModel):
    decoded: str
    inpainted: str


class PyramidRequest(BaseModel):
    levels: List[PyramidLevel]
    output: str


class LossRequest(BaseModel):
    pred_dir: str
    target_dir: str
    near: float = 0.0
    far: float = 65535.0
    weights: LossWeights = Field(default_factory=LossWeights)
    reduction: str = "squared"
    landmarks_pred: Optional[str] = None
    landmarks_target: Optional[str] = None
    embedding_pred: Optional[str] = None
    embedding_target: Optional[str] = None
    features_pred: Optional[str] = None
    features_target: Optional[str] = None
    output: Optional[str] = None


class LossResponse(BaseModel):
    report: dict


class FixtureRequest(BaseModel):
    kind: str = "all"
    output_dir: str
    n_frames: int = Field(default=20, ge=0)
    size: int = Field(default=128, ge=8)
    motion_scale: float = 1.0


class FixtureResponse(BaseModel):
    kind: str
    output_dir: str
    artifacts: dict
