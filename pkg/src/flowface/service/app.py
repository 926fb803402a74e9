"""FastAPI application wrapping the core package.

Every endpoint is a thin adapter over a job runner in ``flowface.pipeline``;
domain errors surface as HTTP 400 with the error message as the detail.
"""

from __future__ import annotations

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from .. import __version__
from ..errors import FlowfaceError
from ..pipeline import (
    run_fixture_job,
    run_loss_job,
    run_pyramid_job,
    run_retarget,
    run_warp_job,
    run_weights_job,
)
from . import schemas


def create_app() -> FastAPI:
    app = FastAPI(
        title="flowface",
        version=__version__,
        description="Flow-driven 3D facial mesh retargeting service.",
    )

    @app.exception_handler(FlowfaceError)
    async def domain_error(request: Request, exc: FlowfaceError):
        return JSONResponse(status_code=400, content={"detail": str(exc)})

    @app.exception_handler(FileNotFoundError)
    async def missing_file(request: Request, exc: FileNotFoundError):
        return JSONResponse(status_code=400, content={"detail": f"file not found: {exc.filename}"})

    @app.get("/health", response_model=schemas.HealthResponse)
    def health():
        return schemas.HealthResponse(status="ok", version=__version__)

    @app.post("/weights", response_model=schemas.WeightsResponse)
    def weights(req: schemas.WeightsRequest):
        result = run_weights_job(
            mesh_path=req.mesh,
            camera_path=req.camera,
            landmarks_path=req.landmarks,
            output_path=req.output,
            k=req.k,
            metric=req.metric,
            anchor_max_px=req.anchor_max_px,
        )
        return schemas.WeightsResponse(**result)

    @app.post("/retarget", response_model=schemas.RetargetResponse)
    def retarget(req: schemas.RetargetRequest):
        diagnostics = run_retarget(req)
        return schemas.RetargetResponse(
            output_dir=req.output_dir,
            frames_written=len(diagnostics["frames"]),
            diagnostics=diagnostics,
        )

    @app.post("/warp", response_model=schemas.WarpResponse)
    def warp(req: schemas.WarpRequest):
        result = run_warp_job(
            feature_path=req.feature,
            flow_path=req.flow,
            output_path=req.output,
            mask_path=req.mask,
            dictionary_path=req.dictionary,
            magnitudes=req.magnitudes,
        )
        return schemas.WarpResponse(**result)

    @app.post("/pyramid", response_model=schemas.WarpResponse)
    def pyramid(req: schemas.PyramidRequest):
        result = run_pyramid_job(
            levels=[level.model_dump() for level in req.levels],
            output_path=req.output,
        )
        return schemas.WarpResponse(**result)

    @app.post("/loss", response_model=schemas.LossResponse)
    def loss(req: schemas.LossRequest):
        report = run_loss_job(
            pred_dir=req.pred_dir,
            target_dir=req.target_dir,
            near=req.near,
            far=req.far,
            weights=req.weights,
            reduction=req.reduction,
            landmarks_pred=req.landmarks_pred,
            landmarks_target=req.landmarks_target,
            embedding_pred=req.embedding_pred,
            embedding_target=req.embedding_target,
            features_pred=req.features_pred,
            features_target=req.features_target,
            output_path=req.output,
        )
        return schemas.LossResponse(report=report)

    @app.post("/fixtures", response_model=schemas.FixtureResponse)
    def fixtures(req: schemas.FixtureRequest):
        result = run_fixture_job(
            kind=req.kind,
            output_dir=req.output_dir,
            n_frames=req.n_frames,
            size=req.size,
            motion_scale=req.motion_scale,
        )
        return schemas.FixtureResponse(
            kind=req.kind,
            output_dir=req.output_dir,
            artifacts={k: v for k, v in result.items() if k not in ("kind", "output_dir")},
        )

    return app
