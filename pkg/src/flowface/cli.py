"""Command-line client for the retargeting service.

By default every command talks to an in-process instance of the FastAPI
app (no network, no daemon); pass ``--server URL`` to target a running
service instead. ``flowface serve`` starts one.
"""

from __future__ import annotations

import asyncio
import json
import sys

import click
import httpx


class ServiceClient:
    def __init__(self, base_url: str | None):
        self.base_url = base_url

    def post(self, path: str, payload: dict) -> dict:
        if self.base_url:
            resp = httpx.post(self.base_url.rstrip("/") + path, json=payload, timeout=600.0)
        else:
            resp = asyncio.run(self._post_in_process(path, payload))
        if resp.status_code >= 400:
            try:
                detail = resp.json().get("detail", resp.text)
            except ValueError:
                detail = resp.text
            raise click.ClickException(str(detail))
        return resp.json()

    async def _post_in_process(self, path: str, payload: dict) -> httpx.Response:
        from .service import create_app

        transport = httpx.ASGITransport(app=create_app())
        async with httpx.AsyncClient(
            transport=transport, base_url="http://flowface.local", timeout=600.0
        ) as client:
            return await client.post(path, json=payload)


def _emit(result: dict) -> None:
    click.echo(json.dumps(result, indent=2, sort_keys=True))


@click.group()
@click.option("--server", default=None, metavar="URL", help="Base URL of a running service; default runs in-process.")
@click.pass_context
def main(ctx: click.Context, server: str | None) -> None:
    """Flow-driven 3D facial mesh retargeting."""
    ctx.obj = ServiceClient(server)


@main.command()
@click.option("--mesh", required=True, type=click.Path(), help="Rest mesh OBJ.")
@click.option("--camera", required=True, type=click.Path(), help="Camera JSON.")
@click.option("--landmarks", required=True, type=click.Path(), help="Landmark JSON array.")
@click.option("--out", "output", required=True, type=click.Path(), help="Weight file to write.")
@click.option("--k", default=10, show_default=True, help="Controllers per vertex.")
@click.option("--metric", default="geodesic", show_default=True, type=click.Choice(["geodesic", "euclidean"]))
@click.option("--anchor-max-px", default=None, type=float, help="Max landmark-to-projection distance in pixels.")
@click.pass_obj
def weights(client: ServiceClient, mesh, camera, landmarks, output, k, metric, anchor_max_px):
    """Compute controlling weights from a mesh and landmarks."""
    payload = {
        "mesh": mesh,
        "camera": camera,
        "landmarks": landmarks,
        "output": output,
        "k": k,
        "metric": metric,
        "anchor_max_px": anchor_max_px,
    }
    _emit(client.post("/weights", payload))


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path(), help="Run config JSON.")
@click.option("--output-dir", default=None, type=click.Path())
@click.option("--workers", default=None, type=int)
@click.option("--k-nearest", default=None, type=int)
@click.option("--metric", "weight_metric", default=None, type=click.Choice(["geodesic", "euclidean"]))
@click.option("--near", default=None, type=float)
@click.option("--far", default=None, type=float)
@click.pass_obj
def retarget(client: ServiceClient, config_path, output_dir, workers, k_nearest, weight_metric, near, far):
    """Run the full retarget: one deformed OBJ per frame plus diagnostics."""
    try:
        with open(config_path, "r", encoding="utf-8") as fh:
            payload = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise click.ClickException(f"cannot read config {config_path}: {exc}")
    overrides = {
        "output_dir": output_dir,
        "workers": workers,
        "k_nearest": k_nearest,
        "weight_metric": weight_metric,
        "near": near,
        "far": far,
    }
    payload.update({k: v for k, v in overrides.items() if v is not None})
    _emit(client.post("/retarget", payload))


@main.command()
@click.option("--feature", type=click.Path(), help="Feature tensor file.")
@click.option("--flow", type=click.Path(), help="Flow .flo file.")
@click.option("--mask", default=None, type=click.Path(), help="Occlusion mask tensor file.")
@click.option("--dict", "dictionary", default=None, type=click.Path(), help="Dictionary level tensor file.")
@click.option("--beta", default=None, help="Comma-separated magnitudes for the dictionary.")
@click.option("--pyramid", "pyramid_manifest", default=None, type=click.Path(), help="JSON manifest of coarse-to-fine levels.")
@click.option("--out", "output", required=True, type=click.Path())
@click.pass_obj
def warp(client: ServiceClient, feature, flow, mask, dictionary, beta, pyramid_manifest, output):
    """Apply warp kernels to tensor files (single level or pyramid)."""
    if pyramid_manifest is not None:
        with open(pyramid_manifest, "r", encoding="utf-8") as fh:
            manifest = json.load(fh)
        payload = {"levels": manifest["levels"], "output": output}
        _emit(client.post("/pyramid", payload))
        return
    if feature is None or flow is None:
        raise click.ClickException("--feature and --flow are required unless --pyramid is used")
    magnitudes = None
    if beta is not None:
        try:
            magnitudes = [float(tok) for tok in beta.split(",") if tok.strip()]
        except ValueError:
            raise click.ClickException(f"cannot parse --beta {beta!r}")
    payload = {
        "feature": feature,
        "flow": flow,
        "mask": mask,
        "dictionary": dictionary,
        "magnitudes": magnitudes,
        "output": output,
    }
    _emit(client.post("/warp", payload))


@main.command()
@click.option("--pred", "pred_dir", required=True, type=click.Path(), help="Predicted frames directory.")
@click.option("--target", "target_dir", required=True, type=click.Path(), help="Target frames directory.")
@click.option("--near", default=0.0, show_default=True, type=float)
@click.option("--far", default=65535.0, show_default=True, type=float)
@click.option("--reduction", default="squared", show_default=True, type=click.Choice(["squared", "absolute"]))
@click.option("--w-rec", default=200.0, show_default=True, type=float)
@click.option("--w-smooth", default=200.0, show_default=True, type=float)
@click.option("--w-structure", default=50.0, show_default=True, type=float)
@click.option("--landmarks-pred", default=None, type=click.Path())
@click.option("--landmarks-target", default=None, type=click.Path())
@click.option("--embedding-pred", default=None, type=click.Path())
@click.option("--embedding-target", default=None, type=click.Path())
@click.option("--features-pred", default=None, type=click.Path())
@click.option("--features-target", default=None, type=click.Path())
@click.option("--out", "output", default=None, type=click.Path(), help="Write the report JSON here.")
@click.pass_obj
def loss(client: ServiceClient, pred_dir, target_dir, near, far, reduction, w_rec, w_smooth,
         w_structure, landmarks_pred, landmarks_target, embedding_pred, embedding_target,
         features_pred, features_target, output):
    """Losses and metrics over paired frame directories."""
    payload = {
        "pred_dir": pred_dir,
        "target_dir": target_dir,
        "near": near,
        "far": far,
        "reduction": reduction,
        "weights": {"reconstruction": w_rec, "smoothness": w_smooth, "structure": w_structure},
        "landmarks_pred": landmarks_pred,
        "landmarks_target": landmarks_target,
        "embedding_pred": embedding_pred,
        "embedding_target": embedding_target,
        "features_pred": features_pred,
        "features_target": features_target,
        "output": output,
    }
    _emit(client.post("/loss", payload))


@main.command("gen-fixtures")
@click.option("--out", "output_dir", required=True, type=click.Path())
@click.option("--kind", default="all", show_default=True, type=click.Choice(["all", "grid", "slit", "sequence"]))
@click.option("--frames", "n_frames", default=20, show_default=True, type=int)
@click.option("--size", default=128, show_default=True, type=int)
@click.option("--motion-scale", default=1.0, show_default=True, type=float)
@click.pass_obj
def gen_fixtures(client: ServiceClient, output_dir, kind, n_frames, size, motion_scale):
    """Emit the synthetic meshes, flows, and depth frames used by the tests."""
    payload = {
        "kind": kind,
        "output_dir": output_dir,
        "n_frames": n_frames,
        "size": size,
        "motion_scale": motion_scale,
    }
    _emit(client.post("/fixtures", payload))


@main.command()
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8000, show_default=True, type=int)
def serve(host: str, port: int) -> None:
    """Run the HTTP service."""
    import uvicorn

    from .service import create_app

    uvicorn.run(create_app(), host=host, port=port)


if __name__ == "__main__":
    sys.exit(main())
