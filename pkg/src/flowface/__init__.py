"""Flow-driven 3D facial mesh retargeting.

Deterministic operators over supplied inputs: geodesic controlling weights,
flow-tracked controller transforms with depth unprojection, raster warp
kernels, latent motion algebra, and the loss/metric suite, exposed through
a FastAPI service with a thin CLI client.
"""

__version__ = "0.1.0"

from .camera import PerspectiveCamera, load_camera, save_camera, standard_perspective
from .controllers import (
    ControllerSet,
    anchor_landmarks,
    compute_controlling_weights,
    controllers_from_vertices,
)
from .mesh import Mesh, build_edge_graph, geodesic_distances, load_obj, save_obj
from .pipeline import RunConfig, run_retarget
from .retarget import deform_mesh, retarget_frame, retarget_sequence

__all__ = [
    "__version__",
    "PerspectiveCamera",
    "load_camera",
    "save_camera",
    "standard_perspective",
    "ControllerSet",
    "anchor_landmarks",
    "compute_controlling_weights",
    "controllers_from_vertices",
    "Mesh",
    "build_edge_graph",
    "geodesic_distances",
    "load_obj",
    "save_obj",
    "RunConfig",
    "run_retarget",
    "deform_mesh",
    "retarget_frame",
    "retarget_sequence",
]
