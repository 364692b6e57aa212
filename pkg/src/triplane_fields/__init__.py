"""Tri-plane hybrid neural fields: fitting, reconstruction, and direct
neural processing of the plane features."""

__version__ = "0.1.0"

from .field import (FIELD_KINDS, HybridField, PosEncConfig, SinMLP, TriPlane,
                    deserialize, field_forward, init_random, interpolate,
                    param_count, posenc, serialize)
from .fitting import (FitConfig, FitReport, default_config, fit_field, fit_rf,
                      loss_bce, loss_focal, scale_distance)
from .recon import (marching_cubes, mesh_from_sdf, pc_from_udf, render_rays,
                    render_rf, voxel_from_of)

__all__ = [
    "FIELD_KINDS", "HybridField", "PosEncConfig", "SinMLP", "TriPlane",
    "deserialize", "field_forward", "init_random", "interpolate",
    "param_count", "posenc", "serialize",
    "FitConfig", "FitReport", "default_config", "fit_field", "fit_rf",
    "loss_bce", "loss_focal", "scale_distance",
    "marching_cubes", "mesh_from_sdf", "pc_from_udf", "render_rays",
    "render_rf", "voxel_from_of",
    "__version__",
]
