from .mesh import TriMesh, make_primitive, normalize_unit_sphere, augment_anisotropic, sample_surface
from .pointcloud import PointCloud
from .voxel import VoxelGrid, voxel_centroids
from .camera import Camera, PosedImage, look_at, orbit_cameras
from .scene import AnalyticScene, ScenePrimitive, render_analytic
from .distance import gt_udf, gt_sdf, inside_mesh, point_mesh_distance, voxelize
from .sampling import sample_training_points, STRATA_FRACTIONS
from .metrics import chamfer, fscore, psnr

__all__ = [
    "TriMesh", "PointCloud", "VoxelGrid", "Camera", "PosedImage",
    "AnalyticScene", "ScenePrimitive",
    "make_primitive", "normalize_unit_sphere", "augment_anisotropic",
    "sample_surface", "gt_udf", "gt_sdf", "inside_mesh",
    "point_mesh_distance", "voxelize", "voxel_centroids", "look_at",
    "sample_training_points", "STRATA_FRACTIONS",
    "chamfer", "fscore", "psnr", "render_analytic", "orbit_cameras",
]
