from .io import load_cloud, load_labels, save_cloud, save_labels
from .model import PointCloud, SpatialIndex, bbox_diagonal, mean_spacing
from .normals import estimate_normals

__all__ = [
    "PointCloud",
    "SpatialIndex",
    "bbox_diagonal",
    "estimate_normals",
    "load_cloud",
    "load_labels",
    "mean_spacing",
    "save_cloud",
    "save_labels",
]
