"""Explicit interface geometry: meshes, closest features, hashing, winding."""

from .closest import (ClosestFeature, closest_point, closest_point_many,
                      distance_gradient, distance_hessian)
from .hashgrid import (FAR, Far, SpatialHashGrid, build_hash,
                       hash_clamped_query, hash_clamped_query_many)
from .mesh import InterfaceMesh, load_mesh, polyline, save_mesh
from .winding import (winding_derivatives_many, winding_many, winding_number)

__all__ = [
    "InterfaceMesh", "load_mesh", "save_mesh", "polyline",
    "ClosestFeature", "closest_point", "closest_point_many",
    "distance_gradient", "distance_hessian",
    "SpatialHashGrid", "Far", "FAR", "build_hash",
    "hash_clamped_query", "hash_clamped_query_many",
    "winding_number", "winding_many", "winding_derivatives_many",
]
