"""Closest features and analytic distance derivatives."""

import numpy as np
from dataclasses import dataclass

from .. import kernels
from ..kernels.common import KIND_EDGE, KIND_FACE, KIND_VERTEX
from .mesh import InterfaceMesh

KIND_NAMES = {KIND_VERTEX: "vertex", KIND_EDGE: "edge", KIND_FACE: "face"}


@dataclass(frozen=True)
class ClosestFeature:
    """Closest point on an interface element to a query.

    kind is "vertex", "edge" (interior), or "face" (interior). support holds
    the vertex ids spanning the feature; tangent is the unit edge direction
    for edge features (None otherwise).
    """

    element: int
    kind: str
    point: np.ndarray
    distance: float
    support: tuple
    tangent: np.ndarray | None = None


def feature_from_arrays(mesh, i, elem, dist, point, kind, sub0, sub1):
    """Build a ClosestFeature from row i of a kernel query result."""
    k = int(kind[i])
    support = (int(sub0[i]),) if sub1[i] < 0 else (int(sub0[i]), int(sub1[i]))
    tangent = None
    if k == KIND_EDGE:
        t = mesh.vertices[support[1]] - mesh.vertices[support[0]]
        tangent = t / np.linalg.norm(t)
    return ClosestFeature(element=int(elem[i]), kind=KIND_NAMES[k],
                          point=point[i].copy(), distance=float(dist[i]),
                          support=support, tangent=tangent)


def closest_point_many(mesh: InterfaceMesh, queries):
    """Brute-force batch query; returns raw kernel arrays
    (elem, dist, point, kind, sub0, sub1)."""
    mesh.require_nonempty()
    X = np.ascontiguousarray(np.atleast_2d(queries), dtype=np.float64)
    if not np.all(np.isfinite(X)):
        raise ValueError("non-finite query")
    return kernels.closest_point_batch(mesh.vertices, mesh.elements, X)


def closest_point(mesh: InterfaceMesh, x) -> ClosestFeature:
    """Global closest feature; ties broken by lowest element index."""
    out = closest_point_many(mesh, np.atleast_2d(x))
    return feature_from_arrays(mesh, 0, *out)


def distance_gradient(feature: ClosestFeature, x) -> np.ndarray:
    """Unit radial gradient of the unsigned distance at x."""
    if feature.distance == 0.0:
        raise ValueError("on-interface gradient undefined")
    x = np.asarray(x, dtype=np.float64)
    return (x - feature.point) / feature.distance


def distance_hessian(feature: ClosestFeature, x) -> np.ndarray:
    """Spatial Hessian of the unsigned distance at x.

    Face features and 2D edge interiors are affine in the normal coordinate
    (zero Hessian); vertex features give the radial-field curvature
    (I - r r^T)/D; 3D edge interiors curve only transverse to the edge.
    """
    if feature.distance == 0.0:
        raise ValueError("on-interface hessian undefined")
    x = np.asarray(x, dtype=np.float64)
    d = x.shape[0]
    r = (x - feature.point) / feature.distance
    if feature.kind == "face":
        return np.zeros((d, d))
    if feature.kind == "edge":
        if d == 2:
            return np.zeros((d, d))
        t = feature.tangent
        return (np.eye(d) - np.outer(t, t) - np.outer(r, r)) / feature.distance
    return (np.eye(d) - np.outer(r, r)) / feature.distance
