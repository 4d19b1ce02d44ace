"""Generalized winding numbers of 2D polylines.

The winding number at x is the angle sum over segments, atan2(cross, dot) of
the endpoint offset vectors, divided by 2 pi. Counter-clockwise closed curves
give +1 inside. The field is harmonic away from the curve and jumps by +/- 1
across it; its analytic first and second derivatives feed the combined lift.
"""

import numpy as np

from .. import kernels
from .mesh import InterfaceMesh


def _check_2d(mesh: InterfaceMesh):
    if mesh.dimension != 2:
        raise ValueError("winding numbers are defined for 2D polylines")
    mesh.require_nonempty()


def winding_number(mesh: InterfaceMesh, x) -> float:
    """Scalar winding number; raises if x lies on the polyline."""
    _check_2d(mesh)
    x = np.asarray(x, dtype=np.float64).reshape(2)
    a = mesh.vertices[mesh.elements[:, 0]] - x
    b = mesh.vertices[mesh.elements[:, 1]] - x
    cross = a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0]
    dot = (a * b).sum(1)
    if np.any((cross == 0.0) & (dot <= 0.0)):
        raise ValueError("on-curve winding undefined")
    return float(np.arctan2(cross, dot).sum() / (2.0 * np.pi))


def winding_many(mesh: InterfaceMesh, queries) -> np.ndarray:
    """Batch winding numbers; callers keep queries off the curve."""
    _check_2d(mesh)
    X = np.ascontiguousarray(np.atleast_2d(queries), dtype=np.float64)
    return kernels.winding_batch(mesh.vertices, mesh.elements, X)


def winding_derivatives_many(mesh: InterfaceMesh, queries):
    """Batch (gradient (n,2), hessian (n,2,2)) of the winding field."""
    _check_2d(mesh)
    X = np.ascontiguousarray(np.atleast_2d(queries), dtype=np.float64)
    return kernels.winding_derivative_batch(mesh.vertices, mesh.elements, X)
