"""Spatial hash for clamped distance queries.

Cells are floor(x/s) per axis, packed 21 bits per axis into one int64 key;
coordinates must keep cell indices within +/- 2^20. Each element registers in
every cell its s-inflated bounding box overlaps, so any query within distance
s of an element finds it in the 3^d neighborhood of its own cell.
"""

import numpy as np
from dataclasses import dataclass

from .. import kernels
from .closest import feature_from_arrays
from .mesh import InterfaceMesh


class Far:
    """Sentinel: query farther than s from every element."""

    __slots__ = ()

    def __repr__(self):
        return "Far"


FAR = Far()


@dataclass(frozen=True)
class SpatialHashGrid:
    """CSR cell table: sorted unique keys, offsets, and element buckets."""

    cell_size: float
    keys: np.ndarray
    offsets: np.ndarray
    bucket: np.ndarray
    lo: np.ndarray
    hi: np.ndarray


def build_hash(mesh: InterfaceMesh, s: float) -> SpatialHashGrid:
    """Register every element in all cells its s-inflated box overlaps."""
    if s <= 0:
        raise ValueError("cell size s must be positive")
    mesh.require_nonempty()
    if np.max(np.abs(mesh.vertices)) / s + 2 >= 2 ** 20:
        raise ValueError("coordinates too large for 21-bit cell keys at this s")
    keys, elems = kernels.hash_cell_pairs(mesh.vertices, mesh.elements,
                                          float(s))
    order = np.argsort(keys, kind="stable")
    skeys = keys[order]
    ukeys, starts = np.unique(skeys, return_index=True)
    offsets = np.append(starts, skeys.size).astype(np.int64)
    return SpatialHashGrid(cell_size=float(s), keys=ukeys, offsets=offsets,
                           bucket=np.ascontiguousarray(elems[order]),
                           lo=mesh.vertices.min(0), hi=mesh.vertices.max(0))


def hash_clamped_query_many(grid: SpatialHashGrid, mesh: InterfaceMesh,
                            queries):
    """Batch clamped query; raw kernel arrays with elem == -1 marking Far."""
    X = np.ascontiguousarray(np.atleast_2d(queries), dtype=np.float64)
    return kernels.hash_query_batch(mesh.vertices, mesh.elements, grid.keys,
                                    grid.offsets, grid.bucket,
                                    grid.cell_size, X)


def hash_clamped_query(grid: SpatialHashGrid, mesh: InterfaceMesh, x):
    """ClosestFeature if the true distance is below s, else FAR."""
    out = hash_clamped_query_many(grid, mesh, np.atleast_2d(x))
    if out[0][0] < 0:
        return FAR
    return feature_from_arrays(mesh, 0, *out)
