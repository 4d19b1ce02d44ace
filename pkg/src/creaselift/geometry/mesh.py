"""Interface meshes: points (1D), polylines (2D), triangle meshes (3D)."""

import numpy as np
from dataclasses import dataclass


@dataclass(frozen=True)
class InterfaceMesh:
    """Explicit interface: vertices (nv, d) and elements (ne, d) indices.

    Element arity follows the dimension: single vertices in 1D, segments in
    2D, triangles in 3D. Meshes may be empty (no elements); queries against
    empty meshes raise.
    """

    vertices: np.ndarray
    elements: np.ndarray

    def __post_init__(self):
        v = np.ascontiguousarray(np.atleast_2d(self.vertices), dtype=np.float64)
        d = v.shape[1]
        e = np.asarray(self.elements, dtype=np.int64)
        if e.size == 0:
            e = np.empty((0, d), dtype=np.int64)
        if e.ndim == 1:
            e = e[:, None]
        e = np.ascontiguousarray(e)
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "elements", e)
        if d not in (1, 2, 3):
            raise ValueError(f"unsupported dimension {d}")
        if e.shape[1] != d:
            raise ValueError(
                f"element arity {e.shape[1]} does not match dimension {d}")
        if not np.all(np.isfinite(v)):
            raise ValueError("non-finite vertex coordinates")
        if e.size and (e.min() < 0 or e.max() >= v.shape[0]):
            raise ValueError("element index out of range")
        if d == 2 and e.size:
            lengths = np.linalg.norm(v[e[:, 1]] - v[e[:, 0]], axis=1)
            if np.any(lengths == 0.0):
                raise ValueError("zero-length segment")
        if d == 3 and e.size:
            n = np.cross(v[e[:, 1]] - v[e[:, 0]], v[e[:, 2]] - v[e[:, 0]])
            if np.any(np.linalg.norm(n, axis=1) == 0.0):
                raise ValueError("degenerate (zero-area) triangle")

    @property
    def dimension(self) -> int:
        return self.vertices.shape[1]

    @property
    def n_elements(self) -> int:
        return self.elements.shape[0]

    def require_nonempty(self):
        if self.n_elements == 0:
            raise ValueError("empty interface")

    def translated(self, offset) -> "InterfaceMesh":
        return InterfaceMesh(self.vertices + np.asarray(offset, dtype=np.float64),
                             self.elements)


def polyline(points, closed=False) -> InterfaceMesh:
    """Ordered 2D points to a segment chain, optionally closed."""
    pts = np.asarray(points, dtype=np.float64)
    n = pts.shape[0]
    idx = np.arange(n, dtype=np.int64)
    segs = np.stack([idx[:-1], idx[1:]], axis=1)
    if closed:
        segs = np.vstack([segs, [[n - 1, 0]]])
    return InterfaceMesh(pts, segs)


def load_mesh(path) -> InterfaceMesh:
    """Load a text mesh: `v` vertex records plus `l` (segment) or `f`
    (triangle) records with 1-based indices. Lines starting with `#` are
    comments."""
    verts = []
    segs = []
    tris = []
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            tok = raw.split("#", 1)[0].split()
            if not tok:
                continue
            try:
                if tok[0] == "v":
                    verts.append([float(t) for t in tok[1:]])
                elif tok[0] == "l":
                    segs.append([int(t) - 1 for t in tok[1:3]])
                elif tok[0] == "f":
                    tris.append([int(t) - 1 for t in tok[1:4]])
                else:
                    raise ValueError(f"unknown record '{tok[0]}'")
            except (ValueError, IndexError) as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from None
    if not verts:
        raise ValueError(f"{path}: no vertices")
    v = np.asarray(verts, dtype=np.float64)
    if segs and tris:
        raise ValueError(f"{path}: mixed segment and triangle records")
    e = np.asarray(tris if tris else segs, dtype=np.int64)
    if e.size == 0:
        e = np.empty((0, v.shape[1]), dtype=np.int64)
    try:
        return InterfaceMesh(v, e)
    except ValueError as exc:
        raise ValueError(f"{path}: {exc}") from None


def save_mesh(mesh: InterfaceMesh, path):
    rec = {2: "l", 3: "f"}.get(mesh.dimension)
    if rec is None:
        raise ValueError("text format stores 2D and 3D meshes only")
    with open(path, "w") as fh:
        for v in mesh.vertices:
            fh.write("v " + " ".join(f"{c:.17g}" for c in v) + "\n")
        for e in mesh.elements:
            fh.write(rec + " " + " ".join(str(i + 1) for i in e) + "\n")
