"""Closed-form lifting maps.

A lifting map augments spatial coordinates x with extra coordinates that are
smooth away from an interface and kinked or jumping exactly on it, so a
smooth network of the lifted point can represent fields with gradient or
value discontinuities at the interface:

- "gradient" mode appends H = smooth-clamped unsigned distance to the
  interface (kink on the interface, constant plateau s/2 beyond distance s);
- "combined" mode additionally appends the generalized winding number of a
  cut polyline (value jump across the cut);
- "constant" mode appends the constant s/2 (ablation: same architecture, no
  interface information).
"""

import numpy as np
from dataclasses import dataclass

from .geometry import (InterfaceMesh, SpatialHashGrid, build_hash,
                       closest_point, hash_clamped_query_many, winding_many,
                       winding_derivatives_many, winding_number)
from .kernels.common import KIND_EDGE, KIND_VERTEX

MODES = ("gradient", "combined", "constant")
DEFAULT_S = {1: 1.0 / 8.0, 2: 1.0 / 8.0, 3: 1.0 / 16.0}


def smooth_clamp(D, s):
    """Clamped distance profile and its first two derivatives in D.

    Below s: D - D^2/(2s) (unit slope at 0); at and beyond s: the constant
    plateau s/2. Value and slope are continuous at D = s.
    """
    if s <= 0:
        raise ValueError("clamp threshold s must be positive")
    D_arr = np.asarray(D, dtype=np.float64)
    if np.any(D_arr < 0):
        raise ValueError("negative distance")
    below = D_arr < s
    value = np.where(below, D_arr - D_arr * D_arr / (2.0 * s), s / 2.0)
    d1 = np.where(below, 1.0 - D_arr / s, 0.0)
    d2 = np.where(below, -1.0 / s, 0.0)
    if np.ndim(D) == 0:
        return float(value), float(d1), float(d2)
    return value, d1, d2


@dataclass(frozen=True)
class LiftingMap:
    """Interface + clamp threshold + mode, with a prebuilt hash grid."""

    interface: InterfaceMesh
    s: float
    mode: str
    grid: SpatialHashGrid
    cut: InterfaceMesh | None = None

    @property
    def dimension(self) -> int:
        return self.interface.dimension

    @property
    def lifted_count(self) -> int:
        return 2 if self.mode == "combined" else 1


def lifting_map(interface: InterfaceMesh, s: float | None = None,
                mode: str = "gradient", cut: InterfaceMesh | None = None
                ) -> LiftingMap:
    if mode not in MODES:
        raise ValueError(f"unknown lift mode '{mode}'")
    if s is None:
        s = DEFAULT_S[interface.dimension]
    if s <= 0:
        raise ValueError("clamp threshold s must be positive")
    if mode == "combined":
        if cut is None:
            raise ValueError("combined mode needs a cut polyline")
        if interface.dimension != 2 or cut.dimension != 2:
            raise ValueError("combined mode is 2D only")
    grid = build_hash(interface, s)
    return LiftingMap(interface=interface, s=float(s), mode=mode, grid=grid,
                      cut=cut)


def _clamped_distance(m: LiftingMap, X):
    """Hash-clamped query; Far rows reported as distance exactly s."""
    elem, dist, point, kind, sub0, sub1 = hash_clamped_query_many(
        m.grid, m.interface, X)
    far = elem < 0
    D = np.where(far, m.s, dist)
    return D, far, point, kind, sub0, sub1


def lift_many(m: LiftingMap, X) -> np.ndarray:
    """Batch lift (N, d + lifted_count). Callers keep combined-mode queries
    off the cut curve; on-cut winding values are unspecified here."""
    X = np.ascontiguousarray(np.atleast_2d(X), dtype=np.float64)
    n, d = X.shape
    cols = [X]
    if m.mode == "constant":
        cols.append(np.full((n, 1), m.s / 2.0))
    else:
        D, far, *_ = _clamped_distance(m, X)
        value, _, _ = smooth_clamp(D, m.s)
        cols.append(value[:, None])
    if m.mode == "combined":
        cols.append(winding_many(m.cut, X)[:, None])
    return np.concatenate(cols, axis=1)


def lift(m: LiftingMap, x) -> np.ndarray:
    """Single-point lift; raises if combined mode hits the cut curve."""
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    if not np.all(np.isfinite(x)):
        raise ValueError("non-finite point")
    out = lift_many(m, x[None, :])[0]
    if m.mode == "combined":
        out[-1] = winding_number(m.cut, x)  # re-check with on-curve error
    return out


def lift_jet_many(m: LiftingMap, X):
    """Batch lift with derivatives: (L (N,m), J (N,m,d), H (N,m,d,d)),
    m = d + lifted_count.

    The x block of J is the identity with zero Hessians. The H_d row is
    clamp'(D) grad D with Hessian clamp'(D) hess D + clamp''(D) grad D
    grad D^T; beyond the plateau it is exactly zero. Raises when a query
    sits exactly on the interface (gradient undefined there).
    """
    X = np.ascontiguousarray(np.atleast_2d(X), dtype=np.float64)
    n, d = X.shape
    nm = d + m.lifted_count
    L = np.empty((n, nm))
    J = np.zeros((n, nm, d))
    Hs = np.zeros((n, nm, d, d))
    L[:, :d] = X
    J[:, :d, :] = np.eye(d)[None]

    if m.mode == "constant":
        L[:, d] = m.s / 2.0
    else:
        D, far, point, kind, sub0, sub1 = _clamped_distance(m, X)
        near = ~far
        if np.any(D[near] == 0.0):
            raise ValueError("on-interface lift derivatives undefined")
        value, c1, c2 = smooth_clamp(D, m.s)
        L[:, d] = value
        r = np.zeros((n, d))
        r[near] = (X[near] - point[near]) / D[near, None]
        J[:, d, :] = c1[:, None] * r
        hd = np.zeros((n, d, d))
        rrT = r[:, :, None] * r[:, None, :]
        vert = near & (kind == KIND_VERTEX)
        if np.any(vert):
            hd[vert] = (np.eye(d)[None] - rrT[vert]) / D[vert, None, None]
        if d == 3:
            edge = near & (kind == KIND_EDGE)
            if np.any(edge):
                t = (m.interface.vertices[sub1[edge]]
                     - m.interface.vertices[sub0[edge]])
                t /= np.linalg.norm(t, axis=1, keepdims=True)
                ttT = t[:, :, None] * t[:, None, :]
                hd[edge] = (np.eye(d)[None] - ttT - rrT[edge]) \
                    / D[edge, None, None]
        Hs[:, d] = c1[:, None, None] * hd + c2[:, None, None] * rrT

    if m.mode == "combined":
        L[:, d + 1] = winding_many(m.cut, X)
        gw, hw = winding_derivatives_many(m.cut, X)
        J[:, d + 1, :] = gw
        Hs[:, d + 1] = hw
    return L, J, Hs


def lift_derivatives(m: LiftingMap, x):
    """Single-point (J, Hs) per the batch contract."""
    x = np.asarray(x, dtype=np.float64).reshape(1, -1)
    _, J, Hs = lift_jet_many(m, x)
    return J[0], Hs[0]


def combined_lift(crease: InterfaceMesh, cut: InterfaceMesh, s: float, x):
    """One-off (x, H_d, H_gwn) evaluation without building a map."""
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    f = closest_point(crease, x)
    value, _, _ = smooth_clamp(min(f.distance, s), s)
    return np.concatenate([x, [value, winding_number(cut, x)]])


# ---------------------------------------------------------------------------
# built-in interface families
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class InterfaceFamily:
    """alpha-parameterized interface generator with a region-side test."""

    kind: str
    alpha_range: tuple

    def check(self, alpha: float):
        lo, hi = self.alpha_range
        if not (lo <= alpha <= hi):
            raise ValueError(
                f"alpha {alpha} outside range [{lo}, {hi}] of '{self.kind}'")

    def mesh(self, alpha: float) -> InterfaceMesh:
        self.check(alpha)
        return _FAMILY_MESH[self.kind](alpha)

    def side(self, X, alpha: float) -> np.ndarray:
        """Region classifier: +1 / -1 per point (0 exactly on the interface).
        Used for piecewise material weights."""
        self.check(alpha)
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        return _FAMILY_SIDE[self.kind](X, alpha)


def _vline_mesh(alpha):
    p = 0.25 + 0.5 * alpha
    return InterfaceMesh(np.array([[p, 0.0], [p, 1.0]]), np.array([[0, 1]]))


def _vline_side(X, alpha):
    return np.sign(X[:, 0] - (0.25 + 0.5 * alpha))


def _rot_mesh(alpha):
    c = np.array([0.5, 0.5])
    u = np.array([np.cos(np.pi * alpha), np.sin(np.pi * alpha)])
    return InterfaceMesh(np.array([c - 0.75 * u, c + 0.75 * u]),
                         np.array([[0, 1]]))


def _rot_side(X, alpha):
    u = np.array([np.cos(np.pi * alpha), np.sin(np.pi * alpha)])
    rel = X - np.array([0.5, 0.5])
    return np.sign(u[0] * rel[:, 1] - u[1] * rel[:, 0])


def _point_mesh(alpha):
    p = 0.25 + 0.5 * alpha
    return InterfaceMesh(np.array([[p]]), np.array([[0]]))


def _point_side(X, alpha):
    return np.sign(X[:, 0] - (0.25 + 0.5 * alpha))


def two_block_gap(alpha: float) -> float:
    """Half-width of the soft gap between the two stiff blocks."""
    return 0.04 + 0.08 * alpha


def _two_block_mesh(alpha):
    g = two_block_gap(alpha)
    v = np.array([[0.5 - g, -0.5], [0.5 - g, 0.75],
                  [0.5 + g, -0.5], [0.5 + g, 0.75]])
    return InterfaceMesh(v, np.array([[0, 1], [2, 3]]))


def _two_block_side(X, alpha):
    # +1 inside the soft gap, -1 in the stiff blocks
    g = two_block_gap(alpha)
    inside = np.abs(X[:, 0] - 0.5) < g
    out = np.where(inside, 1.0, -1.0)
    out[np.abs(np.abs(X[:, 0] - 0.5) - g) == 0.0] = 0.0
    return out


_FAMILY_MESH = {
    "vline_square": _vline_mesh,
    "rotating_crease": _rot_mesh,
    "point_1d": _point_mesh,
    "two_block_bar": _two_block_mesh,
}
_FAMILY_SIDE = {
    "vline_square": _vline_side,
    "rotating_crease": _rot_side,
    "point_1d": _point_side,
    "two_block_bar": _two_block_side,
}
FAMILY_KINDS = tuple(_FAMILY_MESH)


def family(kind: str, alpha_range=(0.0, 1.0)) -> InterfaceFamily:
    if kind not in _FAMILY_MESH:
        raise ValueError(f"unknown interface family '{kind}'")
    lo, hi = float(alpha_range[0]), float(alpha_range[1])
    if not lo <= hi:
        raise ValueError("empty alpha range")
    return InterfaceFamily(kind=kind, alpha_range=(lo, hi))


def interface_family(kind: str, alpha: float) -> InterfaceMesh:
    """Built-in family meshes at a given alpha."""
    return family(kind).mesh(alpha)


def _segment_fit_score(mesh: InterfaceMesh, p0, p1) -> float:
    """Mismatch between a family mesh and a proposed segment (or point)."""
    v = mesh.vertices
    if v.shape[0] == 1:
        return float(np.linalg.norm(v[0] - p0))
    if v.shape[0] == 2:
        straight = np.linalg.norm(v[0] - p0) + np.linalg.norm(v[1] - p1)
        flipped = np.linalg.norm(v[0] - p1) + np.linalg.norm(v[1] - p0)
        return float(min(straight, flipped))
    # symmetric vertex chamfer for multi-segment families
    ends = np.stack([p0, p1])
    d_ve = np.linalg.norm(v[:, None, :] - ends[None, :, :], axis=2)
    return float(d_ve.min(axis=1).mean() + d_ve.min(axis=0).mean())


def fit_alpha(fam: InterfaceFamily, p0, p1, grid: int = 257,
              refine: int = 48, tol: float = 0.02):
    """Best family parameter for a dragged segment, plus an out-of-family
    flag when the residual mismatch exceeds tol (absolute distance units).

    Grid scan over the alpha range followed by ternary refinement; assumes
    the mismatch is locally unimodal around the grid minimum.
    """
    p0 = np.asarray(p0, dtype=np.float64)
    p1 = np.asarray(p1, dtype=np.float64)
    lo, hi = fam.alpha_range
    if hi == lo:
        return lo, _segment_fit_score(fam.mesh(lo), p0, p1) > tol
    alphas = np.linspace(lo, hi, grid)
    scores = [_segment_fit_score(fam.mesh(a), p0, p1) for a in alphas]
    i = int(np.argmin(scores))
    a_lo = alphas[max(i - 1, 0)]
    a_hi = alphas[min(i + 1, grid - 1)]
    for _ in range(refine):
        m1 = a_lo + (a_hi - a_lo) / 3.0
        m2 = a_hi - (a_hi - a_lo) / 3.0
        if _segment_fit_score(fam.mesh(m1), p0, p1) <= \
                _segment_fit_score(fam.mesh(m2), p0, p1):
            a_hi = m2
        else:
            a_lo = m1
    best = 0.5 * (a_lo + a_hi)
    score = _segment_fit_score(fam.mesh(best), p0, p1)
    return float(best), bool(score > tol)
