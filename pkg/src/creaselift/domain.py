"""Domain occupancy: axis-aligned boxes and simple polygons."""

import numpy as np
from dataclasses import dataclass


@dataclass(frozen=True)
class BoxDomain:
    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.lo, dtype=np.float64).reshape(-1)
        hi = np.asarray(self.hi, dtype=np.float64).reshape(-1)
        if lo.shape != hi.shape or np.any(hi <= lo):
            raise ValueError("box needs lo < hi per axis")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @property
    def dimension(self) -> int:
        return self.lo.shape[0]

    def bbox(self):
        return self.lo, self.hi

    def contains(self, X) -> np.ndarray:
        X = np.atleast_2d(X)
        return np.all((X >= self.lo) & (X <= self.hi), axis=1)

    @property
    def measure(self) -> float:
        return float(np.prod(self.hi - self.lo))


@dataclass(frozen=True)
class PolygonDomain:
    """Simple (non-self-intersecting) 2D polygon, even-odd containment."""

    vertices: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=np.float64)
        if v.ndim != 2 or v.shape[1] != 2 or v.shape[0] < 3:
            raise ValueError("polygon needs at least 3 2D vertices")
        object.__setattr__(self, "vertices", v)

    @property
    def dimension(self) -> int:
        return 2

    def bbox(self):
        return self.vertices.min(0), self.vertices.max(0)

    def contains(self, X) -> np.ndarray:
        X = np.atleast_2d(X)
        v0 = self.vertices
        v1 = np.roll(v0, -1, axis=0)
        y = X[:, 1][None, :]
        x = X[:, 0][None, :]
        y0 = v0[:, 1][:, None]
        y1 = v1[:, 1][:, None]
        x0 = v0[:, 0][:, None]
        x1 = v1[:, 0][:, None]
        straddle = (y0 <= y) != (y1 <= y)
        with np.errstate(divide="ignore", invalid="ignore"):
            xc = x0 + (y - y0) * (x1 - x0) / (y1 - y0)
        hit = straddle & (x < xc)
        return hit.sum(axis=0) % 2 == 1

    @property
    def measure(self) -> float:
        v0 = self.vertices
        v1 = np.roll(v0, -1, axis=0)
        return float(abs((v0[:, 0] * v1[:, 1] - v1[:, 0] * v0[:, 1]).sum())
                     / 2.0)
