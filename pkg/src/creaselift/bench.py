"""Agreement and timing benchmarks.

Two comparisons, both doubling as correctness gates:

- hash-accelerated clamped closest-point queries against the brute-force
  scan (every within-s result must match to 1e-12, and the hash must be
  strictly faster at the 10k x 10k scale);
- the numba kernel set against its pure-numpy twins (identical results,
  per-kernel timing table).
"""

import time
from dataclasses import dataclass

import numpy as np

from . import kernels
from .geometry import (InterfaceMesh, build_hash, closest_point_many,
                       hash_clamped_query_many)


def random_segment_soup(n_segments: int, seed: int = 0,
                        max_len: float = 0.01) -> InterfaceMesh:
    """n short random segments strewn over the unit square."""
    rng = np.random.default_rng(seed)
    centers = rng.uniform(0.0, 1.0, size=(n_segments, 2))
    angles = rng.uniform(0.0, np.pi, size=n_segments)
    half = 0.5 * rng.uniform(0.2 * max_len, max_len, size=n_segments)
    u = np.stack([np.cos(angles), np.sin(angles)], axis=1) * half[:, None]
    vertices = np.empty((2 * n_segments, 2))
    vertices[0::2] = centers - u
    vertices[1::2] = centers + u
    idx = np.arange(n_segments, dtype=np.int64)
    elements = np.stack([2 * idx, 2 * idx + 1], axis=1)
    return InterfaceMesh(vertices, elements)


def _best_time(fn, repeats: int) -> float:
    best = np.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


# ---------------------------------------------------------------------------
# hash vs brute force
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class HashBenchReport:
    n_segments: int
    n_queries: int
    s: float
    n_within: int         # queries with true distance < s
    max_diff: float       # worst |hash - brute| distance over those
    far_consistent: bool  # hash Far exactly where true distance >= s
    t_hash: float         # seconds, best of repeats (includes grid reuse)
    t_brute: float
    t_build: float        # one-time grid construction

    @property
    def agree(self) -> bool:
        return self.max_diff <= 1e-12 and self.far_consistent

    @property
    def speedup(self) -> float:
        return self.t_brute / self.t_hash

    def lines(self) -> list:
        rows = [
            f"segments {self.n_segments}  queries {self.n_queries}  "
            f"s {self.s:g}  within-s {self.n_within}",
            f"brute force  {self.t_brute * 1e3:9.2f} ms",
            f"hash query   {self.t_hash * 1e3:9.2f} ms  "
            f"(build {self.t_build * 1e3:.2f} ms, {self.speedup:.2f}x)",
            f"max within-s distance diff {self.max_diff:.3e}",
            f"equality check: "
            f"{'PASS' if self.agree else 'FAIL'} "
            f"(within-s diff <= 1e-12, far set identical)",
        ]
        return rows


def hash_vs_brute(n_segments: int = 10000, n_queries: int = 10000,
                  s: float = 0.02, seed: int = 0,
                  repeats: int = 3) -> HashBenchReport:
    """Agreement + timing of the hash-clamped query against brute force."""
    mesh = random_segment_soup(n_segments, seed=seed)
    rng = np.random.default_rng(seed + 1)
    queries = rng.uniform(0.0, 1.0, size=(n_queries, 2))

    t_build0 = time.perf_counter()
    grid = build_hash(mesh, s)
    t_build = time.perf_counter() - t_build0

    eh, dh, *_ = hash_clamped_query_many(grid, mesh, queries)
    eb, db, *_ = closest_point_many(mesh, queries)

    within = db < s
    far_consistent = bool(np.array_equal(eh < 0, ~within))
    if within.any():
        max_diff = float(np.abs(dh[within] - db[within]).max())
    else:
        max_diff = 0.0

    t_hash = _best_time(
        lambda: hash_clamped_query_many(grid, mesh, queries), repeats)
    t_brute = _best_time(
        lambda: closest_point_many(mesh, queries), repeats)
    return HashBenchReport(n_segments=n_segments, n_queries=n_queries, s=s,
                           n_within=int(within.sum()), max_diff=max_diff,
                           far_consistent=far_consistent, t_hash=t_hash,
                           t_brute=t_brute, t_build=t_build)


# ---------------------------------------------------------------------------
# numba vs numpy kernels
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class KernelBenchRow:
    name: str
    size: str
    t_numpy: float
    t_numba: float
    match: bool

    @property
    def speedup(self) -> float:
        return self.t_numpy / self.t_numba


def _allclose_tree(a, b) -> bool:
    # atol scales with the largest magnitude present: the twins may sum
    # per-element terms in different orders, so near-cancelling totals carry
    # rounding noise proportional to the largest term, not to the total
    if isinstance(a, tuple):
        return all(_allclose_tree(x, y) for x, y in zip(a, b))
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        return False
    finite = np.isfinite(a)
    scale = np.abs(a[finite]).max(initial=1.0)
    both_nan = np.isnan(a) & np.isnan(b)
    close = np.isclose(a, b, rtol=1e-11, atol=1e-11 * scale)
    return bool(np.all(close | both_nan))


def kernel_bench(n_points: int = 4000, n_segments: int = 2000,
                 n_cubature: int = 2048, k: int = 6, seed: int = 0,
                 repeats: int = 3) -> list:
    """Per-kernel numpy-vs-numba timing rows; results must match."""
    np_mod = kernels.numpy_kernels
    nb_mod = kernels.numba_kernels()
    rng = np.random.default_rng(seed)

    mesh = random_segment_soup(n_segments, seed=seed)
    X = rng.uniform(0.0, 1.0, size=(n_points, 2))
    s = 0.02
    keys, elems = np_mod.hash_cell_pairs(mesh.vertices, mesh.elements, s)
    order = np.argsort(keys, kind="stable")
    ukeys, starts = np.unique(keys[order], return_index=True)
    offsets = np.append(starts, keys.size).astype(np.int64)
    bucket = np.ascontiguousarray(elems[order])

    A = rng.standard_normal((60, 60))
    A = 0.5 * (A + A.T)

    d = 2
    phi = rng.standard_normal((n_cubature, k))
    grads = rng.standard_normal((n_cubature, k, d))
    xhat = np.concatenate([rng.uniform(0, 1, (n_cubature, d)),
                           np.ones((n_cubature, 1))], axis=1)
    w = np.ones(n_cubature)
    vol = np.full(n_cubature, 1.0 / n_cubature)
    z = 0.01 * rng.standard_normal((k, d, d + 1))

    cases = [
        ("closest_point_batch", f"{n_points}x{n_segments}",
         (mesh.vertices, mesh.elements, X)),
        ("hash_query_batch", f"{n_points}x{n_segments}",
         (mesh.vertices, mesh.elements, ukeys, offsets, bucket, s, X)),
        ("winding_batch", f"{n_points}x{n_segments}",
         (mesh.vertices, mesh.elements, X)),
        ("winding_derivative_batch", f"{n_points}x{n_segments}",
         (mesh.vertices, mesh.elements, X)),
        ("jacobi_eigh", "60x60", (A, 1e-12, 60)),
        ("reduced_elastic", f"{n_cubature}pts k={k}",
         (phi, grads, xhat, w, vol, z, 1.0, 1.0)),
    ]
    rows = []
    for name, size, args in cases:
        f_np = getattr(np_mod, name)
        f_nb = getattr(nb_mod, name)
        out_nb = f_nb(*args)   # first call pays the jit compile
        out_np = f_np(*args)
        rows.append(KernelBenchRow(
            name=name, size=size,
            t_numpy=_best_time(lambda f=f_np, a=args: f(*a), repeats),
            t_numba=_best_time(lambda f=f_nb, a=args: f(*a), repeats),
            match=_allclose_tree(out_np, out_nb)))
    return rows


def kernel_table(rows) -> list:
    lines = [f"{'kernel':26s} {'size':14s} {'numpy':>10s} {'numba':>10s} "
             f"{'speedup':>8s}  match"]
    for r in rows:
        lines.append(
            f"{r.name:26s} {r.size:14s} {r.t_numpy * 1e3:9.2f}ms "
            f"{r.t_numba * 1e3:9.2f}ms {r.speedup:7.2f}x  "
            f"{'yes' if r.match else 'NO'}")
    return lines
