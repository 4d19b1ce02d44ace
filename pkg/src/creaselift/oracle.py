"""Independent references: FEM eigenmodes, FD derivative checks, jump
detectors.

Everything here is deliberately simple and slow: dense matrices, an in-repo
cyclic Jacobi eigensolver, and plain central differences. These are the
ground truths the trained fields are measured against.
"""

import hashlib
import json
import os

import numpy as np

from . import kernels


# ---------------------------------------------------------------------------
# finite-difference checks
# ---------------------------------------------------------------------------

def fd_check(fn, x, order=1, eps=1e-5, analytic=None):
    """Max relative error between central differences of fn and an analytic
    derivative.

    fn maps a d-vector to an array of any shape; analytic(x) returns the
    derivative with trailing axis (order 1) or two trailing axes (order 2).
    The denominator is the global magnitude of the larger of the two, so
    zero components do not blow up the ratio.
    """
    if order not in (1, 2):
        raise ValueError("order must be 1 or 2")
    if analytic is None:
        raise ValueError("analytic derivative callable required")
    x = np.asarray(x, dtype=np.float64)
    d = x.shape[0]
    ref = np.asarray(analytic(x), dtype=np.float64)
    base = np.asarray(fn(x), dtype=np.float64)
    if order == 1:
        fd = np.empty(base.shape + (d,))
        for a in range(d):
            e = np.zeros(d)
            e[a] = eps
            fd[..., a] = (np.asarray(fn(x + e)) - np.asarray(fn(x - e))) \
                / (2.0 * eps)
    else:
        fd = np.empty(base.shape + (d, d))
        for a in range(d):
            ea = np.zeros(d)
            ea[a] = eps
            fd[..., a, a] = (np.asarray(fn(x + ea)) - 2.0 * base
                             + np.asarray(fn(x - ea))) / eps ** 2
            for b in range(a + 1, d):
                eb = np.zeros(d)
                eb[b] = eps
                mixed = (np.asarray(fn(x + ea + eb))
                         - np.asarray(fn(x + ea - eb))
                         - np.asarray(fn(x - ea + eb))
                         + np.asarray(fn(x - ea - eb))) / (4.0 * eps ** 2)
                fd[..., a, b] = mixed
                fd[..., b, a] = mixed
    scale = max(np.abs(ref).max(initial=0.0), np.abs(fd).max(initial=0.0),
                1e-10)
    return float(np.abs(fd - ref).max() / scale)


# ---------------------------------------------------------------------------
# dense symmetric / generalized eigensolve
# ---------------------------------------------------------------------------

def jacobi_eigh(A, tol=1e-12, max_sweeps=60):
    """In-repo cyclic Jacobi eigensolver (ascending pairs)."""
    A = np.ascontiguousarray(A, dtype=np.float64)
    return kernels.jacobi_eigh(A, tol, max_sweeps)


def generalized_modes(K, M_diag, k):
    """Smallest-k eigenpairs of K u = lambda M u with diagonal (lumped) M.

    Returns ascending eigenvalues and M-orthonormal columns.
    """
    if np.any(M_diag <= 0):
        raise ValueError("lumped mass must be positive")
    inv_sqrt = 1.0 / np.sqrt(M_diag)
    A = inv_sqrt[:, None] * K * inv_sqrt[None, :]
    A = 0.5 * (A + A.T)
    lam, Y = jacobi_eigh(A)
    U = inv_sqrt[:, None] * Y[:, :k]
    return lam[:k], U


# ---------------------------------------------------------------------------
# FEM references
# ---------------------------------------------------------------------------

def _cache_path(cache_dir, payload: dict):
    key = hashlib.sha256(
        json.dumps(payload, sort_keys=True).encode()).hexdigest()[:24]
    return os.path.join(cache_dir, f"fem_{key}.csv")


def _cache_load(path):
    if not os.path.exists(path):
        return None
    rows = np.loadtxt(path, delimiter=",", ndmin=2)
    return rows[:, 0].copy(), rows[:, 1:].T.copy()


def _cache_store(path, lam, U):
    os.makedirs(os.path.dirname(path), exist_ok=True)
    rows = np.concatenate([lam[:, None], U.T], axis=1)
    np.savetxt(path, rows, delimiter=",")


def fem_modes_1d(n_elements, w_elements, k, cache_dir=None):
    """Free-boundary weighted-Laplace modes on [0,1] with linear elements.

    w_elements: per-element weights (len n_elements) or callable of element
    midpoints. Returns (eigenvalues (k,), nodal vectors (n+1, k)),
    mass-orthonormal, ascending.
    """
    if n_elements < 16:
        raise ValueError("element count >= 16 required")
    h = 1.0 / n_elements
    mids = (np.arange(n_elements) + 0.5) * h
    w = np.asarray(w_elements(mids) if callable(w_elements) else w_elements,
                   dtype=np.float64)
    if w.shape != (n_elements,) or np.any(w <= 0):
        raise ValueError("need one positive weight per element")
    if k >= n_elements + 1:
        raise ValueError("k must be below the node count")
    if cache_dir is not None:
        path = _cache_path(cache_dir, {"kind": "1d", "n": n_elements, "k": k,
                                       "w": w.tolist()})
        hit = _cache_load(path)
        if hit is not None:
            return hit
    n = n_elements + 1
    K = np.zeros((n, n))
    c = w / h
    idx = np.arange(n_elements)
    np.add.at(K, (idx, idx), c)
    np.add.at(K, (idx + 1, idx + 1), c)
    np.add.at(K, (idx, idx + 1), -c)
    np.add.at(K, (idx + 1, idx), -c)
    M = np.full(n, h)
    M[0] = M[-1] = h / 2.0
    lam, U = generalized_modes(K, M, k)
    if cache_dir is not None:
        _cache_store(path, lam, U)
    return lam, U


def rect_triangulation(nx, ny, lx=1.0, ly=1.0):
    """Structured triangulated rectangle: vertices ((nx+1)(ny+1), 2) and
    triangles (2 nx ny, 3)."""
    xs = np.linspace(0.0, lx, nx + 1)
    ys = np.linspace(0.0, ly, ny + 1)
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    verts = np.stack([gx.ravel(), gy.ravel()], axis=1)

    def vid(i, j):
        return i * (ny + 1) + j

    tris = []
    for i in range(nx):
        for j in range(ny):
            a, b = vid(i, j), vid(i + 1, j)
            c, d = vid(i + 1, j + 1), vid(i, j + 1)
            tris.append([a, b, c])
            tris.append([a, c, d])
    return verts, np.asarray(tris, dtype=np.int64)


def fem_modes_2d(nx, ny, w_fn, k, lx=1.0, ly=1.0, cache_dir=None):
    """Free-boundary weighted-Laplace modes on a triangulated rectangle.

    Linear-element stiffness (equal to the cotangent formula) scaled by the
    per-triangle weight w_fn(centroid); lumped mass. Desk scale only: the
    dense eigensolve limits this to roughly 2k vertices.
    """
    verts, tris = rect_triangulation(nx, ny, lx, ly)
    n = verts.shape[0]
    if n > 2200:
        raise ValueError("grid too large for the dense eigensolver")
    cent = verts[tris].mean(axis=1)
    w = np.asarray(w_fn(cent), dtype=np.float64)
    if np.any(w <= 0):
        raise ValueError("non-positive triangle weight")
    if cache_dir is not None:
        path = _cache_path(cache_dir, {"kind": "2d", "nx": nx, "ny": ny,
                                       "lx": lx, "ly": ly, "k": k,
                                       "w": np.round(w, 12).tolist()})
        hit = _cache_load(path)
        if hit is not None:
            return hit
    K = np.zeros((n, n))
    M = np.zeros(n)
    for t in range(tris.shape[0]):
        i0, i1, i2 = tris[t]
        p = verts[tris[t]]
        e1 = p[1] - p[0]
        e2 = p[2] - p[0]
        area2 = e1[0] * e2[1] - e1[1] * e2[0]
        area = 0.5 * abs(area2)
        # hat-function gradients: rotate opposite edges by 90 degrees
        g = np.empty((3, 2))
        for a, (u, v) in enumerate(((1, 2), (2, 0), (0, 1))):
            opp = p[v] - p[u]
            g[a] = np.array([-opp[1], opp[0]]) / area2
        K[np.ix_(tris[t], tris[t])] += w[t] * area * (g @ g.T)
        M[tris[t]] += area / 3.0
    lam, U = generalized_modes(K, M, k)
    if cache_dir is not None:
        _cache_store(path, lam, U)
    return lam, U


# ---------------------------------------------------------------------------
# interface jump detectors
# ---------------------------------------------------------------------------

def _one_sided(field_eval, point, normal, offset):
    p = np.asarray(point, dtype=np.float64)
    nrm = np.asarray(normal, dtype=np.float64)
    nrm = nrm / np.linalg.norm(nrm)
    probes = np.stack([p - offset * nrm, p, p + offset * nrm])
    f = np.asarray(field_eval(probes), dtype=np.float64).reshape(3)
    g_minus = (f[1] - f[0]) / offset
    g_plus = (f[2] - f[1]) / offset
    return g_minus, g_plus


def jump_residual(field_eval, point, normal, w1, w2, offset=1e-3,
                  eps=1e-12, side_fn=None):
    """Weighted-flux mismatch |w1 g- - w2 g+| / max(|w1 g-|, |w2 g+|, eps).

    g-/g+ are one-sided FD normal derivatives at -/+ offset; w1 belongs to
    the -normal side. field_eval maps (n, d) points to (n,) values. side_fn
    (optional) labels regions; probes landing in the same region raise.
    """
    if side_fn is not None:
        p = np.asarray(point, dtype=np.float64)
        nrm = np.asarray(normal, dtype=np.float64)
        nrm = nrm / np.linalg.norm(nrm)
        sides = side_fn(np.stack([p - offset * nrm, p + offset * nrm]))
        if sides[0] == sides[1]:
            raise ValueError("probes do not straddle the interface")
    g_minus, g_plus = _one_sided(field_eval, point, normal, offset)
    num = abs(w1 * g_minus - w2 * g_plus)
    return num / max(abs(w1 * g_minus), abs(w2 * g_plus), eps)


def gradient_jump(field_eval, point, normal, offset=1e-3):
    """|g+ - g-| of one-sided FD normal derivatives across the point."""
    g_minus, g_plus = _one_sided(field_eval, point, normal, offset)
    return abs(g_plus - g_minus)


def value_jump(field_eval, point, normal, offset=1e-3):
    """|f(p + offset n) - f(p - offset n)| across the point."""
    p = np.asarray(point, dtype=np.float64)
    nrm = np.asarray(normal, dtype=np.float64)
    nrm = nrm / np.linalg.norm(nrm)
    f = np.asarray(field_eval(np.stack([p - offset * nrm, p + offset * nrm])))
    return abs(float(f[1]) - float(f[0]))
