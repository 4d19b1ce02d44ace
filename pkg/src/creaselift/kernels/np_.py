"""Pure-numpy kernel implementations (fallback path).

Semantics are shared with :mod:`creaselift.kernels.nb`; keep the two in sync.
All closest-point variants break distance ties by lowest element index.
"""

import numpy as np

from .common import (DET_BARRIER, DET_EPS, KEY_MASK, KIND_EDGE, KIND_FACE,
                     KIND_VERTEX, pack_keys)

_CHUNK_BUDGET = 4_000_000  # query x element pairs per vectorized block


# ---------------------------------------------------------------------------
# closest point
# ---------------------------------------------------------------------------

def _closest_subset(vertices, elements, elem_ids, X):
    """Best feature per query over an element subset.

    X is (c, d); elem_ids indexes rows of elements. Returns
    (elem, dist2, point, kind, sub0, sub1) arrays of length c.
    """
    arity = elements.shape[1]
    sub = elements[elem_ids]  # (m, arity)
    if arity == 1:
        p = vertices[sub[:, 0]]                   # (m, d)
        diff = X[:, None, :] - p[None, :, :]      # (c, m, d)
        d2 = (diff * diff).sum(-1)
        j = np.argmin(d2, axis=1)
        rows = np.arange(X.shape[0])
        kind = np.full(X.shape[0], KIND_VERTEX, dtype=np.int64)
        sub1 = np.full(X.shape[0], -1, dtype=np.int64)
        return elem_ids[j], d2[rows, j], p[j], kind, sub[j, 0], sub1
    if arity == 2:
        return _closest_segments(vertices, sub, elem_ids, X)
    return _closest_triangles(vertices, sub, elem_ids, X)


def _closest_segments(vertices, sub, elem_ids, X):
    a = vertices[sub[:, 0]]
    b = vertices[sub[:, 1]]
    ab = b - a
    denom = (ab * ab).sum(-1)                      # (m,)
    denom = np.where(denom == 0.0, 1.0, denom)
    ax = X[:, None, :] - a[None, :, :]             # (c, m, d)
    t = (ax * ab).sum(-1) / denom
    t = np.clip(t, 0.0, 1.0)
    p = a[None] + t[..., None] * ab[None]
    diff = X[:, None, :] - p
    d2 = (diff * diff).sum(-1)
    rows = np.arange(X.shape[0])
    j = np.argmin(d2, axis=1)
    tb = t[rows, j]
    best_p = p[rows, j]
    kind = np.where((tb == 0.0) | (tb == 1.0), KIND_VERTEX, KIND_EDGE)
    v_first = sub[j, 0]
    v_second = sub[j, 1]
    sub0 = np.where(tb == 1.0, v_second, v_first)
    sub1 = np.where(kind == KIND_EDGE, v_second, -1)
    return elem_ids[j], d2[rows, j], best_p, kind.astype(np.int64), \
        sub0.astype(np.int64), sub1.astype(np.int64)


def _closest_triangles(vertices, sub, elem_ids, X):
    # Ericson-style region classification, vectorized. Region conditions are
    # applied in reverse priority so the final assignment matches the scalar
    # if/elif chain in the numba twin.
    a = vertices[sub[:, 0]][None]   # (1, m, 3)
    b = vertices[sub[:, 1]][None]
    c3 = vertices[sub[:, 2]][None]
    P = X[:, None, :]               # (c, 1, 3)
    ab = b - a
    ac = c3 - a
    ap = P - a
    d1 = (ab * ap).sum(-1)
    d2_ = (ac * ap).sum(-1)
    bp = P - b
    d3 = (ab * bp).sum(-1)
    d4 = (ac * bp).sum(-1)
    cp = P - c3
    d5 = (ab * cp).sum(-1)
    d6 = (ac * cp).sum(-1)
    vc = d1 * d4 - d3 * d2_
    vb = d5 * d2_ - d1 * d6
    va = d3 * d6 - d4 * d5

    cond_a = (d1 <= 0.0) & (d2_ <= 0.0)
    cond_b = (d3 >= 0.0) & (d4 <= d3)
    cond_ab = (vc <= 0.0) & (d1 >= 0.0) & (d3 <= 0.0)
    cond_c = (d6 >= 0.0) & (d5 <= d6)
    cond_ac = (vb <= 0.0) & (d2_ >= 0.0) & (d6 <= 0.0)
    cond_bc = (va <= 0.0) & (d4 - d3 >= 0.0) & (d5 - d6 >= 0.0)

    with np.errstate(divide="ignore", invalid="ignore"):
        v_ab = np.where(cond_ab, d1 / np.where(d1 - d3 == 0, 1.0, d1 - d3), 0.0)
        w_ac = np.where(cond_ac, d2_ / np.where(d2_ - d6 == 0, 1.0, d2_ - d6), 0.0)
        den_bc = (d4 - d3) + (d5 - d6)
        w_bc = np.where(cond_bc, (d4 - d3) / np.where(den_bc == 0, 1.0, den_bc), 0.0)
        den_f = va + vb + vc
        den_f = np.where(den_f == 0, 1.0, den_f)
        v_f = vb / den_f
        w_f = vc / den_f

    cshape = d1.shape  # (c, m)
    p = a + ab * v_f[..., None] + ac * w_f[..., None]
    kind = np.full(cshape, KIND_FACE, dtype=np.int64)
    s0 = np.full(cshape, -1, dtype=np.int64)
    s1 = np.full(cshape, -1, dtype=np.int64)

    e0 = np.broadcast_to(sub[:, 0], cshape)
    e1 = np.broadcast_to(sub[:, 1], cshape)
    e2 = np.broadcast_to(sub[:, 2], cshape)
    minus1 = np.full(cshape, -1, dtype=np.int64)

    def assign(mask, point, k, i, j):
        p[mask] = np.broadcast_to(point, p.shape)[mask]
        kind[mask] = k
        s0[mask] = i[mask]
        s1[mask] = j[mask]

    # last write wins, so apply in reverse of the scalar if/elif priority
    assign(cond_bc, b + w_bc[..., None] * (c3 - b), KIND_EDGE, e1, e2)
    assign(cond_ac, a + w_ac[..., None] * ac, KIND_EDGE, e0, e2)
    assign(cond_c, c3, KIND_VERTEX, e2, minus1)
    assign(cond_ab, a + v_ab[..., None] * ab, KIND_EDGE, e0, e1)
    assign(cond_b, b, KIND_VERTEX, e1, minus1)
    assign(cond_a, a, KIND_VERTEX, e0, minus1)

    diff = P - p
    d2 = (diff * diff).sum(-1)
    rows = np.arange(X.shape[0])
    jbest = np.argmin(d2, axis=1)
    return (elem_ids[jbest], d2[rows, jbest], p[rows, jbest],
            kind[rows, jbest], s0[rows, jbest], s1[rows, jbest])


def closest_point_batch(vertices, elements, queries):
    """Brute-force closest features for a batch of queries.

    Returns (elem, dist, point, kind, sub0, sub1).
    """
    n = queries.shape[0]
    m = elements.shape[0]
    d = vertices.shape[1]
    elem = np.empty(n, dtype=np.int64)
    dist = np.empty(n, dtype=np.float64)
    point = np.empty((n, d), dtype=np.float64)
    kind = np.empty(n, dtype=np.int64)
    sub0 = np.empty(n, dtype=np.int64)
    sub1 = np.empty(n, dtype=np.int64)
    ids = np.arange(m, dtype=np.int64)
    chunk = max(1, _CHUNK_BUDGET // max(m, 1))
    for lo in range(0, n, chunk):
        hi = min(n, lo + chunk)
        e, d2, p, k, s0, s1 = _closest_subset(vertices, elements, ids,
                                              queries[lo:hi])
        elem[lo:hi] = e
        dist[lo:hi] = np.sqrt(d2)
        point[lo:hi] = p
        kind[lo:hi] = k
        sub0[lo:hi] = s0
        sub1[lo:hi] = s1
    return elem, dist, point, kind, sub0, sub1


# ---------------------------------------------------------------------------
# spatial hash
# ---------------------------------------------------------------------------

def hash_cell_pairs(vertices, elements, s):
    """(cell key, element) registration pairs over s-inflated element boxes."""
    d = vertices.shape[1]
    pts = vertices[elements]                      # (E, arity, d)
    lo = pts.min(axis=1) - s
    hi = pts.max(axis=1) + s
    clo = np.floor(lo / s).astype(np.int64)
    chi = np.floor(hi / s).astype(np.int64)
    counts = np.prod(chi - clo + 1, axis=1)
    total = int(counts.sum())
    keys = np.empty(total, dtype=np.int64)
    elems = np.empty(total, dtype=np.int64)
    pos = 0
    for e in range(elements.shape[0]):
        axes = [np.arange(clo[e, a], chi[e, a] + 1) for a in range(d)]
        grid = np.meshgrid(*axes, indexing="ij")
        cells = np.stack([g.ravel() for g in grid], axis=1)
        kk = pack_keys(cells)
        keys[pos:pos + kk.size] = kk
        elems[pos:pos + kk.size] = e
        pos += kk.size
    return keys, elems


def _neighbor_keys(cell, d):
    offs = np.array([-1, 0, 1], dtype=np.int64)
    grids = np.meshgrid(*([offs] * d), indexing="ij")
    cells = cell[None, :] + np.stack([g.ravel() for g in grids], axis=1)
    return pack_keys(cells)


def hash_query_batch(vertices, elements, ukeys, offsets, bucket, s, queries):
    """Clamped queries through the hash grid.

    Queries farther than s from every element come back with elem == -1 and
    dist == inf (the Far sentinel).
    """
    n, d = queries.shape
    elem = np.full(n, -1, dtype=np.int64)
    dist = np.full(n, np.inf, dtype=np.float64)
    point = np.full((n, d), np.nan, dtype=np.float64)
    kind = np.full(n, -1, dtype=np.int64)
    sub0 = np.full(n, -1, dtype=np.int64)
    sub1 = np.full(n, -1, dtype=np.int64)
    cells = np.floor(queries / s).astype(np.int64)
    for i in range(n):
        keys = _neighbor_keys(cells[i], d)
        cands = []
        pos = np.searchsorted(ukeys, keys)
        for j, key in zip(pos, keys):
            if j < ukeys.size and ukeys[j] == key:
                cands.append(bucket[offsets[j]:offsets[j + 1]])
        if not cands:
            continue
        cand = np.unique(np.concatenate(cands))
        e, d2, p, k, s0, s1 = _closest_subset(vertices, elements, cand,
                                              queries[i:i + 1])
        dd = np.sqrt(d2[0])
        if dd < s:
            elem[i] = e[0]
            dist[i] = dd
            point[i] = p[0]
            kind[i] = k[0]
            sub0[i] = s0[0]
            sub1[i] = s1[0]
    return elem, dist, point, kind, sub0, sub1


# ---------------------------------------------------------------------------
# generalized winding number (2D)
# ---------------------------------------------------------------------------

def winding_batch(vertices, elements, queries):
    """Angle-sum winding numbers of a 2D polyline at the query points."""
    a = vertices[elements[:, 0]][None]      # (1, E, 2)
    b = vertices[elements[:, 1]][None]
    n = queries.shape[0]
    out = np.empty(n, dtype=np.float64)
    chunk = max(1, _CHUNK_BUDGET // max(elements.shape[0], 1))
    for lo in range(0, n, chunk):
        X = queries[lo:lo + chunk, None, :]
        u = a - X
        v = b - X
        cross = u[..., 0] * v[..., 1] - u[..., 1] * v[..., 0]
        dot = (u * v).sum(-1)
        out[lo:lo + chunk] = np.arctan2(cross, dot).sum(-1)
    return out / (2.0 * np.pi)


def _angle_grad(v):
    # gradient at x of the angle-to-endpoint field, v = endpoint - x
    r2 = (v * v).sum(-1)
    return np.stack([v[..., 1], -v[..., 0]], axis=-1) / r2[..., None]


def _angle_hess(v):
    r4 = ((v * v).sum(-1)) ** 2
    vx = v[..., 0]
    vy = v[..., 1]
    h = np.empty(v.shape[:-1] + (2, 2), dtype=np.float64)
    h[..., 0, 0] = 2.0 * vx * vy
    h[..., 0, 1] = vy * vy - vx * vx
    h[..., 1, 0] = h[..., 0, 1]
    h[..., 1, 1] = -2.0 * vx * vy
    return h / r4[..., None, None]


def winding_derivative_batch(vertices, elements, queries):
    """First and second spatial derivatives of the winding-number field."""
    a = vertices[elements[:, 0]][None]
    b = vertices[elements[:, 1]][None]
    n = queries.shape[0]
    grad = np.empty((n, 2), dtype=np.float64)
    hess = np.empty((n, 2, 2), dtype=np.float64)
    chunk = max(1, _CHUNK_BUDGET // max(elements.shape[0], 1))
    for lo in range(0, n, chunk):
        X = queries[lo:lo + chunk, None, :]
        u = a - X
        v = b - X
        grad[lo:lo + chunk] = (_angle_grad(v) - _angle_grad(u)).sum(1)
        hess[lo:lo + chunk] = (_angle_hess(v) - _angle_hess(u)).sum(1)
    grad /= 2.0 * np.pi
    hess /= 2.0 * np.pi
    return grad, hess


# ---------------------------------------------------------------------------
# dense symmetric eigensolve (cyclic Jacobi)
# ---------------------------------------------------------------------------

def jacobi_eigh(A, tol=1e-12, max_sweeps=60):
    """Eigen-decomposition of a dense symmetric matrix by cyclic Jacobi.

    Returns ascending eigenvalues and the matching eigenvector columns.
    Raises RuntimeError if the off-diagonal mass fails to fall below
    tol * ||A||_F within max_sweeps sweeps.
    """
    A = np.array(A, dtype=np.float64)
    n = A.shape[0]
    V = np.eye(n)
    norm = np.sqrt((A * A).sum())
    if norm == 0.0:
        return np.zeros(n), V
    for _ in range(max_sweeps):
        off = np.sqrt(2.0 * (np.triu(A, 1) ** 2).sum())
        if off <= tol * norm:
            w = np.diag(A).copy()
            order = np.argsort(w, kind="stable")
            return w[order], V[:, order]
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = A[p, q]
                if abs(apq) <= 1e-30 * norm:
                    continue
                theta = (A[q, q] - A[p, p]) / (2.0 * apq)
                t = np.sign(theta) / (abs(theta) + np.sqrt(theta * theta + 1.0)) \
                    if theta != 0.0 else 1.0
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                rp = A[p, :].copy()
                rq = A[q, :].copy()
                A[p, :] = c * rp - s * rq
                A[q, :] = s * rp + c * rq
                cp = A[:, p].copy()
                cq = A[:, q].copy()
                A[:, p] = c * cp - s * cq
                A[:, q] = s * cp + c * cq
                vp = V[:, p].copy()
                vq = V[:, q].copy()
                V[:, p] = c * vp - s * vq
                V[:, q] = s * vp + c * vq
    raise RuntimeError("jacobi eigensolve failed to converge "
                       f"(off-diagonal mass above {tol:g} * ||A||)")


# ---------------------------------------------------------------------------
# reduced elastic energy + gradient
# ---------------------------------------------------------------------------

def _batch_cof(F):
    d = F.shape[1]
    if d == 1:
        return np.ones_like(F)
    if d == 2:
        cof = np.empty_like(F)
        cof[:, 0, 0] = F[:, 1, 1]
        cof[:, 0, 1] = -F[:, 1, 0]
        cof[:, 1, 0] = -F[:, 0, 1]
        cof[:, 1, 1] = F[:, 0, 0]
        return cof
    cof = np.empty_like(F)
    for i in range(3):
        for j in range(3):
            r = [a for a in range(3) if a != i]
            c = [a for a in range(3) if a != j]
            minor = (F[:, r[0], c[0]] * F[:, r[1], c[1]]
                     - F[:, r[0], c[1]] * F[:, r[1], c[0]])
            cof[:, i, j] = ((-1.0) ** (i + j)) * minor
    return cof


def _batch_det(F):
    d = F.shape[1]
    if d == 1:
        return F[:, 0, 0]
    if d == 2:
        return F[:, 0, 0] * F[:, 1, 1] - F[:, 0, 1] * F[:, 1, 0]
    return (F[:, 0, 0] * (F[:, 1, 1] * F[:, 2, 2] - F[:, 1, 2] * F[:, 2, 1])
            - F[:, 0, 1] * (F[:, 1, 0] * F[:, 2, 2] - F[:, 1, 2] * F[:, 2, 0])
            + F[:, 0, 2] * (F[:, 1, 0] * F[:, 2, 1] - F[:, 1, 1] * F[:, 2, 0]))


def reduced_elastic(phi, grads, xhat, w, vol, z, mu, lam):
    """Total elastic energy and its gradient w.r.t. the reduced coordinates.

    phi (N,k), grads (N,k,d), xhat (N,d+1), w/vol (N,), z (k,d,d+1).
    Returns (energy, dE/dz, min det F). Points with det F <= DET_EPS get a
    large finite barrier with a cofactor push-back gradient.
    """
    d = grads.shape[2]
    y = np.einsum("jab,nb->nja", z, xhat)
    F = np.eye(d)[None] + np.einsum("nja,njc->nac", y, grads) \
        + np.einsum("nj,jac->nac", phi, z[:, :, :d])
    J = _batch_det(F)
    bad = J <= DET_EPS
    lnJ = np.log(np.where(bad, 1.0, J))
    cof = _batch_cof(F)
    frob = (F * F).sum((1, 2))
    psi_good = 0.5 * mu * (frob - d) - mu * lnJ + 0.5 * lam * lnJ * lnJ
    psi_bad = DET_BARRIER * (1.0 + (DET_EPS - J))
    psi = w * np.where(bad, psi_bad, psi_good)
    Jsafe = np.where(bad, 1.0, J)
    P_good = mu * F + ((lam * lnJ - mu) / Jsafe)[:, None, None] * cof
    P_bad = -DET_BARRIER * cof
    P = w[:, None, None] * np.where(bad[:, None, None], P_bad, P_good)
    energy = float((vol * psi).sum())
    Pv = P * vol[:, None, None]
    Pg = np.einsum("nac,njc->nja", Pv, grads)
    grad = np.einsum("nja,nb->jab", Pg, xhat)
    grad[:, :, :d] += np.einsum("nj,nab->jab", phi, Pv)
    return energy, grad, float(J.min())
