"""Numba kernel implementations (hot path).

Each function mirrors its pure-numpy twin in :mod:`creaselift.kernels.np_`:
same signature, same semantics, same tie-breaking. Keep them in sync.
"""

import os

import numpy as np

# The workqueue threading layer is always available; TBB/OMP probing emits
# warnings on hosts with older runtimes. Respect an explicit user override.
if "NUMBA_THREADING_LAYER" not in os.environ:
    import numba

    numba.config.THREADING_LAYER = "workqueue"

from numba import njit, prange

from .common import (DET_BARRIER, DET_EPS, KEY_BITS, KEY_MASK, KIND_EDGE,
                     KIND_FACE, KIND_VERTEX)


# ---------------------------------------------------------------------------
# closest point
# ---------------------------------------------------------------------------

@njit(cache=True)
def _feature_point(vertices, elements, e, x, p):
    """Closest point on element e to x, written into p.

    Returns (squared distance, feature kind, vertex id 0, vertex id 1).
    """
    arity = elements.shape[1]
    d = vertices.shape[1]
    if arity == 1:
        v = elements[e, 0]
        d2 = 0.0
        for a in range(d):
            p[a] = vertices[v, a]
            diff = x[a] - p[a]
            d2 += diff * diff
        return d2, KIND_VERTEX, v, -1
    if arity == 2:
        va = elements[e, 0]
        vb = elements[e, 1]
        denom = 0.0
        tnum = 0.0
        for a in range(d):
            ab = vertices[vb, a] - vertices[va, a]
            denom += ab * ab
            tnum += (x[a] - vertices[va, a]) * ab
        t = 0.0 if denom == 0.0 else tnum / denom
        if t < 0.0:
            t = 0.0
        elif t > 1.0:
            t = 1.0
        d2 = 0.0
        for a in range(d):
            p[a] = vertices[va, a] + t * (vertices[vb, a] - vertices[va, a])
            diff = x[a] - p[a]
            d2 += diff * diff
        if t == 0.0:
            return d2, KIND_VERTEX, va, -1
        if t == 1.0:
            return d2, KIND_VERTEX, vb, -1
        return d2, KIND_EDGE, va, vb
    # triangle region test (d == 3)
    ia = elements[e, 0]
    ib = elements[e, 1]
    ic = elements[e, 2]
    abx = vertices[ib, 0] - vertices[ia, 0]
    aby = vertices[ib, 1] - vertices[ia, 1]
    abz = vertices[ib, 2] - vertices[ia, 2]
    acx = vertices[ic, 0] - vertices[ia, 0]
    acy = vertices[ic, 1] - vertices[ia, 1]
    acz = vertices[ic, 2] - vertices[ia, 2]
    apx = x[0] - vertices[ia, 0]
    apy = x[1] - vertices[ia, 1]
    apz = x[2] - vertices[ia, 2]
    d1 = abx * apx + aby * apy + abz * apz
    d2_ = acx * apx + acy * apy + acz * apz
    if d1 <= 0.0 and d2_ <= 0.0:
        p[0] = vertices[ia, 0]
        p[1] = vertices[ia, 1]
        p[2] = vertices[ia, 2]
        return _d2(p, x), KIND_VERTEX, ia, -1
    bpx = x[0] - vertices[ib, 0]
    bpy = x[1] - vertices[ib, 1]
    bpz = x[2] - vertices[ib, 2]
    d3 = abx * bpx + aby * bpy + abz * bpz
    d4 = acx * bpx + acy * bpy + acz * bpz
    if d3 >= 0.0 and d4 <= d3:
        p[0] = vertices[ib, 0]
        p[1] = vertices[ib, 1]
        p[2] = vertices[ib, 2]
        return _d2(p, x), KIND_VERTEX, ib, -1
    vc = d1 * d4 - d3 * d2_
    if vc <= 0.0 and d1 >= 0.0 and d3 <= 0.0:
        den = d1 - d3
        v = d1 / den if den != 0.0 else 0.0
        p[0] = vertices[ia, 0] + v * abx
        p[1] = vertices[ia, 1] + v * aby
        p[2] = vertices[ia, 2] + v * abz
        return _d2(p, x), KIND_EDGE, ia, ib
    cpx = x[0] - vertices[ic, 0]
    cpy = x[1] - vertices[ic, 1]
    cpz = x[2] - vertices[ic, 2]
    d5 = abx * cpx + aby * cpy + abz * cpz
    d6 = acx * cpx + acy * cpy + acz * cpz
    if d6 >= 0.0 and d5 <= d6:
        p[0] = vertices[ic, 0]
        p[1] = vertices[ic, 1]
        p[2] = vertices[ic, 2]
        return _d2(p, x), KIND_VERTEX, ic, -1
    vb_ = d5 * d2_ - d1 * d6
    if vb_ <= 0.0 and d2_ >= 0.0 and d6 <= 0.0:
        den = d2_ - d6
        w = d2_ / den if den != 0.0 else 0.0
        p[0] = vertices[ia, 0] + w * acx
        p[1] = vertices[ia, 1] + w * acy
        p[2] = vertices[ia, 2] + w * acz
        return _d2(p, x), KIND_EDGE, ia, ic
    va_ = d3 * d6 - d4 * d5
    if va_ <= 0.0 and d4 - d3 >= 0.0 and d5 - d6 >= 0.0:
        den = (d4 - d3) + (d5 - d6)
        w = (d4 - d3) / den if den != 0.0 else 0.0
        p[0] = vertices[ib, 0] + w * (vertices[ic, 0] - vertices[ib, 0])
        p[1] = vertices[ib, 1] + w * (vertices[ic, 1] - vertices[ib, 1])
        p[2] = vertices[ib, 2] + w * (vertices[ic, 2] - vertices[ib, 2])
        return _d2(p, x), KIND_EDGE, ib, ic
    den = va_ + vb_ + vc
    if den == 0.0:
        den = 1.0
    v = vb_ / den
    w = vc / den
    p[0] = vertices[ia, 0] + v * abx + w * acx
    p[1] = vertices[ia, 1] + v * aby + w * acy
    p[2] = vertices[ia, 2] + v * abz + w * acz
    return _d2(p, x), KIND_FACE, -1, -1


@njit(cache=True)
def _d2(p, x):
    acc = 0.0
    for a in range(p.shape[0]):
        diff = x[a] - p[a]
        acc += diff * diff
    return acc


@njit(cache=True, parallel=True)
def closest_point_batch(vertices, elements, queries):
    """Brute-force closest features for a batch of queries."""
    n = queries.shape[0]
    m = elements.shape[0]
    d = vertices.shape[1]
    elem = np.empty(n, dtype=np.int64)
    dist = np.empty(n, dtype=np.float64)
    point = np.empty((n, d), dtype=np.float64)
    kind = np.empty(n, dtype=np.int64)
    sub0 = np.empty(n, dtype=np.int64)
    sub1 = np.empty(n, dtype=np.int64)
    for i in prange(n):
        best_d2 = np.inf
        tmp = np.empty(d, dtype=np.float64)
        for e in range(m):
            d2, k, s0, s1 = _feature_point(vertices, elements, e,
                                           queries[i], tmp)
            if d2 < best_d2:
                best_d2 = d2
                elem[i] = e
                kind[i] = k
                sub0[i] = s0
                sub1[i] = s1
                for a in range(d):
                    point[i, a] = tmp[a]
        dist[i] = np.sqrt(best_d2)
    return elem, dist, point, kind, sub0, sub1


# ---------------------------------------------------------------------------
# spatial hash
# ---------------------------------------------------------------------------

@njit(cache=True)
def _pack_key(cell):
    key = cell[0] & KEY_MASK
    for a in range(1, cell.shape[0]):
        key = (key << KEY_BITS) | (cell[a] & KEY_MASK)
    return key


@njit(cache=True)
def hash_cell_pairs(vertices, elements, s):
    """(cell key, element) registration pairs over s-inflated element boxes."""
    E = elements.shape[0]
    d = vertices.shape[1]
    arity = elements.shape[1]
    clo = np.empty((E, d), dtype=np.int64)
    chi = np.empty((E, d), dtype=np.int64)
    counts = np.empty(E, dtype=np.int64)
    for e in range(E):
        cnt = 1
        for a in range(d):
            lo = np.inf
            hi = -np.inf
            for v in range(arity):
                val = vertices[elements[e, v], a]
                if val < lo:
                    lo = val
                if val > hi:
                    hi = val
            cl = np.int64(np.floor((lo - s) / s))
            ch = np.int64(np.floor((hi + s) / s))
            clo[e, a] = cl
            chi[e, a] = ch
            cnt *= ch - cl + 1
        counts[e] = cnt
    total = 0
    for e in range(E):
        total += counts[e]
    keys = np.empty(total, dtype=np.int64)
    elems = np.empty(total, dtype=np.int64)
    pos = 0
    cell = np.empty(d, dtype=np.int64)
    for e in range(E):
        if d == 1:
            for c0 in range(clo[e, 0], chi[e, 0] + 1):
                cell[0] = c0
                keys[pos] = _pack_key(cell)
                elems[pos] = e
                pos += 1
        elif d == 2:
            for c0 in range(clo[e, 0], chi[e, 0] + 1):
                for c1 in range(clo[e, 1], chi[e, 1] + 1):
                    cell[0] = c0
                    cell[1] = c1
                    keys[pos] = _pack_key(cell)
                    elems[pos] = e
                    pos += 1
        else:
            for c0 in range(clo[e, 0], chi[e, 0] + 1):
                for c1 in range(clo[e, 1], chi[e, 1] + 1):
                    for c2 in range(clo[e, 2], chi[e, 2] + 1):
                        cell[0] = c0
                        cell[1] = c1
                        cell[2] = c2
                        keys[pos] = _pack_key(cell)
                        elems[pos] = e
                        pos += 1
    return keys, elems


@njit(cache=True, parallel=True)
def hash_query_batch(vertices, elements, ukeys, offsets, bucket, s, queries):
    """Clamped queries through the hash grid (Far sentinel beyond s)."""
    n = queries.shape[0]
    d = queries.shape[1]
    elem = np.full(n, -1, dtype=np.int64)
    dist = np.full(n, np.inf, dtype=np.float64)
    point = np.full((n, d), np.nan, dtype=np.float64)
    kind = np.full(n, -1, dtype=np.int64)
    sub0 = np.full(n, -1, dtype=np.int64)
    sub1 = np.full(n, -1, dtype=np.int64)
    nnb = 3 ** d
    for i in prange(n):
        cell = np.empty(d, dtype=np.int64)
        ncell = np.empty(d, dtype=np.int64)
        tmp = np.empty(d, dtype=np.float64)
        for a in range(d):
            cell[a] = np.int64(np.floor(queries[i, a] / s))
        best_d2 = np.inf
        best_e = -1
        best_k = -1
        best_s0 = -1
        best_s1 = -1
        for t in range(nnb):
            r = t
            for a in range(d):
                ncell[a] = cell[a] + (r % 3) - 1
                r //= 3
            key = _pack_key(ncell)
            j = np.searchsorted(ukeys, key)
            if j >= ukeys.shape[0] or ukeys[j] != key:
                continue
            for b in range(offsets[j], offsets[j + 1]):
                e = bucket[b]
                d2, k, s0, s1 = _feature_point(vertices, elements, e,
                                               queries[i], tmp)
                if d2 < best_d2 or (d2 == best_d2 and e < best_e):
                    best_d2 = d2
                    best_e = e
                    best_k = k
                    best_s0 = s0
                    best_s1 = s1
                    for a in range(d):
                        point[i, a] = tmp[a]
        dd = np.sqrt(best_d2)
        if best_e >= 0 and dd < s:
            elem[i] = best_e
            dist[i] = dd
            kind[i] = best_k
            sub0[i] = best_s0
            sub1[i] = best_s1
        else:
            for a in range(d):
                point[i, a] = np.nan
    return elem, dist, point, kind, sub0, sub1


# ---------------------------------------------------------------------------
# generalized winding number (2D)
# ---------------------------------------------------------------------------

@njit(cache=True, parallel=True)
def winding_batch(vertices, elements, queries):
    """Angle-sum winding numbers of a 2D polyline at the query points."""
    n = queries.shape[0]
    m = elements.shape[0]
    out = np.empty(n, dtype=np.float64)
    for i in prange(n):
        acc = 0.0
        qx = queries[i, 0]
        qy = queries[i, 1]
        for e in range(m):
            ux = vertices[elements[e, 0], 0] - qx
            uy = vertices[elements[e, 0], 1] - qy
            vx = vertices[elements[e, 1], 0] - qx
            vy = vertices[elements[e, 1], 1] - qy
            acc += np.arctan2(ux * vy - uy * vx, ux * vx + uy * vy)
        out[i] = acc / (2.0 * np.pi)
    return out


@njit(cache=True, parallel=True)
def winding_derivative_batch(vertices, elements, queries):
    """First and second spatial derivatives of the winding-number field."""
    n = queries.shape[0]
    m = elements.shape[0]
    grad = np.zeros((n, 2), dtype=np.float64)
    hess = np.zeros((n, 2, 2), dtype=np.float64)
    for i in prange(n):
        qx = queries[i, 0]
        qy = queries[i, 1]
        g0 = 0.0
        g1 = 0.0
        h00 = 0.0
        h01 = 0.0
        h11 = 0.0
        for e in range(m):
            for side in range(2):
                px = vertices[elements[e, side], 0] - qx
                py = vertices[elements[e, side], 1] - qy
                sign = 1.0 if side == 1 else -1.0
                r2 = px * px + py * py
                g0 += sign * py / r2
                g1 += sign * (-px) / r2
                r4 = r2 * r2
                h00 += sign * 2.0 * px * py / r4
                h01 += sign * (py * py - px * px) / r4
                h11 += sign * (-2.0 * px * py) / r4
        grad[i, 0] = g0 / (2.0 * np.pi)
        grad[i, 1] = g1 / (2.0 * np.pi)
        hess[i, 0, 0] = h00 / (2.0 * np.pi)
        hess[i, 0, 1] = h01 / (2.0 * np.pi)
        hess[i, 1, 0] = h01 / (2.0 * np.pi)
        hess[i, 1, 1] = h11 / (2.0 * np.pi)
    return grad, hess


# ---------------------------------------------------------------------------
# dense symmetric eigensolve (cyclic Jacobi)
# ---------------------------------------------------------------------------

@njit(cache=True)
def jacobi_eigh(A, tol=1e-12, max_sweeps=60):
    """Eigen-decomposition of a dense symmetric matrix by cyclic Jacobi."""
    n = A.shape[0]
    M = A.copy().astype(np.float64)
    V = np.eye(n)
    norm = 0.0
    for i in range(n):
        for j in range(n):
            norm += M[i, j] * M[i, j]
    norm = np.sqrt(norm)
    if norm == 0.0:
        return np.zeros(n), V
    for _ in range(max_sweeps):
        off = 0.0
        for i in range(n - 1):
            for j in range(i + 1, n):
                off += M[i, j] * M[i, j]
        off = np.sqrt(2.0 * off)
        if off <= tol * norm:
            w = np.empty(n, dtype=np.float64)
            for i in range(n):
                w[i] = M[i, i]
            order = np.argsort(w, kind="mergesort")
            wout = np.empty(n, dtype=np.float64)
            Vout = np.empty((n, n), dtype=np.float64)
            for j in range(n):
                wout[j] = w[order[j]]
                for i in range(n):
                    Vout[i, j] = V[i, order[j]]
            return wout, Vout
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = M[p, q]
                if abs(apq) <= 1e-30 * norm:
                    continue
                theta = (M[q, q] - M[p, p]) / (2.0 * apq)
                if theta != 0.0:
                    sg = 1.0 if theta > 0.0 else -1.0
                    t = sg / (abs(theta) + np.sqrt(theta * theta + 1.0))
                else:
                    t = 1.0
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                for k in range(n):
                    rp = M[p, k]
                    rq = M[q, k]
                    M[p, k] = c * rp - s * rq
                    M[q, k] = s * rp + c * rq
                for k in range(n):
                    cp = M[k, p]
                    cq = M[k, q]
                    M[k, p] = c * cp - s * cq
                    M[k, q] = s * cp + c * cq
                for k in range(n):
                    vp = V[k, p]
                    vq = V[k, q]
                    V[k, p] = c * vp - s * vq
                    V[k, q] = s * vp + c * vq
    raise RuntimeError("jacobi eigensolve failed to converge")


# ---------------------------------------------------------------------------
# reduced elastic energy + gradient
# ---------------------------------------------------------------------------

@njit(cache=True)
def reduced_elastic(phi, grads, xhat, w, vol, z, mu, lam):
    """Total elastic energy and its gradient w.r.t. reduced coordinates."""
    n = phi.shape[0]
    k = phi.shape[1]
    d = grads.shape[2]
    energy = 0.0
    grad = np.zeros((k, d, d + 1), dtype=np.float64)
    minJ = np.inf
    F = np.empty((d, d), dtype=np.float64)
    cof = np.empty((d, d), dtype=np.float64)
    P = np.empty((d, d), dtype=np.float64)
    y = np.empty((k, d), dtype=np.float64)
    for i in range(n):
        for j in range(k):
            for a in range(d):
                acc = 0.0
                for b in range(d + 1):
                    acc += z[j, a, b] * xhat[i, b]
                y[j, a] = acc
        for a in range(d):
            for c in range(d):
                acc = 1.0 if a == c else 0.0
                for j in range(k):
                    acc += y[j, a] * grads[i, j, c] + phi[i, j] * z[j, a, c]
                F[a, c] = acc
        if d == 1:
            J = F[0, 0]
            cof[0, 0] = 1.0
        elif d == 2:
            J = F[0, 0] * F[1, 1] - F[0, 1] * F[1, 0]
            cof[0, 0] = F[1, 1]
            cof[0, 1] = -F[1, 0]
            cof[1, 0] = -F[0, 1]
            cof[1, 1] = F[0, 0]
        else:
            J = (F[0, 0] * (F[1, 1] * F[2, 2] - F[1, 2] * F[2, 1])
                 - F[0, 1] * (F[1, 0] * F[2, 2] - F[1, 2] * F[2, 0])
                 + F[0, 2] * (F[1, 0] * F[2, 1] - F[1, 1] * F[2, 0]))
            cof[0, 0] = F[1, 1] * F[2, 2] - F[1, 2] * F[2, 1]
            cof[0, 1] = -(F[1, 0] * F[2, 2] - F[1, 2] * F[2, 0])
            cof[0, 2] = F[1, 0] * F[2, 1] - F[1, 1] * F[2, 0]
            cof[1, 0] = -(F[0, 1] * F[2, 2] - F[0, 2] * F[2, 1])
            cof[1, 1] = F[0, 0] * F[2, 2] - F[0, 2] * F[2, 0]
            cof[1, 2] = -(F[0, 0] * F[2, 1] - F[0, 1] * F[2, 0])
            cof[2, 0] = F[0, 1] * F[1, 2] - F[0, 2] * F[1, 1]
            cof[2, 1] = -(F[0, 0] * F[1, 2] - F[0, 2] * F[1, 0])
            cof[2, 2] = F[0, 0] * F[1, 1] - F[0, 1] * F[1, 0]
        if J < minJ:
            minJ = J
        if J <= DET_EPS:
            psi = DET_BARRIER * (1.0 + (DET_EPS - J))
            scale_f = 0.0
            scale_c = -DET_BARRIER
        else:
            lnJ = np.log(J)
            frob = 0.0
            for a in range(d):
                for c in range(d):
                    frob += F[a, c] * F[a, c]
            psi = 0.5 * mu * (frob - d) - mu * lnJ + 0.5 * lam * lnJ * lnJ
            scale_f = mu
            scale_c = (lam * lnJ - mu) / J
        energy += vol[i] * w[i] * psi
        wv = w[i] * vol[i]
        for a in range(d):
            for c in range(d):
                P[a, c] = wv * (scale_f * F[a, c] + scale_c * cof[a, c])
        for j in range(k):
            for a in range(d):
                pg = 0.0
                for c in range(d):
                    pg += P[a, c] * grads[i, j, c]
                for b in range(d + 1):
                    grad[j, a, b] += pg * xhat[i, b]
                for c in range(d):
                    grad[j, a, c] += phi[i, j] * P[a, c]
    return energy, grad, minJ
