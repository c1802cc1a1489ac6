"""Hot numeric kernels.

Every kernel exists twice: a numba ``@njit`` loop and a vectorized numpy
version. The numba path is used when numba imports cleanly and the
``CAMS_NO_NUMBA`` environment variable is unset (or ``0``). Both paths are
importable directly (``*_numba`` / ``*_numpy``) so tests and the benchmark can
compare them.
"""
from __future__ import annotations

import os

import numpy as np

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA and os.environ.get("CAMS_NO_NUMBA", "0").lower() in ("", "0", "false", "no")

_CHUNK = 4096


def _triangle_bounds(tris):
    centers = tris.mean(axis=1)
    radii = np.sqrt(((tris - centers[:, None, :]) ** 2).sum(-1).max(axis=1))
    return centers, radii


# ---------------------------------------------------------------------------
# closest point on a triangle soup
# ---------------------------------------------------------------------------

def closest_on_triangles_numpy(p, a, b, c):
    """Closest points on triangles ``(a, b, c)`` to ``p``; all args broadcast over leading axes."""
    ab = b - a
    ac = c - a
    ap = p - a
    bp = p - b
    cp = p - c
    d1 = (ab * ap).sum(-1)
    d2 = (ac * ap).sum(-1)
    d3 = (ab * bp).sum(-1)
    d4 = (ac * bp).sum(-1)
    d5 = (ab * cp).sum(-1)
    d6 = (ac * cp).sum(-1)
    va = d3 * d6 - d5 * d4
    vb = d5 * d2 - d1 * d6
    vc = d1 * d4 - d3 * d2
    with np.errstate(divide="ignore", invalid="ignore"):
        denom = va + vb + vc
        v = np.where(denom != 0, vb / denom, 0.0)
        w = np.where(denom != 0, vc / denom, 0.0)
        out = a + ab * v[..., None] + ac * w[..., None]

        e = (d4 - d3) + (d5 - d6)
        t_bc = np.where(e != 0, (d4 - d3) / e, 0.0)
        m = (va <= 0) & ((d4 - d3) >= 0) & ((d5 - d6) >= 0)
        out = np.where(m[..., None], b + (c - b) * t_bc[..., None], out)

        e = d2 - d6
        t_ac = np.where(e != 0, d2 / e, 0.0)
        m = (vb <= 0) & (d2 >= 0) & (d6 <= 0)
        out = np.where(m[..., None], a + ac * t_ac[..., None], out)

        m = (d6 >= 0) & (d5 <= d6)
        out = np.where(m[..., None], c, out)

        e = d1 - d3
        t_ab = np.where(e != 0, d1 / e, 0.0)
        m = (vc <= 0) & (d1 >= 0) & (d3 <= 0)
        out = np.where(m[..., None], a + ab * t_ab[..., None], out)

        m = (d3 >= 0) & (d4 <= d3)
        out = np.where(m[..., None], b, out)

        m = (d1 <= 0) & (d2 <= 0)
        out = np.where(m[..., None], a, out)
    return out


def closest_points_numpy(queries, tris):
    """Exhaustive scan: for each query the nearest point over all triangles.

    Returns ``(points, dist2, tri_ids)``.
    """
    queries = np.ascontiguousarray(queries, dtype=np.float64)
    tris = np.ascontiguousarray(tris, dtype=np.float64)
    nq = queries.shape[0]
    points = np.empty((nq, 3))
    dist2 = np.empty(nq)
    ids = np.empty(nq, dtype=np.int64)
    a, b, c = tris[:, 0], tris[:, 1], tris[:, 2]
    step = max(1, _CHUNK * 64 // max(1, tris.shape[0]))
    for s in range(0, nq, step):
        q = queries[s:s + step, None, :]
        cp = closest_on_triangles_numpy(q, a[None], b[None], c[None])
        d2 = ((cp - q) ** 2).sum(-1)
        k = np.argmin(d2, axis=1)
        rows = np.arange(k.shape[0])
        points[s:s + step] = cp[rows, k]
        dist2[s:s + step] = d2[rows, k]
        ids[s:s + step] = k
    return points, dist2, ids


def winding_numbers_numpy(queries, tris):
    queries = np.ascontiguousarray(queries, dtype=np.float64)
    tris = np.ascontiguousarray(tris, dtype=np.float64)
    out = np.empty(queries.shape[0])
    step = max(1, _CHUNK * 64 // max(1, tris.shape[0]))
    for s in range(0, queries.shape[0], step):
        q = queries[s:s + step, None, None, :]
        r = tris[None] - q
        a, b, c = r[..., 0, :], r[..., 1, :], r[..., 2, :]
        la = np.linalg.norm(a, axis=-1)
        lb = np.linalg.norm(b, axis=-1)
        lc = np.linalg.norm(c, axis=-1)
        det = (a * np.cross(b, c)).sum(-1)
        den = (la * lb * lc + (a * b).sum(-1) * lc + (b * c).sum(-1) * la
               + (c * a).sum(-1) * lb)
        out[s:s + step] = 2.0 * np.arctan2(det, den).sum(axis=1) / (4.0 * np.pi)
    return out


def nnls_fista_numpy(A, t, iterations):
    """Accelerated projected gradient for min ||A x - t||^2, x >= 0."""
    AtA = A.T @ A
    Att = A.T @ t
    L = max(np.linalg.eigvalsh(AtA).max(), 1e-300)
    step = 1.0 / L
    x = np.zeros(A.shape[1])
    y = x.copy()
    tk = 1.0
    for _ in range(iterations):
        x_new = np.maximum(y - step * (AtA @ y - Att), 0.0)
        tk_new = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * tk * tk))
        y = x_new + ((tk - 1.0) / tk_new) * (x_new - x)
        x, tk = x_new, tk_new
    return x


if HAVE_NUMBA:

    @njit(cache=True)
    def _closest_on_triangle_nb(px, py, pz, ax, ay, az, bx, by, bz, cx, cy, cz):
        abx, aby, abz = bx - ax, by - ay, bz - az
        acx, acy, acz = cx - ax, cy - ay, cz - az
        apx, apy, apz = px - ax, py - ay, pz - az
        d1 = abx * apx + aby * apy + abz * apz
        d2 = acx * apx + acy * apy + acz * apz
        if d1 <= 0.0 and d2 <= 0.0:
            return ax, ay, az
        bpx, bpy, bpz = px - bx, py - by, pz - bz
        d3 = abx * bpx + aby * bpy + abz * bpz
        d4 = acx * bpx + acy * bpy + acz * bpz
        if d3 >= 0.0 and d4 <= d3:
            return bx, by, bz
        vc = d1 * d4 - d3 * d2
        if vc <= 0.0 and d1 >= 0.0 and d3 <= 0.0:
            e = d1 - d3
            v = d1 / e if e != 0.0 else 0.0
            return ax + v * abx, ay + v * aby, az + v * abz
        cpx, cpy, cpz = px - cx, py - cy, pz - cz
        d5 = abx * cpx + aby * cpy + abz * cpz
        d6 = acx * cpx + acy * cpy + acz * cpz
        if d6 >= 0.0 and d5 <= d6:
            return cx, cy, cz
        vb = d5 * d2 - d1 * d6
        if vb <= 0.0 and d2 >= 0.0 and d6 <= 0.0:
            e = d2 - d6
            w = d2 / e if e != 0.0 else 0.0
            return ax + w * acx, ay + w * acy, az + w * acz
        va = d3 * d6 - d5 * d4
        if va <= 0.0 and (d4 - d3) >= 0.0 and (d5 - d6) >= 0.0:
            e = (d4 - d3) + (d5 - d6)
            w = (d4 - d3) / e if e != 0.0 else 0.0
            return bx + w * (cx - bx), by + w * (cy - by), bz + w * (cz - bz)
        denom = va + vb + vc
        if denom == 0.0:
            return ax, ay, az
        v = vb / denom
        w = vc / denom
        return (ax + abx * v + acx * w, ay + aby * v + acy * w, az + abz * v + acz * w)

    @njit(cache=True)
    def _closest_points_kernel(queries, tris, centers, radii, points, dist2, ids):
        nq = queries.shape[0]
        nt = tris.shape[0]
        for i in range(nq):
            px, py, pz = queries[i, 0], queries[i, 1], queries[i, 2]
            best = np.inf
            bi = -1
            bx = by = bz = 0.0
            for j in range(nt):
                dx = px - centers[j, 0]
                dy = py - centers[j, 1]
                dz = pz - centers[j, 2]
                dc = np.sqrt(dx * dx + dy * dy + dz * dz) - radii[j]
                if dc > 0.0 and dc * dc > best:
                    continue
                qx, qy, qz = _closest_on_triangle_nb(
                    px, py, pz,
                    tris[j, 0, 0], tris[j, 0, 1], tris[j, 0, 2],
                    tris[j, 1, 0], tris[j, 1, 1], tris[j, 1, 2],
                    tris[j, 2, 0], tris[j, 2, 1], tris[j, 2, 2])
                d = (qx - px) ** 2 + (qy - py) ** 2 + (qz - pz) ** 2
                if d < best:
                    best = d
                    bi = j
                    bx, by, bz = qx, qy, qz
            points[i, 0] = bx
            points[i, 1] = by
            points[i, 2] = bz
            dist2[i] = best
            ids[i] = bi

    @njit(cache=True)
    def _winding_kernel(queries, tris, out):
        four_pi = 4.0 * np.pi
        for i in range(queries.shape[0]):
            px, py, pz = queries[i, 0], queries[i, 1], queries[i, 2]
            total = 0.0
            for j in range(tris.shape[0]):
                ax = tris[j, 0, 0] - px
                ay = tris[j, 0, 1] - py
                az = tris[j, 0, 2] - pz
                bx = tris[j, 1, 0] - px
                by = tris[j, 1, 1] - py
                bz = tris[j, 1, 2] - pz
                cx = tris[j, 2, 0] - px
                cy = tris[j, 2, 1] - py
                cz = tris[j, 2, 2] - pz
                la = np.sqrt(ax * ax + ay * ay + az * az)
                lb = np.sqrt(bx * bx + by * by + bz * bz)
                lc = np.sqrt(cx * cx + cy * cy + cz * cz)
                det = (ax * (by * cz - bz * cy) + ay * (bz * cx - bx * cz)
                       + az * (bx * cy - by * cx))
                den = (la * lb * lc + (ax * bx + ay * by + az * bz) * lc
                       + (bx * cx + by * cy + bz * cz) * la
                       + (cx * ax + cy * ay + cz * az) * lb)
                total += 2.0 * np.arctan2(det, den)
            out[i] = total / four_pi

    @njit(cache=True)
    def _fista_kernel(AtA, Att, step, iterations):
        n = Att.shape[0]
        x = np.zeros(n)
        y = np.zeros(n)
        x_new = np.zeros(n)
        tk = 1.0
        for _ in range(iterations):
            for i in range(n):
                g = -Att[i]
                for j in range(n):
                    g += AtA[i, j] * y[j]
                v = y[i] - step * g
                x_new[i] = v if v > 0.0 else 0.0
            tk_new = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * tk * tk))
            beta = (tk - 1.0) / tk_new
            for i in range(n):
                y[i] = x_new[i] + beta * (x_new[i] - x[i])
                x[i] = x_new[i]
            tk = tk_new
        return x

    def closest_points_numba(queries, tris):
        queries = np.ascontiguousarray(queries, dtype=np.float64)
        tris = np.ascontiguousarray(tris, dtype=np.float64)
        centers, radii = _triangle_bounds(tris)
        nq = queries.shape[0]
        points = np.empty((nq, 3))
        dist2 = np.empty(nq)
        ids = np.empty(nq, dtype=np.int64)
        _closest_points_kernel(queries, tris, centers, radii, points, dist2, ids)
        return points, dist2, ids

    def winding_numbers_numba(queries, tris):
        queries = np.ascontiguousarray(queries, dtype=np.float64)
        tris = np.ascontiguousarray(tris, dtype=np.float64)
        out = np.empty(queries.shape[0])
        _winding_kernel(queries, tris, out)
        return out

    def nnls_fista_numba(A, t, iterations):
        A = np.ascontiguousarray(A, dtype=np.float64)
        AtA = A.T @ A
        Att = A.T @ np.asarray(t, dtype=np.float64)
        L = max(np.linalg.eigvalsh(AtA).max(), 1e-300)
        return _fista_kernel(AtA, Att, 1.0 / L, int(iterations))


if USE_NUMBA:
    closest_points = closest_points_numba
    winding_numbers = winding_numbers_numba
    nnls_fista = nnls_fista_numba
else:
    closest_points = closest_points_numpy
    winding_numbers = winding_numbers_numpy
    nnls_fista = nnls_fista_numpy


def backend() -> str:
    return "numba" if USE_NUMBA else "numpy"
