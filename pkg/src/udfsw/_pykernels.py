"""Pure numpy implementations of the hot kernels.

These mirror ``_ckernels.pyx`` one-to-one and are used whenever the compiled
extension is unavailable (or ``UDFSW_PURE_PYTHON=1`` is set).
"""

import numpy as np


def trilinear(values, origin, spacing, points):
    """Trilinear value and gradient of a lattice at arbitrary points.

    Points outside the lattice box are clamped onto it; gradient components
    along a clamped axis are zero.

    Parameters
    ----------
    values : (nx, ny, nz) float64 array
    origin, spacing : (3,) float64 arrays
    points : (N, 3) float64 array

    Returns
    -------
    val : (N,) array
    grad : (N, 3) array
    """
    values = np.asarray(values, dtype=np.float64)
    pts = np.asarray(points, dtype=np.float64)
    dims = np.array(values.shape)
    u = (pts - origin) / spacing
    hi = (dims - 1).astype(np.float64)
    outside = (u < 0.0) | (u > hi)
    u = np.clip(u, 0.0, hi)
    i0 = np.minimum(np.floor(u).astype(np.int64), dims - 2)
    t = u - i0
    ix, iy, iz = i0[:, 0], i0[:, 1], i0[:, 2]
    tx, ty, tz = t[:, 0], t[:, 1], t[:, 2]

    c000 = values[ix, iy, iz]
    c100 = values[ix + 1, iy, iz]
    c010 = values[ix, iy + 1, iz]
    c110 = values[ix + 1, iy + 1, iz]
    c001 = values[ix, iy, iz + 1]
    c101 = values[ix + 1, iy, iz + 1]
    c011 = values[ix, iy + 1, iz + 1]
    c111 = values[ix + 1, iy + 1, iz + 1]

    # interpolate along x first
    c00 = c000 + tx * (c100 - c000)
    c10 = c010 + tx * (c110 - c010)
    c01 = c001 + tx * (c101 - c001)
    c11 = c011 + tx * (c111 - c011)
    c0 = c00 + ty * (c10 - c00)
    c1 = c01 + ty * (c11 - c01)
    val = c0 + tz * (c1 - c0)

    dx0 = (c100 - c000) + ty * ((c110 - c010) - (c100 - c000))
    dx1 = (c101 - c001) + ty * ((c111 - c011) - (c101 - c001))
    gx = dx0 + tz * (dx1 - dx0)
    gy = (c10 - c00) + tz * ((c11 - c01) - (c10 - c00))
    gz = c1 - c0
    grad = np.stack([gx, gy, gz], axis=1) / spacing
    grad[outside] = 0.0
    return val, grad


def closest_point_triangles(points, a, b, c):
    """Closest point on triangle ``(a[i], b[i], c[i])`` to ``points[i]``.

    Voronoi-region walk (Ericson, Real-Time Collision Detection 5.1.5).
    All arguments are (N, 3); returns (N, 3).
    """
    p = np.asarray(points, dtype=np.float64)
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    c = np.asarray(c, dtype=np.float64)
    n = p.shape[0]
    out = np.empty((n, 3))
    todo = np.ones(n, dtype=bool)

    ab = b - a
    ac = c - a
    ap = p - a
    d1 = np.einsum("ij,ij->i", ab, ap)
    d2 = np.einsum("ij,ij->i", ac, ap)
    m = (d1 <= 0) & (d2 <= 0)
    out[m] = a[m]
    todo &= ~m

    bp = p - b
    d3 = np.einsum("ij,ij->i", ab, bp)
    d4 = np.einsum("ij,ij->i", ac, bp)
    m = todo & (d3 >= 0) & (d4 <= d3)
    out[m] = b[m]
    todo &= ~m

    vc = d1 * d4 - d3 * d2
    m = todo & (vc <= 0) & (d1 >= 0) & (d3 <= 0)
    if m.any():
        v = d1[m] / (d1[m] - d3[m])
        out[m] = a[m] + v[:, None] * ab[m]
    todo &= ~m

    cp = p - c
    d5 = np.einsum("ij,ij->i", ab, cp)
    d6 = np.einsum("ij,ij->i", ac, cp)
    m = todo & (d6 >= 0) & (d5 <= d6)
    out[m] = c[m]
    todo &= ~m

    vb = d5 * d2 - d1 * d6
    m = todo & (vb <= 0) & (d2 >= 0) & (d6 <= 0)
    if m.any():
        w = d2[m] / (d2[m] - d6[m])
        out[m] = a[m] + w[:, None] * ac[m]
    todo &= ~m

    va = d3 * d6 - d5 * d4
    m = todo & (va <= 0) & ((d4 - d3) >= 0) & ((d5 - d6) >= 0)
    if m.any():
        w = (d4[m] - d3[m]) / ((d4[m] - d3[m]) + (d5[m] - d6[m]))
        out[m] = b[m] + w[:, None] * (c[m] - b[m])
    todo &= ~m

    if todo.any():
        denom = 1.0 / (va[todo] + vb[todo] + vc[todo])
        v = vb[todo] * denom
        w = vc[todo] * denom
        out[todo] = a[todo] + ab[todo] * v[:, None] + ac[todo] * w[:, None]
    return out


def _unit(v):
    n = np.sqrt((v * v).sum(axis=-1, keepdims=True))
    return np.where(n > 0, v / np.where(n > 0, n, 1.0), 0.0)


def min_area_triangulation(loop, edge_normals=None, tie_rtol=1e-9):
    """Minimum-area triangulation of a closed 3D polygon.

    Dynamic program over sub-polygons ``loop[i..k]``. Among candidates whose
    area is within ``tie_rtol`` of the minimum, the one with the smallest
    maximum dihedral angle wins (lowest apex index on exact ties).

    Parameters
    ----------
    loop : (n, 3) array
        Polygon vertices in order, ``n >= 3``.
    edge_normals : (n, 3) array, optional
        Unit normal of the existing face across edge ``(t, t+1 mod n)``;
        enters the dihedral tie-break. Zero rows are ignored.

    Returns
    -------
    (n - 2, 3) int64 array of local vertex indices, each row ``(i, m, k)``
    with ``i < m < k``.
    """
    P = np.asarray(loop, dtype=np.float64)
    n = P.shape[0]
    if n < 3:
        raise ValueError("need at least 3 loop vertices")
    if edge_normals is None:
        EN = np.zeros((n, 3))
    else:
        EN = np.asarray(edge_normals, dtype=np.float64)

    W = np.zeros((n, n))
    D = np.zeros((n, n))
    O = np.full((n, n), -1, dtype=np.int64)
    TN = np.zeros((n, n, 3))

    for gap in range(2, n):
        for i in range(0, n - gap):
            k = i + gap
            ms = np.arange(i + 1, k)
            e1 = P[ms] - P[i]
            e2 = P[k] - P[i]
            cr = np.cross(e1, e2)
            nrm = np.sqrt((cr * cr).sum(axis=1))
            area = 0.5 * nrm
            tn = _unit(cr)
            cost = W[i, ms] + W[ms, k] + area

            dih = np.maximum(D[i, ms], D[ms, k])
            # neighbour across edge (i, m)
            left = np.where((ms - i)[:, None] >= 2, TN[i, ms], EN[i][None, :] * ((ms - i) == 1)[:, None])
            right = np.where((k - ms)[:, None] >= 2, TN[ms, k], EN[ms] * ((k - ms) == 1)[:, None])
            for nb in (left, right):
                has = (nb * nb).sum(axis=1) > 0
                ang = np.arccos(np.clip((tn * nb).sum(axis=1), -1.0, 1.0))
                dih = np.where(has, np.maximum(dih, ang), dih)
            if i == 0 and k == n - 1 and (EN[n - 1] ** 2).sum() > 0:
                ang = np.arccos(np.clip(tn @ EN[n - 1], -1.0, 1.0))
                dih = np.maximum(dih, ang)

            cmin = cost.min()
            near = cost <= cmin + tie_rtol * cmin
            best = int(np.argmin(np.where(near, dih, np.inf)))
            W[i, k] = cost[best]
            D[i, k] = dih[best]
            O[i, k] = ms[best]
            TN[i, k] = tn[best]

    tris = []
    stack = [(0, n - 1)]
    while stack:
        i, k = stack.pop()
        if k - i < 2:
            continue
        m = O[i, k]
        tris.append((i, m, k))
        stack.append((i, m))
        stack.append((m, k))
    return np.array(sorted(tris), dtype=np.int64)
