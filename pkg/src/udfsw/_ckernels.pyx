# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels. Semantics match ``_pykernels`` exactly."""

import numpy as np
cimport numpy as cnp
from libc.math cimport floor, sqrt, acos, INFINITY

cnp.import_array()


def trilinear(values, origin, spacing, points):
    cdef double[:, :, ::1] V = np.ascontiguousarray(values, dtype=np.float64)
    cdef double[::1] o = np.ascontiguousarray(origin, dtype=np.float64)
    cdef double[::1] s = np.ascontiguousarray(spacing, dtype=np.float64)
    cdef double[:, ::1] P = np.ascontiguousarray(points, dtype=np.float64)
    cdef Py_ssize_t n = P.shape[0]
    cdef Py_ssize_t nx = V.shape[0], ny = V.shape[1], nz = V.shape[2]
    val_arr = np.empty(n)
    grad_arr = np.empty((n, 3))
    cdef double[::1] val = val_arr
    cdef double[:, ::1] grad = grad_arr
    cdef Py_ssize_t q, ix, iy, iz
    cdef double u[3]
    cdef double hi[3]
    cdef int outside[3]
    cdef double tx, ty, tz
    cdef double c000, c100, c010, c110, c001, c101, c011, c111
    cdef double c00, c10, c01, c11, c0, c1, dx0, dx1
    cdef int ax
    hi[0] = nx - 1
    hi[1] = ny - 1
    hi[2] = nz - 1
    with nogil:
        for q in range(n):
            for ax in range(3):
                u[ax] = (P[q, ax] - o[ax]) / s[ax]
                outside[ax] = 0
                if u[ax] < 0.0:
                    u[ax] = 0.0
                    outside[ax] = 1
                elif u[ax] > hi[ax]:
                    u[ax] = hi[ax]
                    outside[ax] = 1
            ix = <Py_ssize_t>floor(u[0])
            iy = <Py_ssize_t>floor(u[1])
            iz = <Py_ssize_t>floor(u[2])
            if ix > nx - 2:
                ix = nx - 2
            if iy > ny - 2:
                iy = ny - 2
            if iz > nz - 2:
                iz = nz - 2
            tx = u[0] - ix
            ty = u[1] - iy
            tz = u[2] - iz
            c000 = V[ix, iy, iz]
            c100 = V[ix + 1, iy, iz]
            c010 = V[ix, iy + 1, iz]
            c110 = V[ix + 1, iy + 1, iz]
            c001 = V[ix, iy, iz + 1]
            c101 = V[ix + 1, iy, iz + 1]
            c011 = V[ix, iy + 1, iz + 1]
            c111 = V[ix + 1, iy + 1, iz + 1]
            c00 = c000 + tx * (c100 - c000)
            c10 = c010 + tx * (c110 - c010)
            c01 = c001 + tx * (c101 - c001)
            c11 = c011 + tx * (c111 - c011)
            c0 = c00 + ty * (c10 - c00)
            c1 = c01 + ty * (c11 - c01)
            val[q] = c0 + tz * (c1 - c0)
            dx0 = (c100 - c000) + ty * ((c110 - c010) - (c100 - c000))
            dx1 = (c101 - c001) + ty * ((c111 - c011) - (c101 - c001))
            grad[q, 0] = 0.0 if outside[0] else (dx0 + tz * (dx1 - dx0)) / s[0]
            grad[q, 1] = 0.0 if outside[1] else ((c10 - c00) + tz * ((c11 - c01) - (c10 - c00))) / s[1]
            grad[q, 2] = 0.0 if outside[2] else (c1 - c0) / s[2]
    return val_arr, grad_arr


cdef inline double _dot(double* u, double* v) nogil:
    return u[0] * v[0] + u[1] * v[1] + u[2] * v[2]


def closest_point_triangles(points, a, b, c):
    cdef double[:, ::1] P = np.ascontiguousarray(points, dtype=np.float64)
    cdef double[:, ::1] A = np.ascontiguousarray(a, dtype=np.float64)
    cdef double[:, ::1] B = np.ascontiguousarray(b, dtype=np.float64)
    cdef double[:, ::1] C = np.ascontiguousarray(c, dtype=np.float64)
    cdef Py_ssize_t n = P.shape[0]
    out_arr = np.empty((n, 3))
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t q
    cdef int j
    cdef double ab[3]
    cdef double ac[3]
    cdef double ap[3]
    cdef double bp[3]
    cdef double cp[3]
    cdef double d1, d2, d3, d4, d5, d6, va, vb, vc, v, w, denom
    with nogil:
        for q in range(n):
            for j in range(3):
                ab[j] = B[q, j] - A[q, j]
                ac[j] = C[q, j] - A[q, j]
                ap[j] = P[q, j] - A[q, j]
                bp[j] = P[q, j] - B[q, j]
                cp[j] = P[q, j] - C[q, j]
            d1 = _dot(ab, ap)
            d2 = _dot(ac, ap)
            if d1 <= 0 and d2 <= 0:
                for j in range(3):
                    out[q, j] = A[q, j]
                continue
            d3 = _dot(ab, bp)
            d4 = _dot(ac, bp)
            if d3 >= 0 and d4 <= d3:
                for j in range(3):
                    out[q, j] = B[q, j]
                continue
            vc = d1 * d4 - d3 * d2
            if vc <= 0 and d1 >= 0 and d3 <= 0:
                v = d1 / (d1 - d3)
                for j in range(3):
                    out[q, j] = A[q, j] + v * ab[j]
                continue
            d5 = _dot(ab, cp)
            d6 = _dot(ac, cp)
            if d6 >= 0 and d5 <= d6:
                for j in range(3):
                    out[q, j] = C[q, j]
                continue
            vb = d5 * d2 - d1 * d6
            if vb <= 0 and d2 >= 0 and d6 <= 0:
                w = d2 / (d2 - d6)
                for j in range(3):
                    out[q, j] = A[q, j] + w * ac[j]
                continue
            va = d3 * d6 - d5 * d4
            if va <= 0 and (d4 - d3) >= 0 and (d5 - d6) >= 0:
                w = (d4 - d3) / ((d4 - d3) + (d5 - d6))
                for j in range(3):
                    out[q, j] = B[q, j] + w * (C[q, j] - B[q, j])
                continue
            denom = 1.0 / (va + vb + vc)
            v = vb * denom
            w = vc * denom
            for j in range(3):
                out[q, j] = A[q, j] + ab[j] * v + ac[j] * w
    return out_arr


cdef inline double _angle(double* u, double* v) nogil:
    cdef double d = u[0] * v[0] + u[1] * v[1] + u[2] * v[2]
    if d > 1.0:
        d = 1.0
    elif d < -1.0:
        d = -1.0
    return acos(d)


cdef inline bint _nonzero(double* u) nogil:
    return u[0] * u[0] + u[1] * u[1] + u[2] * u[2] > 0


def min_area_triangulation(loop, edge_normals=None, double tie_rtol=1e-9):
    cdef double[:, ::1] P = np.ascontiguousarray(loop, dtype=np.float64)
    cdef Py_ssize_t n = P.shape[0]
    if n < 3:
        raise ValueError("need at least 3 loop vertices")
    if edge_normals is None:
        en_arr = np.zeros((n, 3))
    else:
        en_arr = np.ascontiguousarray(edge_normals, dtype=np.float64)
    cdef double[:, ::1] EN = en_arr
    W_arr = np.zeros((n, n))
    D_arr = np.zeros((n, n))
    O_arr = np.full((n, n), -1, dtype=np.int64)
    TN_arr = np.zeros((n, n, 3))
    cost_arr = np.empty(n)
    dih_arr = np.empty(n)
    tn_arr = np.empty((n, 3))
    cdef double[:, ::1] W = W_arr
    cdef double[:, ::1] D = D_arr
    cdef long long[:, ::1] O = O_arr
    cdef double[:, :, ::1] TN = TN_arr
    cdef double[::1] cost = cost_arr
    cdef double[::1] dih = dih_arr
    cdef double[:, ::1] tn = tn_arr
    cdef Py_ssize_t gap, i, k, m, t, cnt, best
    cdef double e1[3]
    cdef double e2[3]
    cdef double cr[3]
    cdef double nb[3]
    cdef double nrm, ang, cmin, dbest, d
    cdef int j
    with nogil:
        for gap in range(2, n):
            for i in range(0, n - gap):
                k = i + gap
                cnt = 0
                for m in range(i + 1, k):
                    for j in range(3):
                        e1[j] = P[m, j] - P[i, j]
                        e2[j] = P[k, j] - P[i, j]
                    cr[0] = e1[1] * e2[2] - e1[2] * e2[1]
                    cr[1] = e1[2] * e2[0] - e1[0] * e2[2]
                    cr[2] = e1[0] * e2[1] - e1[1] * e2[0]
                    nrm = sqrt(cr[0] * cr[0] + cr[1] * cr[1] + cr[2] * cr[2])
                    for j in range(3):
                        tn[cnt, j] = cr[j] / nrm if nrm > 0 else 0.0
                    cost[cnt] = W[i, m] + W[m, k] + 0.5 * nrm
                    d = D[i, m]
                    if D[m, k] > d:
                        d = D[m, k]
                    # neighbour across edge (i, m)
                    if m - i >= 2:
                        for j in range(3):
                            nb[j] = TN[i, m, j]
                    else:
                        for j in range(3):
                            nb[j] = EN[i, j]
                    if _nonzero(nb):
                        ang = _angle(&tn[cnt, 0], nb)
                        if ang > d:
                            d = ang
                    # neighbour across edge (m, k)
                    if k - m >= 2:
                        for j in range(3):
                            nb[j] = TN[m, k, j]
                    else:
                        for j in range(3):
                            nb[j] = EN[m, j]
                    if _nonzero(nb):
                        ang = _angle(&tn[cnt, 0], nb)
                        if ang > d:
                            d = ang
                    if i == 0 and k == n - 1 and _nonzero(&EN[n - 1, 0]):
                        ang = _angle(&tn[cnt, 0], &EN[n - 1, 0])
                        if ang > d:
                            d = ang
                    dih[cnt] = d
                    cnt += 1
                cmin = INFINITY
                for t in range(cnt):
                    if cost[t] < cmin:
                        cmin = cost[t]
                best = -1
                dbest = INFINITY
                for t in range(cnt):
                    if cost[t] <= cmin + tie_rtol * cmin and dih[t] < dbest:
                        dbest = dih[t]
                        best = t
                W[i, k] = cost[best]
                D[i, k] = dih[best]
                O[i, k] = i + 1 + best
                for j in range(3):
                    TN[i, k, j] = tn[best, j]

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
