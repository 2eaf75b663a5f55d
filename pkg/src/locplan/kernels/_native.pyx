# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled implementations of the hot kernels (see _numpy for the contracts)."""

import numpy as np

cimport numpy as cnp
from libc.math cimport sqrt

cnp.import_array()

BEHIND_RNORM = 1e8
cdef double _BEHIND = 1e8
cdef double _Z_MIN = 1e-6


cdef inline bint _segment_hits_box(const double* o, const double* d,
                                   const double* lo, const double* hi) nogil:
    cdef double tmin = -1e300
    cdef double tmax = 1e300
    cdef double t1, t2, tmp
    cdef int a
    for a in range(3):
        if d[a] == 0.0:
            if o[a] < lo[a] or o[a] > hi[a]:
                return False
        else:
            t1 = (lo[a] - o[a]) / d[a]
            t2 = (hi[a] - o[a]) / d[a]
            if t1 > t2:
                tmp = t1
                t1 = t2
                t2 = tmp
            if t1 > tmin:
                tmin = t1
            if t2 < tmax:
                tmax = t2
    return tmin <= tmax and tmax > 0.0 and tmin < 1.0


def visibility(points, rot, center, double fx, double fy, double cx, double cy,
               int width, int height, boxes):
    cdef cnp.ndarray[cnp.float64_t, ndim=2] pts = \
        np.ascontiguousarray(points, dtype=np.float64).reshape(-1, 3)
    cdef cnp.ndarray[cnp.float64_t, ndim=2] r = \
        np.ascontiguousarray(rot, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] c = \
        np.ascontiguousarray(center, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=2] bx = \
        np.ascontiguousarray(boxes, dtype=np.float64).reshape(-1, 6)
    cdef Py_ssize_t n = pts.shape[0]
    cdef Py_ssize_t k = bx.shape[0]

    cdef cnp.ndarray[cnp.uint8_t, ndim=1] mask = np.zeros(n, dtype=np.uint8)
    cdef cnp.ndarray[cnp.float64_t, ndim=2] pix = np.zeros((n, 2), dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] depth = np.zeros(n, dtype=np.float64)

    cdef Py_ssize_t i, b
    cdef double relx, rely, relz, xc, yc, zc, u, v
    cdef double o[3]
    cdef double d[3]
    cdef bint occluded
    o[0] = c[0]
    o[1] = c[1]
    o[2] = c[2]
    for i in range(n):
        relx = pts[i, 0] - c[0]
        rely = pts[i, 1] - c[1]
        relz = pts[i, 2] - c[2]
        # camera point = R^T rel
        xc = r[0, 0] * relx + r[1, 0] * rely + r[2, 0] * relz
        yc = r[0, 1] * relx + r[1, 1] * rely + r[2, 1] * relz
        zc = r[0, 2] * relx + r[1, 2] * rely + r[2, 2] * relz
        if zc <= _Z_MIN:
            continue
        u = fx * (xc / zc) + cx
        v = fy * (yc / zc) + cy
        if u < 0.0 or u >= width or v < 0.0 or v >= height:
            continue
        occluded = False
        d[0] = relx
        d[1] = rely
        d[2] = relz
        for b in range(k):
            if _segment_hits_box(o, d, &bx[b, 0], &bx[b, 3]):
                occluded = True
                break
        if occluded:
            continue
        mask[i] = 1
        pix[i, 0] = u
        pix[i, 1] = v
        depth[i] = zc
    return mask.view(np.bool_), pix, depth


def residual_norms(points, meas, rot, center,
                   double fx, double fy, double cx, double cy):
    cdef cnp.ndarray[cnp.float64_t, ndim=2] pts = \
        np.ascontiguousarray(points, dtype=np.float64).reshape(-1, 3)
    cdef cnp.ndarray[cnp.float64_t, ndim=2] ms = \
        np.ascontiguousarray(meas, dtype=np.float64).reshape(-1, 2)
    cdef cnp.ndarray[cnp.float64_t, ndim=2] r = \
        np.ascontiguousarray(rot, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] c = \
        np.ascontiguousarray(center, dtype=np.float64)
    cdef Py_ssize_t n = pts.shape[0]
    cdef cnp.ndarray[cnp.float64_t, ndim=1] rnorms = np.full(n, _BEHIND)
    cdef Py_ssize_t i
    cdef double relx, rely, relz, xc, yc, zc, ex, ey
    for i in range(n):
        relx = pts[i, 0] - c[0]
        rely = pts[i, 1] - c[1]
        relz = pts[i, 2] - c[2]
        xc = r[0, 0] * relx + r[1, 0] * rely + r[2, 0] * relz
        yc = r[0, 1] * relx + r[1, 1] * rely + r[2, 1] * relz
        zc = r[0, 2] * relx + r[1, 2] * rely + r[2, 2] * relz
        if zc <= _Z_MIN:
            continue
        ex = fx * (xc / zc) + cx - ms[i, 0]
        ey = fy * (yc / zc) + cy - ms[i, 1]
        rnorms[i] = sqrt(ex * ex + ey * ey)
    return rnorms


def gn_accumulate(points, meas, rot, center,
                  double fx, double fy, double cx, double cy, double huber_delta):
    cdef cnp.ndarray[cnp.float64_t, ndim=2] pts = \
        np.ascontiguousarray(points, dtype=np.float64).reshape(-1, 3)
    cdef cnp.ndarray[cnp.float64_t, ndim=2] ms = \
        np.ascontiguousarray(meas, dtype=np.float64).reshape(-1, 2)
    cdef cnp.ndarray[cnp.float64_t, ndim=2] r = \
        np.ascontiguousarray(rot, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] c = \
        np.ascontiguousarray(center, dtype=np.float64)
    cdef Py_ssize_t n = pts.shape[0]
    cdef cnp.ndarray[cnp.float64_t, ndim=2] h = np.zeros((6, 6), dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] g = np.zeros(6, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] rnorms = np.full(n, _BEHIND)

    cdef Py_ssize_t i, a, b, row
    cdef double relx, rely, relz, xc, yc, zc, inv_z, u, v, ex, ey, rn, w
    cdef double ju[6]
    cdef double jv[6]
    cdef double du_dx, du_dz, dv_dy, dv_dz
    for i in range(n):
        relx = pts[i, 0] - c[0]
        rely = pts[i, 1] - c[1]
        relz = pts[i, 2] - c[2]
        xc = r[0, 0] * relx + r[1, 0] * rely + r[2, 0] * relz
        yc = r[0, 1] * relx + r[1, 1] * rely + r[2, 1] * relz
        zc = r[0, 2] * relx + r[1, 2] * rely + r[2, 2] * relz
        if zc <= _Z_MIN:
            continue
        inv_z = 1.0 / zc
        u = fx * xc * inv_z + cx
        v = fy * yc * inv_z + cy
        ex = u - ms[i, 0]
        ey = v - ms[i, 1]
        rn = sqrt(ex * ex + ey * ey)
        rnorms[i] = rn
        w = 1.0 if rn <= huber_delta else huber_delta / rn

        du_dx = fx * inv_z
        du_dz = -fx * xc * inv_z * inv_z
        dv_dy = fy * inv_z
        dv_dz = -fy * yc * inv_z * inv_z
        # translation block: d(cam)/d(dt) = -R^T, so column j uses -row j of R
        for a in range(3):
            ju[a] = -(du_dx * r[a, 0] + du_dz * r[a, 2])
            jv[a] = -(dv_dy * r[a, 1] + dv_dz * r[a, 2])
        # rotation block: d(cam)/d(dw) = skew(cam point)
        ju[3] = du_dz * (-yc)
        ju[4] = du_dx * (-zc) + du_dz * xc
        ju[5] = du_dx * yc
        jv[3] = dv_dy * zc + dv_dz * (-yc)
        jv[4] = dv_dz * xc
        jv[5] = dv_dy * (-xc)

        for a in range(6):
            g[a] += w * (ju[a] * ex + jv[a] * ey)
            for b in range(a, 6):
                h[a, b] += w * (ju[a] * ju[b] + jv[a] * jv[b])

    for a in range(6):
        for b in range(a + 1, 6):
            h[b, a] = h[a, b]
    return h, g, rnorms
