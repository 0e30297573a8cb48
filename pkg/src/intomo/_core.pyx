# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels: ray-driven projector pair, pixel-driven backprojector, PCG32 fill.

Pure-Python equivalents live in :mod:`intomo._fallback`; both must agree to
rounding. Image pixel (i, j) has center (x_j, y_i) = (-1 + (j + .5) h, -1 + (i + .5) h)
with h = 2 / n. Sample points are s*theta + t*theta_perp, theta = (cos, sin),
theta_perp = (-sin, cos), t_q = (q - (n_t - 1) / 2) * dt.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport floor, ceil, fabs

cnp.import_array()

ctypedef unsigned long long u64
ctypedef unsigned int u32


def pcg32_fill(u64 state, u64 inc, Py_ssize_t count):
    cdef cnp.ndarray[cnp.uint32_t, ndim=1] out = np.empty(count, dtype=np.uint32)
    cdef Py_ssize_t i
    cdef u64 old
    cdef u32 xorshifted, rot
    for i in range(count):
        old = state
        state = old * 6364136223846793005ULL + inc
        xorshifted = <u32>(((old >> 18) ^ old) >> 27)
        rot = <u32>(old >> 59)
        out[i] = (xorshifted >> rot) | (xorshifted << ((-rot) & 31))
    return out, int(state)


cdef inline void _t_range(double s, double c, double sn, double lim, double dt,
                          Py_ssize_t n_t, Py_ssize_t *q0, Py_ssize_t *q1) nogil:
    # Index range of t samples whose point can touch the image (with margin).
    cdef double tlo = -1e300, thi = 1e300, a, b, tmp, half
    if fabs(sn) > 1e-15:
        a = (s * c - lim) / sn
        b = (s * c + lim) / sn
        if a > b:
            tmp = a; a = b; b = tmp
        if a > tlo: tlo = a
        if b < thi: thi = b
    elif fabs(s * c) >= lim:
        q0[0] = 0; q1[0] = -1
        return
    if fabs(c) > 1e-15:
        a = (-lim - s * sn) / c
        b = (lim - s * sn) / c
        if a > b:
            tmp = a; a = b; b = tmp
        if a > tlo: tlo = a
        if b < thi: thi = b
    elif fabs(s * sn) >= lim:
        q0[0] = 0; q1[0] = -1
        return
    half = (n_t - 1) * 0.5
    if tlo < -half * dt - dt: tlo = -half * dt - dt
    if thi > half * dt + dt: thi = half * dt + dt
    q0[0] = <Py_ssize_t>floor(tlo / dt + half) - 1
    q1[0] = <Py_ssize_t>ceil(thi / dt + half) + 1
    if q0[0] < 0: q0[0] = 0
    if q1[0] > n_t - 1: q1[0] = n_t - 1


def radon_forward(double[:, ::1] img, double[::1] cos_t, double[::1] sin_t,
                  double[::1] s_det, double dt, Py_ssize_t n_t):
    cdef Py_ssize_t n = img.shape[0]
    cdef Py_ssize_t nv = cos_t.shape[0], nd = s_det.shape[0]
    cdef cnp.ndarray[cnp.float64_t, ndim=2] out_arr = np.zeros((nv, nd))
    cdef double[:, ::1] out = out_arr
    cdef double h = 2.0 / n, inv_h = n / 2.0
    cdef double lim = 1.0 + h
    cdef double half = (n_t - 1) * 0.5
    cdef Py_ssize_t k, m, q, q0, q1, i0, j0
    cdef double c, sn, s, u, v, u0, v0, du, dv, wx, wy, acc
    with nogil:
        for k in range(nv):
            c = cos_t[k]
            sn = sin_t[k]
            for m in range(nd):
                s = s_det[m]
                _t_range(s, c, sn, lim, dt, n_t, &q0, &q1)
                acc = 0.0
                # shifted pixel coordinates u + 1, v + 1 are affine in q
                u0 = (s * c + half * dt * sn + 1.0) * inv_h + 0.5
                v0 = (s * sn - half * dt * c + 1.0) * inv_h + 0.5
                du = -dt * sn * inv_h
                dv = dt * c * inv_h
                for q in range(q0, q1 + 1):
                    u = u0 + q * du
                    v = v0 + q * dv
                    # truncation is floor for non-negative values
                    if u < 0.0 or v < 0.0:
                        continue
                    j0 = <Py_ssize_t>u
                    i0 = <Py_ssize_t>v
                    if j0 > n or i0 > n:
                        continue
                    wx = u - j0
                    wy = v - i0
                    j0 -= 1
                    i0 -= 1
                    if 0 <= i0 < n - 1 and 0 <= j0 < n - 1:
                        acc += ((1.0 - wy) * ((1.0 - wx) * img[i0, j0] + wx * img[i0, j0 + 1])
                                + wy * ((1.0 - wx) * img[i0 + 1, j0] + wx * img[i0 + 1, j0 + 1]))
                        continue
                    if i0 >= 0:
                        if j0 >= 0:
                            acc += (1.0 - wy) * (1.0 - wx) * img[i0, j0]
                        if j0 + 1 < n:
                            acc += (1.0 - wy) * wx * img[i0, j0 + 1]
                    if i0 + 1 < n:
                        if j0 >= 0:
                            acc += wy * (1.0 - wx) * img[i0 + 1, j0]
                        if j0 + 1 < n:
                            acc += wy * wx * img[i0 + 1, j0 + 1]
                out[k, m] = acc * dt
    return out_arr


def radon_adjoint(double[:, ::1] sino, double[::1] cos_t, double[::1] sin_t,
                  double[::1] s_det, double dt, Py_ssize_t n_t, Py_ssize_t n):
    cdef Py_ssize_t nv = cos_t.shape[0], nd = s_det.shape[0]
    cdef cnp.ndarray[cnp.float64_t, ndim=2] img_arr = np.zeros((n, n))
    cdef double[:, ::1] img = img_arr
    cdef double h = 2.0 / n, inv_h = n / 2.0
    cdef double lim = 1.0 + h
    cdef double half = (n_t - 1) * 0.5
    cdef Py_ssize_t k, m, q, q0, q1, i0, j0
    cdef double c, sn, s, u, v, u0, v0, du, dv, wx, wy, val
    with nogil:
        for k in range(nv):
            c = cos_t[k]
            sn = sin_t[k]
            for m in range(nd):
                val = sino[k, m] * dt
                if val == 0.0:
                    continue
                s = s_det[m]
                _t_range(s, c, sn, lim, dt, n_t, &q0, &q1)
                # shifted pixel coordinates u + 1, v + 1 are affine in q
                u0 = (s * c + half * dt * sn + 1.0) * inv_h + 0.5
                v0 = (s * sn - half * dt * c + 1.0) * inv_h + 0.5
                du = -dt * sn * inv_h
                dv = dt * c * inv_h
                for q in range(q0, q1 + 1):
                    u = u0 + q * du
                    v = v0 + q * dv
                    # truncation is floor for non-negative values
                    if u < 0.0 or v < 0.0:
                        continue
                    j0 = <Py_ssize_t>u
                    i0 = <Py_ssize_t>v
                    if j0 > n or i0 > n:
                        continue
                    wx = u - j0
                    wy = v - i0
                    j0 -= 1
                    i0 -= 1
                    if 0 <= i0 < n - 1 and 0 <= j0 < n - 1:
                        img[i0, j0] += (1.0 - wy) * (1.0 - wx) * val
                        img[i0, j0 + 1] += (1.0 - wy) * wx * val
                        img[i0 + 1, j0] += wy * (1.0 - wx) * val
                        img[i0 + 1, j0 + 1] += wy * wx * val
                        continue
                    if i0 >= 0:
                        if j0 >= 0:
                            img[i0, j0] += (1.0 - wy) * (1.0 - wx) * val
                        if j0 + 1 < n:
                            img[i0, j0 + 1] += (1.0 - wy) * wx * val
                    if i0 + 1 < n:
                        if j0 >= 0:
                            img[i0 + 1, j0] += wy * (1.0 - wx) * val
                        if j0 + 1 < n:
                            img[i0 + 1, j0 + 1] += wy * wx * val
    return img_arr


def backproject(double[:, ::1] q, double[::1] cos_t, double[::1] sin_t,
                double det_pitch, Py_ssize_t n):
    """Sum over views of q(view, x.theta) with linear detector interpolation."""
    cdef Py_ssize_t nv = q.shape[0], nd = q.shape[1]
    cdef cnp.ndarray[cnp.float64_t, ndim=2] img_arr = np.zeros((n, n))
    cdef double[:, ::1] img = img_arr
    cdef double h = 2.0 / n
    cdef double center = (nd - 1) * 0.5, inv_p = 1.0 / det_pitch
    cdef Py_ssize_t k, i, j, m0
    cdef double c, sn, x, y, idx, w, val, base
    with nogil:
        for k in range(nv):
            c = cos_t[k]
            sn = sin_t[k]
            for i in range(n):
                y = -1.0 + (i + 0.5) * h
                base = y * sn * inv_p + center
                for j in range(n):
                    x = -1.0 + (j + 0.5) * h
                    idx = x * c * inv_p + base
                    m0 = <Py_ssize_t>floor(idx)
                    if m0 < -1 or m0 > nd - 1:
                        continue
                    w = idx - m0
                    val = 0.0
                    if m0 >= 0:
                        val = (1.0 - w) * q[k, m0]
                    if m0 + 1 < nd:
                        val += w * q[k, m0 + 1]
                    img[i, j] += val
    return img_arr
