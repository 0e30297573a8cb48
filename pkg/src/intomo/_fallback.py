"""Pure-numpy versions of the kernels in ``_core.pyx``.

Same discretization, vectorized per view; results agree with the compiled
kernels up to floating-point summation order.
"""

import numpy as np


def pcg32_fill(state, inc, count):
    mask = (1 << 64) - 1
    out = np.empty(count, dtype=np.uint32)
    for i in range(count):
        old = state
        state = (old * 6364136223846793005 + inc) & mask
        xorshifted = (((old >> 18) ^ old) >> 27) & 0xFFFFFFFF
        rot = old >> 59
        out[i] = ((xorshifted >> rot) | (xorshifted << ((-rot) & 31))) & 0xFFFFFFFF
    return out, state


def _ray_samples(n, c, sn, s_det, dt, n_t):
    h = 2.0 / n
    t = (np.arange(n_t) - (n_t - 1) * 0.5) * dt
    px = s_det[:, None] * c - t[None, :] * sn
    py = s_det[:, None] * sn + t[None, :] * c
    u = (px + 1.0) / h - 0.5
    v = (py + 1.0) / h - 0.5
    j0 = np.floor(u).astype(np.intp)
    i0 = np.floor(v).astype(np.intp)
    wx = u - j0
    wy = v - i0
    corners = []
    for di, dj, w in ((0, 0, (1 - wy) * (1 - wx)), (0, 1, (1 - wy) * wx),
                      (1, 0, wy * (1 - wx)), (1, 1, wy * wx)):
        ii = i0 + di
        jj = j0 + dj
        ok = (ii >= 0) & (ii < n) & (jj >= 0) & (jj < n)
        corners.append((np.where(ok, ii, 0), np.where(ok, jj, 0), np.where(ok, w, 0.0)))
    return corners


def radon_forward(img, cos_t, sin_t, s_det, dt, n_t):
    n = img.shape[0]
    out = np.zeros((len(cos_t), len(s_det)))
    for k, (c, sn) in enumerate(zip(cos_t, sin_t)):
        acc = np.zeros((len(s_det), n_t))
        for ii, jj, w in _ray_samples(n, c, sn, s_det, dt, n_t):
            acc += w * img[ii, jj]
        out[k] = acc.sum(axis=1) * dt
    return out


def radon_adjoint(sino, cos_t, sin_t, s_det, dt, n_t, n):
    img = np.zeros(n * n)
    for k, (c, sn) in enumerate(zip(cos_t, sin_t)):
        val = sino[k][:, None] * dt
        for ii, jj, w in _ray_samples(n, c, sn, s_det, dt, n_t):
            img += np.bincount((ii * n + jj).ravel(), weights=(w * val).ravel(),
                               minlength=n * n)
    return img.reshape(n, n)


def backproject(q, cos_t, sin_t, det_pitch, n):
    nv, nd = q.shape
    h = 2.0 / n
    coords = -1.0 + (np.arange(n) + 0.5) * h
    x = coords[None, :]
    y = coords[:, None]
    center = (nd - 1) * 0.5
    img = np.zeros((n, n))
    padded = np.zeros((nv, nd + 2))
    padded[:, 1:-1] = q
    for k in range(nv):
        idx = x * (cos_t[k] / det_pitch) + (y * (sin_t[k] / det_pitch) + center)
        m0 = np.floor(idx).astype(np.intp)
        w = idx - m0
        inside = (m0 >= -1) & (m0 <= nd - 1)
        m0 = np.where(inside, m0, -1)
        w = np.where(inside, w, 0.0)
        # padded column m + 1 holds detector m; columns 0 and nd + 1 are zero
        img += (1.0 - w) * padded[k, m0 + 1] + w * padded[k, m0 + 2]
    return img
