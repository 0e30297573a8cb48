"""Forward/backward pairs for the layers of the U-Net.

Tensors are (batch, channels, height, width) arrays. Each ``*_forward``
returns ``(out, cache)`` and the matching ``*_backward(dout, cache)`` returns
the gradients, in the order of the forward arguments.
"""

import numpy as np

BN_EPS = 1e-5
BN_MOMENTUM = 0.9


def conv2d_forward(x, w, b):
    """Stride-1 cross-correlation, zero padding kh // 2 ("same" output size).

    Inputs:
    - x: (N, C, H, W)
    - w: (F, C, kh, kw) with kh, kw odd (3x3 or 1x1 here)
    - b: (F,)
    """
    n, c, h, wd = x.shape
    f, c2, kh, kw = w.shape
    if c2 != c:
        raise ValueError(f"kernel expects {c2} channels, input has {c}")
    ph, pw = kh // 2, kw // 2
    if kh == 1 and kw == 1:
        cols = x.transpose(1, 0, 2, 3).reshape(c, -1)
    else:
        xp = np.pad(x, ((0, 0), (0, 0), (ph, ph), (pw, pw)))
        cols = np.empty((c, kh * kw, n, h, wd), dtype=x.dtype)
        for k in range(kh * kw):
            di, dj = divmod(k, kw)
            cols[:, k] = xp[:, :, di:di + h, dj:dj + wd].transpose(1, 0, 2, 3)
        cols = cols.reshape(c * kh * kw, -1)
    out = w.reshape(f, -1) @ cols + b[:, None]
    out = out.reshape(f, n, h, wd).transpose(1, 0, 2, 3)
    return out, (x.shape, w, cols)


def conv2d_backward(dout, cache):
    xshape, w, cols = cache
    n, c, h, wd = xshape
    f, _, kh, kw = w.shape
    dmat = dout.transpose(1, 0, 2, 3).reshape(f, -1)
    dw = (dmat @ cols.T).reshape(w.shape)
    db = dmat.sum(axis=1)
    dcols = w.reshape(f, -1).T @ dmat
    if kh == 1 and kw == 1:
        dx = dcols.reshape(c, n, h, wd).transpose(1, 0, 2, 3)
        return np.ascontiguousarray(dx), dw, db
    ph, pw = kh // 2, kw // 2
    dcols = dcols.reshape(c, kh * kw, n, h, wd)
    dxp = np.zeros((n, c, h + 2 * ph, wd + 2 * pw), dtype=dout.dtype)
    for k in range(kh * kw):
        di, dj = divmod(k, kw)
        dxp[:, :, di:di + h, dj:dj + wd] += dcols[:, k].transpose(1, 0, 2, 3)
    return dxp[:, :, ph:ph + h, pw:pw + wd], dw, db


def relu_forward(x):
    return np.maximum(x, 0), x


def relu_backward(dout, cache):
    return dout * (cache > 0)


def batchnorm_forward(x, gamma, beta, running_mean, running_var, train):
    """Per-channel normalization over (batch, H, W).

    Train mode normalizes with batch statistics and also returns the updated
    running statistics (momentum 0.9); infer mode uses the running statistics
    and returns them unchanged.

    Returns (out, cache, (new_running_mean, new_running_var)).
    """
    shape = (1, -1, 1, 1)
    if train:
        mean = x.mean(axis=(0, 2, 3))
        var = x.var(axis=(0, 2, 3))
        new_mean = BN_MOMENTUM * running_mean + (1 - BN_MOMENTUM) * mean
        new_var = BN_MOMENTUM * running_var + (1 - BN_MOMENTUM) * var
    else:
        mean, var = running_mean, running_var
        new_mean, new_var = running_mean, running_var
    inv_std = 1.0 / np.sqrt(var + BN_EPS)
    xhat = (x - mean.reshape(shape)) * inv_std.reshape(shape)
    out = gamma.reshape(shape) * xhat + beta.reshape(shape)
    return out, (xhat, gamma, inv_std, train), (new_mean, new_var)


def batchnorm_backward(dout, cache):
    """Returns (dx, dgamma, dbeta); train mode differentiates through the batch statistics."""
    xhat, gamma, inv_std, train = cache
    shape = (1, -1, 1, 1)
    dgamma = (dout * xhat).sum(axis=(0, 2, 3))
    dbeta = dout.sum(axis=(0, 2, 3))
    dxhat = dout * gamma.reshape(shape)
    if not train:
        return dxhat * inv_std.reshape(shape), dgamma, dbeta
    m = dout.shape[0] * dout.shape[2] * dout.shape[3]
    dx = (inv_std.reshape(shape) / m) * (
        m * dxhat
        - dxhat.sum(axis=(0, 2, 3)).reshape(shape)
        - xhat * (dxhat * xhat).sum(axis=(0, 2, 3)).reshape(shape)
    )
    return dx, dgamma, dbeta


def avgpool2_forward(x):
    n, c, h, w = x.shape
    if h % 2 or w % 2:
        raise ValueError("average pooling needs even spatial dims")
    out = x.reshape(n, c, h // 2, 2, w // 2, 2).mean(axis=(3, 5))
    return out, x.shape


def avgpool2_backward(dout, cache):
    # each input pixel receives a quarter of its block's gradient
    return np.repeat(np.repeat(dout, 2, axis=2), 2, axis=3) * 0.25


def avgunpool2_forward(x):
    """Replicate every value into its 2x2 block."""
    return np.repeat(np.repeat(x, 2, axis=2), 2, axis=3), x.shape


def avgunpool2_backward(dout, cache):
    n, c, h, w = dout.shape
    return dout.reshape(n, c, h // 2, 2, w // 2, 2).sum(axis=(3, 5))


def concat_forward(a, b):
    return np.concatenate([a, b], axis=1), a.shape[1]


def concat_backward(dout, cache):
    split = cache
    return dout[:, :split], dout[:, split:]
