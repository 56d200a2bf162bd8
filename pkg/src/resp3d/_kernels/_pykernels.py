"""Pure numpy implementations of the hot kernels.

Every function here has a twin with the same signature in ``_ckernels.pyx``.
Arrays are C-contiguous, layout ``[N, C, T, H, W]``.
"""

import numpy as np


def conv_out_shape(T, H, W, kt, kh, kw, pt, ph, pw, sh, sw):
    return (
        T + 2 * pt - kt + 1,
        (H + 2 * ph - kh) // sh + 1,
        (W + 2 * pw - kw) // sw + 1,
    )


def im2col(x, kt, kh, kw, pt, ph, pw, sh, sw):
    """Unfold ``x`` into ``[N, C*kt*kh*kw, To*Ho*Wo]`` with zero padding (time stride 1)."""
    N, C, T, H, W = x.shape
    To, Ho, Wo = conv_out_shape(T, H, W, kt, kh, kw, pt, ph, pw, sh, sw)
    xp = np.pad(x, ((0, 0), (0, 0), (pt, pt), (ph, ph), (pw, pw)))
    cols = np.empty((N, C, kt, kh, kw, To, Ho, Wo), dtype=x.dtype)
    for a in range(kt):
        for b in range(kh):
            for d in range(kw):
                cols[:, :, a, b, d] = xp[:, :, a:a + To, b:b + sh * (Ho - 1) + 1:sh, d:d + sw * (Wo - 1) + 1:sw]
    return cols.reshape(N, C * kt * kh * kw, To * Ho * Wo)


def col2im(cols, shape, kt, kh, kw, pt, ph, pw, sh, sw):
    """Adjoint of :func:`im2col`: scatter-add columns back into an input-shaped array."""
    N, C, T, H, W = shape
    To, Ho, Wo = conv_out_shape(T, H, W, kt, kh, kw, pt, ph, pw, sh, sw)
    cols = cols.reshape(N, C, kt, kh, kw, To, Ho, Wo)
    dxp = np.zeros((N, C, T + 2 * pt, H + 2 * ph, W + 2 * pw), dtype=cols.dtype)
    for a in range(kt):
        for b in range(kh):
            for d in range(kw):
                dxp[:, :, a:a + To, b:b + sh * (Ho - 1) + 1:sh, d:d + sw * (Wo - 1) + 1:sw] += cols[:, :, a, b, d]
    return np.ascontiguousarray(dxp[:, :, pt:pt + T, ph:ph + H, pw:pw + W])


def bn_stats(x):
    """Per-channel biased mean and variance of ``x`` viewed as ``[N, C, P]``."""
    N, C = x.shape[:2]
    v = x.reshape(N, C, -1)
    mean = v.mean(axis=(0, 2), dtype=np.float64)
    var = np.square(v - mean[None, :, None].astype(x.dtype)).mean(axis=(0, 2), dtype=np.float64)
    return mean.astype(x.dtype), var.astype(x.dtype)


def bn_apply(x, mean, invstd, gamma, beta):
    N, C = x.shape[:2]
    v = x.reshape(N, C, -1)
    scale = (gamma * invstd)[None, :, None]
    shift = (beta - mean * gamma * invstd)[None, :, None]
    return (v * scale + shift).reshape(x.shape)


def bn_backward(dy, x, mean, invstd, gamma):
    """Gradients of train-mode batch norm w.r.t. input, gamma and beta."""
    N, C = x.shape[:2]
    dyv = dy.reshape(N, C, -1)
    xhat = (x.reshape(N, C, -1) - mean[None, :, None]) * invstd[None, :, None]
    m = dyv.shape[0] * dyv.shape[2]
    dbeta = dyv.sum(axis=(0, 2))
    dgamma = (dyv * xhat).sum(axis=(0, 2))
    dx = (gamma * invstd / m)[None, :, None] * (
        m * dyv - dbeta[None, :, None] - xhat * dgamma[None, :, None]
    )
    return dx.reshape(x.shape), dgamma, dbeta


def feature_residual_forward(f):
    out = np.zeros_like(f)
    np.abs(f[:, :, 1:] - f[:, :, :-1], out=out[:, :, :-1])
    return out


def feature_residual_backward(f, g):
    s = np.sign(f[:, :, 1:] - f[:, :, :-1]) * g[:, :, :-1]
    df = np.zeros_like(f)
    df[:, :, 1:] += s
    df[:, :, :-1] -= s
    return df
