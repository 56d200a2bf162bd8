# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled twins of the kernels in ``_pykernels``; same signatures and semantics."""

import numpy as np
from cython cimport floating


def conv_out_shape(int T, int H, int W, int kt, int kh, int kw,
                   int pt, int ph, int pw, int sh, int sw):
    return (T + 2 * pt - kt + 1, (H + 2 * ph - kh) // sh + 1, (W + 2 * pw - kw) // sw + 1)


cdef inline void _jrange(Py_ssize_t Wo, Py_ssize_t W, int sw, Py_ssize_t off,
                         Py_ssize_t* j0, Py_ssize_t* j1) noexcept nogil:
    # valid output columns j with 0 <= j*sw + off < W
    cdef Py_ssize_t lo = 0, hi
    if off < 0:
        lo = (-off + sw - 1) // sw
    if W - off <= 0:
        hi = 0
    else:
        hi = (W - off - 1) // sw + 1
    if hi > Wo:
        hi = Wo
    j0[0] = lo
    j1[0] = hi if hi > lo else lo


def im2col(floating[:, :, :, :, ::1] x, int kt, int kh, int kw,
           int pt, int ph, int pw, int sh, int sw):
    cdef Py_ssize_t N = x.shape[0], C = x.shape[1], T = x.shape[2], H = x.shape[3], W = x.shape[4]
    cdef Py_ssize_t To = T + 2 * pt - kt + 1
    cdef Py_ssize_t Ho = (H + 2 * ph - kh) // sh + 1
    cdef Py_ssize_t Wo = (W + 2 * pw - kw) // sw + 1
    dtype = np.float32 if floating is float else np.float64
    out = np.zeros((N, C * kt * kh * kw, To * Ho * Wo), dtype=dtype)
    cdef floating[:, :, ::1] o = out
    cdef Py_ssize_t n, c, a, b, d, t, i, j, j0, j1, row, ti, hi, off
    cdef floating* src
    cdef floating* dst
    with nogil:
        for n in range(N):
            for c in range(C):
                for a in range(kt):
                    for b in range(kh):
                        for d in range(kw):
                            row = ((c * kt + a) * kh + b) * kw + d
                            off = d - pw
                            _jrange(Wo, W, sw, off, &j0, &j1)
                            for t in range(To):
                                ti = t + a - pt
                                if ti < 0 or ti >= T:
                                    continue
                                for i in range(Ho):
                                    hi = i * sh + b - ph
                                    if hi < 0 or hi >= H:
                                        continue
                                    src = &x[n, c, ti, hi, 0]
                                    dst = &o[n, row, (t * Ho + i) * Wo]
                                    if sw == 1:
                                        for j in range(j0, j1):
                                            dst[j] = src[j + off]
                                    else:
                                        for j in range(j0, j1):
                                            dst[j] = src[j * sw + off]
    return out


def col2im(floating[:, :, ::1] cols, shape, int kt, int kh, int kw,
           int pt, int ph, int pw, int sh, int sw):
    cdef Py_ssize_t N = shape[0], C = shape[1], T = shape[2], H = shape[3], W = shape[4]
    cdef Py_ssize_t To = T + 2 * pt - kt + 1
    cdef Py_ssize_t Ho = (H + 2 * ph - kh) // sh + 1
    cdef Py_ssize_t Wo = (W + 2 * pw - kw) // sw + 1
    dtype = np.float32 if floating is float else np.float64
    out = np.zeros((N, C, T, H, W), dtype=dtype)
    cdef floating[:, :, :, :, ::1] dx = out
    cdef Py_ssize_t n, c, a, b, d, t, i, j, j0, j1, row, ti, hi, off
    cdef floating* src
    cdef floating* dst
    with nogil:
        for n in range(N):
            for c in range(C):
                for a in range(kt):
                    for b in range(kh):
                        for d in range(kw):
                            row = ((c * kt + a) * kh + b) * kw + d
                            off = d - pw
                            _jrange(Wo, W, sw, off, &j0, &j1)
                            for t in range(To):
                                ti = t + a - pt
                                if ti < 0 or ti >= T:
                                    continue
                                for i in range(Ho):
                                    hi = i * sh + b - ph
                                    if hi < 0 or hi >= H:
                                        continue
                                    dst = &dx[n, c, ti, hi, 0]
                                    src = &cols[n, row, (t * Ho + i) * Wo]
                                    if sw == 1:
                                        for j in range(j0, j1):
                                            dst[j + off] += src[j]
                                    else:
                                        for j in range(j0, j1):
                                            dst[j * sw + off] += src[j]
    return out


def bn_stats(x):
    cdef Py_ssize_t N = x.shape[0], C = x.shape[1]
    return _bn_stats(np.ascontiguousarray(x).reshape(N, C, -1))


def _bn_stats(floating[:, :, ::1] v):
    cdef Py_ssize_t N = v.shape[0], C = v.shape[1], P = v.shape[2]
    cdef Py_ssize_t n, c, p
    cdef double s, m, diff
    dtype = np.float32 if floating is float else np.float64
    mean = np.empty(C, dtype=dtype)
    var = np.empty(C, dtype=dtype)
    cdef floating[::1] mv = mean, vv = var
    cdef double count = N * P
    with nogil:
        for c in range(C):
            s = 0.0
            for n in range(N):
                for p in range(P):
                    s = s + v[n, c, p]
            m = s / count
            s = 0.0
            for n in range(N):
                for p in range(P):
                    diff = v[n, c, p] - m
                    s = s + diff * diff
            mv[c] = <floating>m
            vv[c] = <floating>(s / count)
    return mean, var


def _cast(x, *arrays):
    # per-channel vectors follow the activation dtype (fused types need one precision)
    return [np.ascontiguousarray(a, dtype=x.dtype) for a in arrays]


def bn_apply(x, mean, invstd, gamma, beta):
    N, C = x.shape[:2]
    mean, invstd, gamma, beta = _cast(x, mean, invstd, gamma, beta)
    out = np.empty_like(x)
    _bn_apply(np.ascontiguousarray(x).reshape(N, C, -1), out.reshape(N, C, -1),
              mean, invstd, gamma, beta)
    return out


def _bn_apply(floating[:, :, ::1] v, floating[:, :, ::1] o, floating[::1] mean,
              floating[::1] invstd, floating[::1] gamma, floating[::1] beta):
    cdef Py_ssize_t N = v.shape[0], C = v.shape[1], P = v.shape[2]
    cdef Py_ssize_t n, c, p
    cdef floating scale, shift
    with nogil:
        for n in range(N):
            for c in range(C):
                scale = gamma[c] * invstd[c]
                shift = beta[c] - mean[c] * scale
                for p in range(P):
                    o[n, c, p] = v[n, c, p] * scale + shift
    return o


def bn_backward(dy, x, mean, invstd, gamma):
    N, C = x.shape[:2]
    dy, mean, invstd, gamma = _cast(x, dy, mean, invstd, gamma)
    dx = np.empty_like(x)
    dgamma = np.empty_like(gamma)
    dbeta = np.empty_like(gamma)
    _bn_backward(np.ascontiguousarray(dy).reshape(N, C, -1), np.ascontiguousarray(x).reshape(N, C, -1),
                 dx.reshape(N, C, -1), mean, invstd, gamma, dgamma, dbeta)
    return dx, dgamma, dbeta


def _bn_backward(floating[:, :, ::1] dy, floating[:, :, ::1] x, floating[:, :, ::1] dx,
                 floating[::1] mean, floating[::1] invstd, floating[::1] gamma,
                 floating[::1] dgamma, floating[::1] dbeta):
    cdef Py_ssize_t N = x.shape[0], C = x.shape[1], P = x.shape[2]
    cdef Py_ssize_t n, c, p
    cdef double sb, sg, m = N * P, xhat, k
    with nogil:
        for c in range(C):
            sb = 0.0
            sg = 0.0
            for n in range(N):
                for p in range(P):
                    xhat = (x[n, c, p] - mean[c]) * invstd[c]
                    sb = sb + dy[n, c, p]
                    sg = sg + dy[n, c, p] * xhat
            dbeta[c] = <floating>sb
            dgamma[c] = <floating>sg
            k = gamma[c] * invstd[c] / m
            for n in range(N):
                for p in range(P):
                    xhat = (x[n, c, p] - mean[c]) * invstd[c]
                    dx[n, c, p] = <floating>(k * (m * dy[n, c, p] - sb - xhat * sg))


def feature_residual_forward(f):
    out = np.zeros_like(f)
    N, C, T = f.shape[:3]
    _fres_fwd(np.ascontiguousarray(f).reshape(N, C, T, -1), out.reshape(N, C, T, -1))
    return out


def _fres_fwd(floating[:, :, :, ::1] f, floating[:, :, :, ::1] o):
    cdef Py_ssize_t N = f.shape[0], C = f.shape[1], T = f.shape[2], P = f.shape[3]
    cdef Py_ssize_t n, c, t, p
    cdef floating d
    with nogil:
        for n in range(N):
            for c in range(C):
                for t in range(T - 1):
                    for p in range(P):
                        d = f[n, c, t + 1, p] - f[n, c, t, p]
                        o[n, c, t, p] = d if d >= 0 else -d


def feature_residual_backward(f, g):
    df = np.zeros_like(f)
    N, C, T = f.shape[:3]
    _fres_bwd(np.ascontiguousarray(f).reshape(N, C, T, -1), np.ascontiguousarray(g).reshape(N, C, T, -1),
              df.reshape(N, C, T, -1))
    return df


def _fres_bwd(floating[:, :, :, ::1] f, floating[:, :, :, ::1] g, floating[:, :, :, ::1] df):
    cdef Py_ssize_t N = f.shape[0], C = f.shape[1], T = f.shape[2], P = f.shape[3]
    cdef Py_ssize_t n, c, t, p
    cdef floating d, s
    cdef floating* a
    cdef floating* b
    cdef floating* gg
    cdef floating* da
    cdef floating* db
    with nogil:
        for n in range(N):
            for c in range(C):
                for t in range(T - 1):
                    a = &f[n, c, t, 0]
                    b = &f[n, c, t + 1, 0]
                    gg = &g[n, c, t, 0]
                    da = &df[n, c, t, 0]
                    db = &df[n, c, t + 1, 0]
                    for p in range(P):
                        d = b[p] - a[p]
                        # sign(d) * g, zero subgradient at d == 0
                        s = ((d > 0) - (d < 0)) * gg[p]
                        db[p] += s
                        da[p] -= s
