# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled twin of ``_ref``: single-pass loops instead of strided numpy copies.

Same signatures, same layout conventions, bit-identical results.
"""

import numpy as np

cimport cython


ctypedef fused real:
    float
    double


cdef inline object _empty(shape, bint is_double):
    return np.empty(shape, dtype=np.float64 if is_double else np.float32)


cdef inline object _zeros(shape, bint is_double):
    return np.zeros(shape, dtype=np.float64 if is_double else np.float32)


def im2col2d(real[:, :, :, ::1] x, Py_ssize_t kh, Py_ssize_t kw,
             Py_ssize_t sh, Py_ssize_t sw,
             Py_ssize_t ph0, Py_ssize_t ph1, Py_ssize_t pw0, Py_ssize_t pw1):
    cdef Py_ssize_t n = x.shape[0], c = x.shape[1], h = x.shape[2], w = x.shape[3]
    cdef Py_ssize_t oh = (h + ph0 + ph1 - kh) // sh + 1
    cdef Py_ssize_t ow = (w + pw0 + pw1 - kw) // sw + 1
    out_np = _zeros((n, c * kh * kw, oh * ow), real is double)
    cdef real[:, :, ::1] out = out_np
    cdef Py_ssize_t b, ci, i, j, oi, oj, yi, xj, row
    with nogil:
        for b in range(n):
            for ci in range(c):
                for i in range(kh):
                    for j in range(kw):
                        row = (ci * kh + i) * kw + j
                        for oi in range(oh):
                            yi = oi * sh + i - ph0
                            if yi < 0 or yi >= h:
                                continue
                            for oj in range(ow):
                                xj = oj * sw + j - pw0
                                if 0 <= xj < w:
                                    out[b, row, oi * ow + oj] = x[b, ci, yi, xj]
    return out_np


def col2im2d(real[:, :, ::1] cols, Py_ssize_t h, Py_ssize_t w,
             Py_ssize_t kh, Py_ssize_t kw, Py_ssize_t sh, Py_ssize_t sw,
             Py_ssize_t ph0, Py_ssize_t ph1, Py_ssize_t pw0, Py_ssize_t pw1):
    cdef Py_ssize_t n = cols.shape[0]
    cdef Py_ssize_t c = cols.shape[1] // (kh * kw)
    cdef Py_ssize_t oh = (h + ph0 + ph1 - kh) // sh + 1
    cdef Py_ssize_t ow = (w + pw0 + pw1 - kw) // sw + 1
    out_np = _zeros((n, c, h, w), real is double)
    cdef real[:, :, :, ::1] out = out_np
    cdef Py_ssize_t b, ci, i, j, oi, oj, yi, xj, row
    with nogil:
        for b in range(n):
            for ci in range(c):
                for i in range(kh):
                    for j in range(kw):
                        row = (ci * kh + i) * kw + j
                        for oi in range(oh):
                            yi = oi * sh + i - ph0
                            if yi < 0 or yi >= h:
                                continue
                            for oj in range(ow):
                                xj = oj * sw + j - pw0
                                if 0 <= xj < w:
                                    out[b, ci, yi, xj] += cols[b, row, oi * ow + oj]
    return out_np


def im2col3d(real[:, :, :, :, ::1] x, Py_ssize_t kd, Py_ssize_t kh, Py_ssize_t kw,
             Py_ssize_t sd, Py_ssize_t sh, Py_ssize_t sw,
             Py_ssize_t pd0, Py_ssize_t pd1, Py_ssize_t ph0, Py_ssize_t ph1,
             Py_ssize_t pw0, Py_ssize_t pw1):
    cdef Py_ssize_t n = x.shape[0], c = x.shape[1]
    cdef Py_ssize_t d = x.shape[2], h = x.shape[3], w = x.shape[4]
    cdef Py_ssize_t od = (d + pd0 + pd1 - kd) // sd + 1
    cdef Py_ssize_t oh = (h + ph0 + ph1 - kh) // sh + 1
    cdef Py_ssize_t ow = (w + pw0 + pw1 - kw) // sw + 1
    out_np = _zeros((n, c * kd * kh * kw, od * oh * ow), real is double)
    cdef real[:, :, ::1] out = out_np
    cdef Py_ssize_t b, ci, a, i, j, oa, oi, oj, za, yi, xj, row, base
    with nogil:
        for b in range(n):
            for ci in range(c):
                for a in range(kd):
                    for i in range(kh):
                        for j in range(kw):
                            row = ((ci * kd + a) * kh + i) * kw + j
                            for oa in range(od):
                                za = oa * sd + a - pd0
                                if za < 0 or za >= d:
                                    continue
                                for oi in range(oh):
                                    yi = oi * sh + i - ph0
                                    if yi < 0 or yi >= h:
                                        continue
                                    base = (oa * oh + oi) * ow
                                    for oj in range(ow):
                                        xj = oj * sw + j - pw0
                                        if 0 <= xj < w:
                                            out[b, row, base + oj] = x[b, ci, za, yi, xj]
    return out_np


def col2im3d(real[:, :, ::1] cols, Py_ssize_t d, Py_ssize_t h, Py_ssize_t w,
             Py_ssize_t kd, Py_ssize_t kh, Py_ssize_t kw,
             Py_ssize_t sd, Py_ssize_t sh, Py_ssize_t sw,
             Py_ssize_t pd0, Py_ssize_t pd1, Py_ssize_t ph0, Py_ssize_t ph1,
             Py_ssize_t pw0, Py_ssize_t pw1):
    cdef Py_ssize_t n = cols.shape[0]
    cdef Py_ssize_t c = cols.shape[1] // (kd * kh * kw)
    cdef Py_ssize_t od = (d + pd0 + pd1 - kd) // sd + 1
    cdef Py_ssize_t oh = (h + ph0 + ph1 - kh) // sh + 1
    cdef Py_ssize_t ow = (w + pw0 + pw1 - kw) // sw + 1
    out_np = _zeros((n, c, d, h, w), real is double)
    cdef real[:, :, :, :, ::1] out = out_np
    cdef Py_ssize_t b, ci, a, i, j, oa, oi, oj, za, yi, xj, row, base
    with nogil:
        for b in range(n):
            for ci in range(c):
                for a in range(kd):
                    for i in range(kh):
                        for j in range(kw):
                            row = ((ci * kd + a) * kh + i) * kw + j
                            for oa in range(od):
                                za = oa * sd + a - pd0
                                if za < 0 or za >= d:
                                    continue
                                for oi in range(oh):
                                    yi = oi * sh + i - ph0
                                    if yi < 0 or yi >= h:
                                        continue
                                    base = (oa * oh + oi) * ow
                                    for oj in range(ow):
                                        xj = oj * sw + j - pw0
                                        if 0 <= xj < w:
                                            out[b, ci, za, yi, xj] += cols[b, row, base + oj]
    return out_np


def maxpool2d(real[:, :, :, ::1] x):
    cdef Py_ssize_t n = x.shape[0], c = x.shape[1], h = x.shape[2], w = x.shape[3]
    cdef Py_ssize_t oh = (h + 1) // 2, ow = (w + 1) // 2
    vals_np = _empty((n, c, oh, ow), real is double)
    idx_np = np.empty((n, c, oh, ow), dtype=np.int64)
    cdef real[:, :, :, ::1] vals = vals_np
    cdef long long[:, :, :, ::1] idx = idx_np
    cdef Py_ssize_t b, ci, oi, oj, i, j, yi, xj, best
    cdef real v, m
    with nogil:
        for b in range(n):
            for ci in range(c):
                for oi in range(oh):
                    for oj in range(ow):
                        best = -1
                        m = 0
                        for i in range(2):
                            yi = 2 * oi + i
                            if yi >= h:
                                break
                            for j in range(2):
                                xj = 2 * oj + j
                                if xj >= w:
                                    break
                                v = x[b, ci, yi, xj]
                                if best < 0 or v > m:
                                    m = v
                                    best = yi * w + xj
                        vals[b, ci, oi, oj] = m
                        idx[b, ci, oi, oj] = best
    return vals_np, idx_np


def maxpool3d(real[:, :, :, :, ::1] x):
    cdef Py_ssize_t n = x.shape[0], c = x.shape[1]
    cdef Py_ssize_t d = x.shape[2], h = x.shape[3], w = x.shape[4]
    cdef Py_ssize_t od = (d + 1) // 2, oh = (h + 1) // 2, ow = (w + 1) // 2
    vals_np = _empty((n, c, od, oh, ow), real is double)
    idx_np = np.empty((n, c, od, oh, ow), dtype=np.int64)
    cdef real[:, :, :, :, ::1] vals = vals_np
    cdef long long[:, :, :, :, ::1] idx = idx_np
    cdef Py_ssize_t b, ci, oa, oi, oj, a, i, j, za, yi, xj, best
    cdef real v, m
    with nogil:
        for b in range(n):
            for ci in range(c):
                for oa in range(od):
                    for oi in range(oh):
                        for oj in range(ow):
                            best = -1
                            m = 0
                            for a in range(2):
                                za = 2 * oa + a
                                if za >= d:
                                    break
                                for i in range(2):
                                    yi = 2 * oi + i
                                    if yi >= h:
                                        break
                                    for j in range(2):
                                        xj = 2 * oj + j
                                        if xj >= w:
                                            break
                                        v = x[b, ci, za, yi, xj]
                                        if best < 0 or v > m:
                                            m = v
                                            best = (za * h + yi) * w + xj
                            vals[b, ci, oa, oi, oj] = m
                            idx[b, ci, oa, oi, oj] = best
    return vals_np, idx_np


def unpool2d(real[:, :, :, ::1] y, long long[:, :, :, ::1] idx, Py_ssize_t h, Py_ssize_t w):
    cdef Py_ssize_t n = y.shape[0], c = y.shape[1], oh = y.shape[2], ow = y.shape[3]
    out_np = _zeros((n, c, h * w), real is double)
    cdef real[:, :, ::1] out = out_np
    cdef Py_ssize_t b, ci, oi, oj
    with nogil:
        for b in range(n):
            for ci in range(c):
                for oi in range(oh):
                    for oj in range(ow):
                        out[b, ci, idx[b, ci, oi, oj]] = y[b, ci, oi, oj]
    return out_np.reshape(n, c, h, w)


def unpool3d(real[:, :, :, :, ::1] y, long long[:, :, :, :, ::1] idx,
             Py_ssize_t d, Py_ssize_t h, Py_ssize_t w):
    cdef Py_ssize_t n = y.shape[0], c = y.shape[1]
    cdef Py_ssize_t od = y.shape[2], oh = y.shape[3], ow = y.shape[4]
    out_np = _zeros((n, c, d * h * w), real is double)
    cdef real[:, :, ::1] out = out_np
    cdef Py_ssize_t b, ci, oa, oi, oj
    with nogil:
        for b in range(n):
            for ci in range(c):
                for oa in range(od):
                    for oi in range(oh):
                        for oj in range(ow):
                            out[b, ci, idx[b, ci, oa, oi, oj]] = y[b, ci, oa, oi, oj]
    return out_np.reshape(n, c, d, h, w)


def gather2d(real[:, :, :, ::1] x, long long[:, :, :, ::1] idx):
    cdef Py_ssize_t n = idx.shape[0], c = idx.shape[1], oh = idx.shape[2], ow = idx.shape[3]
    cdef Py_ssize_t sp = x.shape[2] * x.shape[3]
    out_np = _empty((n, c, oh, ow), real is double)
    cdef real[:, :, :, ::1] out = out_np
    cdef real[:, :, ::1] xf = np.reshape(x, (n, c, sp))
    cdef Py_ssize_t b, ci, oi, oj
    with nogil:
        for b in range(n):
            for ci in range(c):
                for oi in range(oh):
                    for oj in range(ow):
                        out[b, ci, oi, oj] = xf[b, ci, idx[b, ci, oi, oj]]
    return out_np


def gather3d(real[:, :, :, :, ::1] x, long long[:, :, :, :, ::1] idx):
    cdef Py_ssize_t n = idx.shape[0], c = idx.shape[1]
    cdef Py_ssize_t od = idx.shape[2], oh = idx.shape[3], ow = idx.shape[4]
    cdef Py_ssize_t sp = x.shape[2] * x.shape[3] * x.shape[4]
    out_np = _empty((n, c, od, oh, ow), real is double)
    cdef real[:, :, :, :, ::1] out = out_np
    cdef real[:, :, ::1] xf = np.reshape(x, (n, c, sp))
    cdef Py_ssize_t b, ci, oa, oi, oj
    with nogil:
        for b in range(n):
            for ci in range(c):
                for oa in range(od):
                    for oi in range(oh):
                        for oj in range(ow):
                            out[b, ci, oa, oi, oj] = xf[b, ci, idx[b, ci, oa, oi, oj]]
    return out_np
