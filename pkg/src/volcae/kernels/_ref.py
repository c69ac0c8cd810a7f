"""Numpy implementations of the hot kernels.

Fallback backend used when the compiled extension is unavailable (and the
baseline the benchmark compares against). Every function here has a
signature-identical twin in ``_opt`` (Cython).

Layout conventions:
  * feature maps are (N, C, *spatial), C-contiguous
  * im2col output is (N, C*K, P) with K = prod(kernel), P = prod(out spatial),
    patch entries ordered (channel, kernel offsets row-major)
  * pooling indices are flat row-major positions into the *input* spatial box
"""

from __future__ import annotations

import numpy as np


def _out_extent(n, k, s, p_lo, p_hi):
    return (n + p_lo + p_hi - k) // s + 1


# ---------------------------------------------------------------------------
# im2col / col2im


def im2col2d(x, kh, kw, sh, sw, ph0, ph1, pw0, pw1):
    n, c, h, w = x.shape
    oh = _out_extent(h, kh, sh, ph0, ph1)
    ow = _out_extent(w, kw, sw, pw0, pw1)
    img = np.pad(x, ((0, 0), (0, 0), (ph0, ph1), (pw0, pw1)))
    col = np.empty((n, c, kh, kw, oh, ow), dtype=x.dtype)
    for i in range(kh):
        for j in range(kw):
            col[:, :, i, j] = img[:, :, i : i + sh * oh : sh, j : j + sw * ow : sw]
    return col.reshape(n, c * kh * kw, oh * ow)


def col2im2d(cols, h, w, kh, kw, sh, sw, ph0, ph1, pw0, pw1):
    n = cols.shape[0]
    c = cols.shape[1] // (kh * kw)
    oh = _out_extent(h, kh, sh, ph0, ph1)
    ow = _out_extent(w, kw, sw, pw0, pw1)
    col = cols.reshape(n, c, kh, kw, oh, ow)
    img = np.zeros((n, c, h + ph0 + ph1, w + pw0 + pw1), dtype=cols.dtype)
    for i in range(kh):
        for j in range(kw):
            img[:, :, i : i + sh * oh : sh, j : j + sw * ow : sw] += col[:, :, i, j]
    return np.ascontiguousarray(img[:, :, ph0 : ph0 + h, pw0 : pw0 + w])


def im2col3d(x, kd, kh, kw, sd, sh, sw, pd0, pd1, ph0, ph1, pw0, pw1):
    n, c, d, h, w = x.shape
    od = _out_extent(d, kd, sd, pd0, pd1)
    oh = _out_extent(h, kh, sh, ph0, ph1)
    ow = _out_extent(w, kw, sw, pw0, pw1)
    img = np.pad(x, ((0, 0), (0, 0), (pd0, pd1), (ph0, ph1), (pw0, pw1)))
    col = np.empty((n, c, kd, kh, kw, od, oh, ow), dtype=x.dtype)
    for a in range(kd):
        for i in range(kh):
            for j in range(kw):
                col[:, :, a, i, j] = img[
                    :,
                    :,
                    a : a + sd * od : sd,
                    i : i + sh * oh : sh,
                    j : j + sw * ow : sw,
                ]
    return col.reshape(n, c * kd * kh * kw, od * oh * ow)


def col2im3d(cols, d, h, w, kd, kh, kw, sd, sh, sw, pd0, pd1, ph0, ph1, pw0, pw1):
    n = cols.shape[0]
    c = cols.shape[1] // (kd * kh * kw)
    od = _out_extent(d, kd, sd, pd0, pd1)
    oh = _out_extent(h, kh, sh, ph0, ph1)
    ow = _out_extent(w, kw, sw, pw0, pw1)
    col = cols.reshape(n, c, kd, kh, kw, od, oh, ow)
    img = np.zeros((n, c, d + pd0 + pd1, h + ph0 + ph1, w + pw0 + pw1), dtype=cols.dtype)
    for a in range(kd):
        for i in range(kh):
            for j in range(kw):
                img[
                    :,
                    :,
                    a : a + sd * od : sd,
                    i : i + sh * oh : sh,
                    j : j + sw * ow : sw,
                ] += col[:, :, a, i, j]
    return np.ascontiguousarray(img[:, :, pd0 : pd0 + d, ph0 : ph0 + h, pw0 : pw0 + w])


# ---------------------------------------------------------------------------
# max pooling (window 2, stride 2, truncated final window) and unpooling


def maxpool2d(x):
    n, c, h, w = x.shape
    oh, ow = (h + 1) // 2, (w + 1) // 2
    if (2 * oh, 2 * ow) != (h, w):
        xp = np.full((n, c, 2 * oh, 2 * ow), -np.inf, dtype=x.dtype)
        xp[:, :, :h, :w] = x
    else:
        xp = x
    win = xp.reshape(n, c, oh, 2, ow, 2).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, oh, ow, 4)
    # argmax returns the first maximum, i.e. the lowest flat input index
    k = win.argmax(axis=-1)
    vals = np.take_along_axis(win, k[..., None], axis=-1)[..., 0]
    iy = 2 * np.arange(oh, dtype=np.int64)[:, None] + k // 2
    ix = 2 * np.arange(ow, dtype=np.int64)[None, :] + k % 2
    return np.ascontiguousarray(vals), iy * w + ix


def maxpool3d(x):
    n, c, d, h, w = x.shape
    od, oh, ow = (d + 1) // 2, (h + 1) // 2, (w + 1) // 2
    if (2 * od, 2 * oh, 2 * ow) != (d, h, w):
        xp = np.full((n, c, 2 * od, 2 * oh, 2 * ow), -np.inf, dtype=x.dtype)
        xp[:, :, :d, :h, :w] = x
    else:
        xp = x
    win = (
        xp.reshape(n, c, od, 2, oh, 2, ow, 2)
        .transpose(0, 1, 2, 4, 6, 3, 5, 7)
        .reshape(n, c, od, oh, ow, 8)
    )
    k = win.argmax(axis=-1)
    vals = np.take_along_axis(win, k[..., None], axis=-1)[..., 0]
    iz = 2 * np.arange(od, dtype=np.int64)[:, None, None] + k // 4
    iy = 2 * np.arange(oh, dtype=np.int64)[None, :, None] + (k // 2) % 2
    ix = 2 * np.arange(ow, dtype=np.int64)[None, None, :] + k % 2
    return np.ascontiguousarray(vals), (iz * h + iy) * w + ix


def _scatter_flat(y, idx, spatial_size):
    n, c = y.shape[0], y.shape[1]
    out = np.zeros((n, c, spatial_size), dtype=y.dtype)
    np.put_along_axis(out, idx.reshape(n, c, -1), y.reshape(n, c, -1), axis=2)
    return out


def unpool2d(y, idx, h, w):
    return _scatter_flat(y, idx, h * w).reshape(y.shape[0], y.shape[1], h, w)


def unpool3d(y, idx, d, h, w):
    return _scatter_flat(y, idx, d * h * w).reshape(y.shape[0], y.shape[1], d, h, w)


def _gather_flat(x, idx):
    n, c = x.shape[0], x.shape[1]
    flat = np.take_along_axis(x.reshape(n, c, -1), idx.reshape(n, c, -1), axis=2)
    return flat.reshape(idx.shape)


def gather2d(x, idx):
    return _gather_flat(x, idx)


def gather3d(x, idx):
    return _gather_flat(x, idx)
