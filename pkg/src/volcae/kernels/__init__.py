"""Hot numeric kernels: compiled core with a numpy fallback.

The Cython extension (``_opt``) is selected at import time when available;
otherwise the numpy reference implementation (``_ref``) is used. The
environment variable ``VOLCAE_BACKEND`` forces a choice (``compiled`` or
``reference``), and :func:`use_backend` switches at runtime, which the
benchmark uses to compare both.

All downstream code calls the dispatch functions below and never imports a
backend module directly.
"""

from __future__ import annotations

import os

import numpy as np

from . import _ref

_BACKENDS = {"reference": _ref}
try:
    from . import _opt

    _BACKENDS["compiled"] = _opt
except ImportError:  # extension not built; numpy fallback only
    _opt = None


def available_backends():
    return tuple(sorted(_BACKENDS))


def _pick_default():
    forced = os.environ.get("VOLCAE_BACKEND")
    if forced:
        if forced not in _BACKENDS:
            raise RuntimeError(
                f"VOLCAE_BACKEND={forced!r} not available; "
                f"have {available_backends()}"
            )
        return forced
    return "compiled" if "compiled" in _BACKENDS else "reference"


_active = _BACKENDS[_pick_default()]


def backend_name() -> str:
    return "compiled" if _active is _opt else "reference"


def use_backend(name: str) -> str:
    """Switch the active backend; returns the previous backend name."""
    global _active
    if name not in _BACKENDS:
        raise ValueError(f"unknown backend {name!r}; have {available_backends()}")
    prev = backend_name()
    _active = _BACKENDS[name]
    return prev


def _contig(x):
    return np.ascontiguousarray(x)


def im2col(x, ksize, stride, pad_lo, pad_hi):
    """Patch-extraction: (N, C, *sp) -> (N, C*prod(k), prod(out_sp))."""
    if x.ndim == 4:
        return _active.im2col2d(_contig(x), *ksize, *stride, pad_lo[0], pad_hi[0], pad_lo[1], pad_hi[1])
    if x.ndim == 5:
        return _active.im2col3d(
            _contig(x), *ksize, *stride,
            pad_lo[0], pad_hi[0], pad_lo[1], pad_hi[1], pad_lo[2], pad_hi[2],
        )
    raise ValueError(f"im2col expects 4-d or 5-d input, got shape {x.shape}")


def col2im(cols, spatial, ksize, stride, pad_lo, pad_hi):
    """Adjoint of :func:`im2col` (scatter-add of patch columns)."""
    if len(spatial) == 2:
        return _active.col2im2d(
            _contig(cols), *spatial, *ksize, *stride,
            pad_lo[0], pad_hi[0], pad_lo[1], pad_hi[1],
        )
    if len(spatial) == 3:
        return _active.col2im3d(
            _contig(cols), *spatial, *ksize, *stride,
            pad_lo[0], pad_hi[0], pad_lo[1], pad_hi[1], pad_lo[2], pad_hi[2],
        )
    raise ValueError(f"col2im expects 2 or 3 spatial dims, got {spatial}")


def maxpool(x):
    """Window-2 stride-2 max pool; returns (values, flat argmax indices)."""
    if x.ndim == 4:
        return _active.maxpool2d(_contig(x))
    if x.ndim == 5:
        return _active.maxpool3d(_contig(x))
    raise ValueError(f"maxpool expects 4-d or 5-d input, got shape {x.shape}")


def unpool_scatter(y, idx, spatial):
    """Place pooled values back at their argmax positions, zeros elsewhere."""
    if len(spatial) == 2:
        return _active.unpool2d(_contig(y), _contig(idx), *spatial)
    if len(spatial) == 3:
        return _active.unpool3d(_contig(y), _contig(idx), *spatial)
    raise ValueError(f"unpool expects 2 or 3 spatial dims, got {spatial}")


def pool_gather(x, idx):
    """Read values at recorded argmax positions (backward of unpool)."""
    if x.ndim == 4:
        return _active.gather2d(_contig(x), _contig(idx))
    if x.ndim == 5:
        return _active.gather3d(_contig(x), _contig(idx))
    raise ValueError(f"gather expects 4-d or 5-d input, got shape {x.shape}")
