"""Differentiable network layers: convolution, its transpose, max pooling
with argmax switches, switch-driven unpooling, batch normalization and dense.

Layers operate on (batch, channels, *spatial) tensors with 2 or 3 spatial
dimensions, compute through the kernels backend, and record a single bespoke
backward rule per call on the active tape.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .tensor import ShapeError, Tape, Tensor


@dataclass(frozen=True)
class ConvParams:
    """Weights and geometry of one (de)convolution.

    kernel is (out_ch, in_ch, *k); for a transposed convolution the first
    axis is the *consumed* channel count and the second the produced one
    (the adjoint maps conv-output space back to conv-input space).
    """

    kernel: Tensor
    bias: Tensor | None = None
    stride: int | tuple = 1
    padding: str = "same"  # "same" (zero padded, out = ceil(in/stride)) or "valid"

    def __post_init__(self):
        if self.kernel.data.ndim not in (4, 5):
            raise ShapeError(
                f"kernel must be (out_ch, in_ch, *k) with 2 or 3 spatial dims, "
                f"got shape {self.kernel.shape}"
            )
        if self.padding not in ("same", "valid"):
            raise ValueError(f"padding must be 'same' or 'valid', got {self.padding!r}")

    @property
    def spatial_rank(self) -> int:
        return self.kernel.data.ndim - 2

    def strides(self) -> tuple:
        s = self.stride
        return tuple(s for _ in range(self.spatial_rank)) if isinstance(s, int) else tuple(s)


@dataclass
class PoolSwitches:
    """Where each pooled maximum came from.

    indices holds the flat row-major position inside the input spatial box,
    one per pooled cell per channel per batch item; input_spatial is the
    exact pre-pool extent so unpooling restores odd sizes losslessly.
    """

    input_spatial: tuple
    indices: np.ndarray

    @property
    def pooled_spatial(self) -> tuple:
        return tuple(self.indices.shape[2:])


@dataclass
class BatchNormState:
    """Per-channel affine parameters plus running statistics."""

    gamma: Tensor
    beta: Tensor
    running_mean: np.ndarray
    running_var: np.ndarray
    momentum: float = 0.1
    epsilon: float = 1e-5

    @classmethod
    def create(cls, channels: int, dtype=np.float32, momentum: float = 0.1, epsilon: float = 1e-5):
        return cls(
            gamma=Tensor(np.ones(channels, dtype=dtype)),
            beta=Tensor(np.zeros(channels, dtype=dtype)),
            running_mean=np.zeros(channels, dtype=dtype),
            running_var=np.ones(channels, dtype=dtype),
            momentum=momentum,
            epsilon=epsilon,
        )


def _pad_amounts(n, k, s, padding):
    if padding == "same":
        out = -(-n // s)
        total = max((out - 1) * s + k - n, 0)
        return total // 2, total - total // 2, out
    out = (n - k) // s + 1
    if out < 1:
        raise ShapeError(f"valid convolution needs extent >= kernel, got {n} < {k}")
    return 0, 0, out


def conv_geometry(in_spatial, ksize, strides, padding):
    """(pad_lo, pad_hi, out_spatial) for each spatial axis."""
    lo, hi, out = [], [], []
    for n, k, s in zip(in_spatial, ksize, strides):
        a, b, o = _pad_amounts(n, k, s, padding)
        lo.append(a)
        hi.append(b)
        out.append(o)
    return tuple(lo), tuple(hi), tuple(out)


def _check_conv_input(x: Tensor, p: ConvParams, op: str):
    d = p.spatial_rank
    if x.data.ndim != d + 2:
        raise ShapeError(
            f"{op}: input rank {x.data.ndim} does not match kernel spatial rank {d} "
            f"(input {x.shape}, kernel {p.kernel.shape})"
        )


def conv(x: Tensor, p: ConvParams, tape: Tape | None = None) -> Tensor:
    """Cross-correlation of x (N, in_ch, *sp) with p.kernel (out_ch, in_ch, *k)."""
    _check_conv_input(x, p, "conv")
    kshape = p.kernel.shape
    if x.shape[1] != kshape[1]:
        raise ShapeError(
            f"conv: input has {x.shape[1]} channels but kernel expects {kshape[1]} "
            f"(input {x.shape}, kernel {kshape})"
        )
    n = x.shape[0]
    out_ch, in_ch = kshape[0], kshape[1]
    ksize = kshape[2:]
    strides = p.strides()
    in_spatial = x.shape[2:]
    pad_lo, pad_hi, out_spatial = conv_geometry(in_spatial, ksize, strides, p.padding)

    cols = kernels.im2col(x.data, ksize, strides, pad_lo, pad_hi)  # (N, CK, P)
    wmat = p.kernel.data.reshape(out_ch, -1)
    y = np.matmul(wmat, cols)  # (N, out_ch, P)
    if p.bias is not None:
        y = y + p.bias.data[:, None]
    out = Tensor._wrap(np.ascontiguousarray(y.reshape(n, out_ch, *out_spatial)))

    if tape is not None:
        inputs = [x, p.kernel] + ([p.bias] if p.bias is not None else [])

        def backward(g):
            gm = g.reshape(n, out_ch, -1)
            dw = np.matmul(gm, cols.transpose(0, 2, 1)).sum(axis=0).reshape(kshape)
            dcols = np.matmul(wmat.T, gm)
            dx = kernels.col2im(dcols, in_spatial, ksize, strides, pad_lo, pad_hi)
            if p.bias is not None:
                return dx, dw, gm.sum(axis=(0, 2))
            return dx, dw

        tape.record(out, inputs, backward)
    return out


def deconv(
    x: Tensor,
    p: ConvParams,
    out_spatial: tuple | None = None,
    tape: Tape | None = None,
) -> Tensor:
    """Transposed convolution: the linear adjoint of :func:`conv` with the
    same kernel/stride/padding.

    Consumes kernel.shape[0] channels, produces kernel.shape[1]. The output
    spatial size inverts the paired convolution's arithmetic; when that
    inverse is ambiguous (stride > 1) pass ``out_spatial`` explicitly. Bias,
    if any, is per produced channel and sits outside the adjoint identity.
    """
    _check_conv_input(x, p, "deconv")
    kshape = p.kernel.shape
    if x.shape[1] != kshape[0]:
        raise ShapeError(
            f"deconv: input has {x.shape[1]} channels but kernel consumes {kshape[0]} "
            f"(input {x.shape}, kernel {kshape})"
        )
    if p.bias is not None and p.bias.shape != (kshape[1],):
        raise ShapeError(
            f"deconv bias must cover the {kshape[1]} produced channels, got {p.bias.shape}"
        )
    n = x.shape[0]
    ksize = kshape[2:]
    strides = p.strides()
    if out_spatial is None:
        if p.padding == "same":
            out_spatial = tuple(e * s for e, s in zip(x.shape[2:], strides))
        else:
            out_spatial = tuple(
                (e - 1) * s + k for e, k, s in zip(x.shape[2:], ksize, strides)
            )
    out_spatial = tuple(int(v) for v in out_spatial)
    pad_lo, pad_hi, expect = conv_geometry(out_spatial, ksize, strides, p.padding)
    if expect != tuple(x.shape[2:]):
        raise ShapeError(
            f"deconv: input spatial {tuple(x.shape[2:])} does not invert to "
            f"{out_spatial} under the given geometry (paired conv would give {expect})"
        )

    wmat = p.kernel.data.reshape(kshape[0], -1)  # (c_from, c_to*K)
    u = x.data.reshape(n, kshape[0], -1)
    acols = np.matmul(wmat.T, u)  # (N, c_to*K, P)
    y = kernels.col2im(acols, out_spatial, ksize, strides, pad_lo, pad_hi)
    if p.bias is not None:
        y = y + p.bias.data.reshape((1, kshape[1]) + (1,) * len(out_spatial))
    out = Tensor._wrap(np.ascontiguousarray(y))

    if tape is not None:
        inputs = [x, p.kernel] + ([p.bias] if p.bias is not None else [])
        spatial_axes = tuple(range(2, 2 + len(out_spatial)))

        def backward(g):
            gcols = kernels.im2col(g, ksize, strides, pad_lo, pad_hi)  # (N, c_to*K, P)
            dx = np.matmul(wmat, gcols).reshape(x.shape)
            dw = np.matmul(u, gcols.transpose(0, 2, 1)).sum(axis=0).reshape(kshape)
            if p.bias is not None:
                return dx, dw, g.sum(axis=(0,) + spatial_axes)
            return dx, dw

        tape.record(out, inputs, backward)
    return out


def maxpool(x: Tensor, tape: Tape | None = None) -> tuple[Tensor, PoolSwitches]:
    """Window-2, stride-2 max pool (final window truncated on odd extents).

    Ties go to the lowest flat index. The gradient routes to the recorded
    argmax only.
    """
    if x.data.ndim not in (4, 5):
        raise ShapeError(f"maxpool expects (N, C, *spatial) input, got shape {x.shape}")
    vals, idx = kernels.maxpool(x.data)
    in_spatial = tuple(x.shape[2:])
    out = Tensor._wrap(vals)
    switches = PoolSwitches(input_spatial=in_spatial, indices=idx)
    if tape is not None:
        tape.record(out, (x,), lambda g: (kernels.unpool_scatter(g, idx, in_spatial),))
    return out, switches


def unpool(x: Tensor, s: PoolSwitches, tape: Tape | None = None) -> Tensor:
    """Scatter pooled values back to their recorded argmax positions."""
    if tuple(x.shape) != tuple(s.indices.shape):
        raise ShapeError(
            f"unpool: input shape {tuple(x.shape)} does not match switches "
            f"{tuple(s.indices.shape)}"
        )
    idx = s.indices
    out = Tensor._wrap(kernels.unpool_scatter(x.data, idx, s.input_spatial))
    if tape is not None:
        tape.record(out, (x,), lambda g: (kernels.pool_gather(g, idx),))
    return out


def batchnorm(x: Tensor, st: BatchNormState, mode: str, tape: Tape | None = None) -> Tensor:
    """Per-channel normalization over all non-channel axes (channel axis 1).

    Train mode normalizes with batch statistics and advances the running
    stats in place by EMA; infer mode reads the running stats only.
    """
    if mode not in ("train", "infer"):
        raise ValueError(f"batchnorm mode must be 'train' or 'infer', got {mode!r}")
    ch = x.shape[1] if x.data.ndim > 1 else None
    if ch != st.gamma.size:
        raise ShapeError(
            f"batchnorm: channel axis has extent {ch} but state covers {st.gamma.size}"
        )
    axes = (0,) + tuple(range(2, x.data.ndim))
    bshape = (1, ch) + (1,) * (x.data.ndim - 2)
    gamma, beta = st.gamma, st.beta

    if mode == "infer":
        inv = 1.0 / np.sqrt(st.running_var + st.epsilon)
        xhat = (x.data - st.running_mean.reshape(bshape)) * inv.reshape(bshape)
        out = Tensor._wrap(
            (xhat * gamma.data.reshape(bshape) + beta.data.reshape(bshape)).astype(x.dtype, copy=False)
        )
        if tape is not None:
            scale = (gamma.data * inv).reshape(bshape).astype(x.dtype, copy=False)

            def backward_infer(g):
                return (
                    g * scale,
                    (g * xhat).sum(axis=axes),
                    g.sum(axis=axes),
                )

            tape.record(out, (x, gamma, beta), backward_infer)
        return out

    if x.shape[0] < 2:
        raise ShapeError(
            f"batchnorm train mode needs a batch of at least 2, got {x.shape[0]}"
        )
    m = x.size // ch
    mean = x.data.mean(axis=axes)
    centered = x.data - mean.reshape(bshape)
    var = np.mean(centered * centered, axis=axes)
    inv = 1.0 / np.sqrt(var + st.epsilon)
    xhat = centered * inv.reshape(bshape)
    out = Tensor._wrap(
        (xhat * gamma.data.reshape(bshape) + beta.data.reshape(bshape)).astype(x.dtype, copy=False)
    )

    mom = st.momentum
    st.running_mean[...] = (1.0 - mom) * st.running_mean + mom * mean
    st.running_var[...] = (1.0 - mom) * st.running_var + mom * var

    if tape is not None:

        def backward_train(g):
            dbeta = g.sum(axis=axes)
            dgamma = (g * xhat).sum(axis=axes)
            dxhat = g * gamma.data.reshape(bshape)
            # d/dx of ((x - mean)/sqrt(var + eps)) with batch stats in the graph
            t1 = dxhat
            t2 = dxhat.sum(axis=axes).reshape(bshape) / m
            t3 = xhat * (dxhat * xhat).sum(axis=axes).reshape(bshape) / m
            dx = (t1 - t2 - t3) * inv.reshape(bshape)
            return dx.astype(x.dtype, copy=False), dgamma, dbeta

        tape.record(out, (x, gamma, beta), backward_train)
    return out


def dense(x: Tensor, w: Tensor, b: Tensor, tape: Tape | None = None) -> Tensor:
    """x (batch, in) @ w (in, out) + b (out)."""
    if x.data.ndim != 2 or w.data.ndim != 2:
        raise ShapeError(f"dense expects rank-2 input and weight, got {x.shape} and {w.shape}")
    if x.shape[1] != w.shape[0] or b.shape != (w.shape[1],):
        raise ShapeError(
            f"dense shapes disagree: input {x.shape}, weight {w.shape}, bias {b.shape}"
        )
    out = Tensor._wrap(x.data @ w.data + b.data)
    if tape is not None:
        xd, wd = x.data, w.data
        tape.record(out, (x, w, b), lambda g: (g @ wd.T, xd.T @ g, g.sum(axis=0)))
    return out


def he_uniform(rng: np.random.Generator, shape, fan_in: int, dtype=np.float32) -> np.ndarray:
    """Fan-in scaled uniform init, the standard choice under rectifiers."""
    bound = math.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(dtype)
