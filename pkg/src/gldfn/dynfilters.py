"""The two dynamic filtering operators.

Global dynamic filtering aggregates K parallel convolution kernels with
per-sample attention weights drawn from a squeeze -> 1x1 conv -> relu ->
1x1 conv -> softmax branch, so every input in a batch is convolved with
its own kernel mixture.

Local dynamic filtering applies, at every pixel i and channel r, the
elementwise product of a per-pixel k x k filter and a per-channel k x k
filter:

    out[r, i] = sum over window offsets d of  Dsp[i][d] * Dch[r][d] * x[r, i + d]

with zero padding at borders.  Offsets d run over the k x k window in
row-major order with the filter tap at index (a, b) multiplying the
input pixel at (y + a - k//2, x + b - k//2), i.e. correlation order.
Decoupling means only n*k^2 + c*k^2 filter values are materialized per
sample instead of a full n*c*k^2 (or a conventional conv's c'*c*k^2)
weight table.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tensor import (
    ShapeError,
    Tensor,
    _col2im,
    _im2col,
    _record,
    activation,
    conv2d,
    global_avg_pool,
    reshape,
    softmax_channels,
)


@dataclass
class GlobalDynFilterParams:
    """K parallel kernels/biases plus the attention branch that mixes them."""

    kernels: list          # K tensors (c_out, c_in, k, k), all the same dims
    biases: list           # K tensors (1, c_out, 1, 1)
    attn_w1: Tensor        # (c_red, c_in, 1, 1)
    attn_b1: Tensor
    attn_w2: Tensor        # (K, c_red, 1, 1)
    attn_b2: Tensor

    def __post_init__(self):
        if not self.kernels or len(self.kernels) != len(self.biases):
            raise ShapeError("need the same positive number of kernels and biases")
        d0 = self.kernels[0].dims
        for k in self.kernels:
            if k.dims != d0:
                raise ShapeError(f"all aggregated kernels must share dims, got {k.dims} vs {d0}")
        if self.attn_w2.dims[0] != len(self.kernels):
            raise ShapeError(
                f"attention emits {self.attn_w2.dims[0]} logits for {len(self.kernels)} kernels")

    @property
    def n_kernels(self):
        return len(self.kernels)


@dataclass
class LocalDynFilterParams:
    """Branches predicting the per-pixel and per-channel filters."""

    k: int                 # odd filter window
    sp_w: Tensor           # (k*k, c, 1, 1) spatial-filter prediction
    sp_b: Tensor
    sp_scale: Tensor       # (1, 1, 1, 1) post-standardization gain
    ch_w1: Tensor          # (c_red, c, 1, 1) channel-branch squeeze
    ch_b1: Tensor
    ch_w2: Tensor          # (c*k*k, c_red, 1, 1)
    ch_b2: Tensor
    ch_scale: Tensor

    def __post_init__(self):
        if self.k % 2 == 0 or self.k < 1:
            raise ShapeError(f"filter window must be odd and positive, got {self.k}")
        if self.sp_w.dims[0] != self.k * self.k:
            raise ShapeError(f"spatial branch emits {self.sp_w.dims[0]} values, needs k*k={self.k * self.k}")
        if self.ch_w2.dims[0] % (self.k * self.k) != 0:
            raise ShapeError(f"channel branch output {self.ch_w2.dims[0]} not divisible by k*k")


def attention_weights(x, p):
    """Per-sample softmax mixture weights, dims (n, K, 1, 1)."""
    if x.dims[1] != p.attn_w1.dims[1]:
        raise ShapeError(f"attention expects {p.attn_w1.dims[1]} channels, input has dims {x.dims}")
    z = global_avg_pool(x)
    z = activation(conv2d(z, p.attn_w1, p.attn_b1))
    logits = conv2d(z, p.attn_w2, p.attn_b2)
    return softmax_channels(logits)


def _aggregated_conv(x, pi, kernels, biases, padding):
    """Convolve each sample with its own attention-weighted kernel sum."""
    n, c_in, h, w = x.dims
    c_out, _, k, _ = kernels[0].dims
    K = len(kernels)
    kstack = np.stack([t.data for t in kernels])                  # (K, c_out, c_in, k, k)
    bstack = np.stack([t.data.reshape(c_out) for t in biases])    # (K, c_out)
    pi2 = pi.data.reshape(n, K)

    wmix = np.tensordot(pi2, kstack, axes=(1, 0))                 # (n, c_out, c_in, k, k)
    bmix = pi2 @ bstack                                           # (n, c_out)
    cols, oh, ow = _im2col(x.data, k, stride=1, padding=padding)
    wmat = wmix.reshape(n, c_out, c_in * k * k)
    out = np.matmul(wmat, cols).reshape(n, c_out, oh, ow) + bmix[:, :, None, None]
    out_t = Tensor(out)

    def bwd(og):
        og3 = og.reshape(n, c_out, oh * ow)
        dwmix = np.matmul(og3, cols.transpose(0, 2, 1))           # (n, c_out, c_in*k*k)
        dbmix = og.sum(axis=(2, 3))                               # (n, c_out)
        dcols = np.matmul(wmat.transpose(0, 2, 1), og3)
        dx = _col2im(dcols, x.dims, k, 1, padding, oh, ow)

        kflat = kstack.reshape(K, -1)
        dpi = dwmix.reshape(n, -1) @ kflat.T + dbmix @ bstack.T   # (n, K)
        dkern = np.tensordot(pi2, dwmix, axes=(0, 0)).reshape(K, c_out, c_in, k, k)
        dbias = (pi2.T @ dbmix).reshape(K, 1, c_out, 1, 1)
        grads = [dx, dpi.reshape(pi.dims)]
        grads += [dkern[i] for i in range(K)]
        grads += [dbias[i] for i in range(K)]
        return tuple(grads)

    return _record("global_dyn_conv", (x, pi, *kernels, *biases), out_t, bwd)


def global_dyn_conv(x, p):
    """Attention-aggregated dynamic convolution, same-padded, no nonlinearity.

    Each batch element i is convolved with sum_k pi_k(x_i) * kernel_k and
    biased with sum_k pi_k(x_i) * bias_k.  The enclosing module applies
    the activation so the operator composes with skip connections.
    """
    if x.dims[1] != p.kernels[0].dims[1]:
        raise ShapeError(
            f"global_dyn_conv channel mismatch: input dims {x.dims} vs kernel dims {p.kernels[0].dims}")
    pi = attention_weights(x, p)
    k = p.kernels[0].dims[2]
    return _aggregated_conv(x, pi, p.kernels, p.biases, padding=(k - 1) // 2)


def standardize_filters(x, group_size, scale, eps=1e-5):
    """Standardize channel groups of size ``group_size`` to zero mean, unit
    variance, then multiply by a learnable scalar gain.

    A constant group (variance 0) standardizes to exactly zero.
    """
    n, c, h, w = x.dims
    if c % group_size != 0:
        raise ShapeError(f"channels {c} not divisible by filter group size {group_size}")
    if scale.dims != (1, 1, 1, 1):
        raise ShapeError(f"scale must be a (1,1,1,1) tensor, got dims {scale.dims}")
    g = c // group_size
    v = x.data.reshape(n, g, group_size, h, w)
    mu = v.mean(axis=2, keepdims=True)
    var = ((v - mu) ** 2).mean(axis=2, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    z = (v - mu) * inv
    s = scale.data.reshape(())
    out = Tensor((z * s).reshape(x.dims))

    def bwd(og):
        dz = og.reshape(n, g, group_size, h, w) * s
        dscale = np.array((og.reshape(n, g, group_size, h, w) * z).sum(), dtype=og.dtype)
        mean_dz = dz.mean(axis=2, keepdims=True)
        mean_dzz = (dz * z).mean(axis=2, keepdims=True)
        dx = inv * (dz - mean_dz - z * mean_dzz)
        return dx.reshape(x.dims).astype(og.dtype), dscale.reshape(1, 1, 1, 1)

    return _record("standardize_filters", (x, scale), out, bwd)


def pixelwise_filters(x, k):
    """Reorder (n, k*k, h, w) filter maps into (n, h*w, k, k) filters."""
    n, kk, h, w = x.dims
    if kk != k * k:
        raise ShapeError(f"expected {k * k} filter channels, got dims {x.dims}")
    out = Tensor(np.ascontiguousarray(
        x.data.reshape(n, k, k, h * w).transpose(0, 3, 1, 2)))

    def bwd(og):
        g = og.transpose(0, 2, 3, 1).reshape(x.dims)
        return (np.ascontiguousarray(g),)

    return _record("pixelwise_filters", (x,), out, bwd)


def predict_local_filters(x, p):
    """Predict standardized per-pixel and per-channel filters from features.

    Returns (Dsp, Dch) with dims (n, h*w, k, k) and (n, c, k, k).
    """
    n, c, h, w = x.dims
    if p.sp_w.dims[1] != c or p.ch_w1.dims[1] != c:
        raise ShapeError(f"filter branches built for {p.sp_w.dims[1]} channels, input dims {x.dims}")
    if p.ch_w2.dims[0] != c * p.k * p.k:
        raise ShapeError(f"channel branch emits {p.ch_w2.dims[0]} values, needs c*k*k={c * p.k * p.k}")
    kk = p.k * p.k

    sp = conv2d(x, p.sp_w, p.sp_b)                        # (n, k*k, h, w)
    sp = standardize_filters(sp, kk, p.sp_scale)
    dsp = pixelwise_filters(sp, p.k)                      # (n, h*w, k, k)

    z = global_avg_pool(x)
    z = activation(conv2d(z, p.ch_w1, p.ch_b1))
    ch = conv2d(z, p.ch_w2, p.ch_b2)                      # (n, c*k*k, 1, 1)
    ch = standardize_filters(ch, kk, p.ch_scale)
    dch = reshape(ch, (n, c, p.k, p.k))
    return dsp, dch


def _check_local_shapes(x, dsp, dch):
    n, c, h, w = x.dims
    if dsp.dims[0] != n or dch.dims[0] != n:
        raise ShapeError(f"batch mismatch: x {x.dims}, Dsp {dsp.dims}, Dch {dch.dims}")
    k = dsp.dims[2]
    if dsp.dims != (n, h * w, k, k):
        raise ShapeError(f"Dsp dims {dsp.dims} do not match (n={n}, h*w={h * w}, k, k)")
    if dch.dims != (n, c, k, k):
        raise ShapeError(f"Dch dims {dch.dims} do not match (n={n}, c={c}, k, k)")
    if k % 2 == 0:
        raise ShapeError(f"filter window must be odd, got k={k}")
    return k


def local_dyn_conv(x, dsp, dch):
    """Decoupled per-pixel x per-channel dynamic filtering, zero padded."""
    n, c, h, w = x.dims
    k = _check_local_shapes(x, dsp, dch)
    r = k // 2
    xp = np.pad(x.data, ((0, 0), (0, 0), (r, r), (r, r)))
    sp = dsp.data.reshape(n, h, w, k, k)
    ch = dch.data
    out = np.zeros((n, c, h, w), dtype=x.dtype)
    for a in range(k):
        for b in range(k):
            win = xp[:, :, a : a + h, b : b + w]
            out += win * sp[:, None, :, :, a, b] * ch[:, :, a, b][:, :, None, None]
    out_t = Tensor(out)

    def bwd(og):
        dxp = np.zeros_like(xp)
        dsp_g = np.zeros_like(sp)
        dch_g = np.zeros_like(ch)
        for a in range(k):
            for b in range(k):
                win = xp[:, :, a : a + h, b : b + w]
                s = sp[:, None, :, :, a, b]
                cf = ch[:, :, a, b][:, :, None, None]
                dxp[:, :, a : a + h, b : b + w] += og * s * cf
                dsp_g[:, :, :, a, b] = (og * win * cf).sum(axis=1)
                dch_g[:, :, a, b] = (og * win * s).sum(axis=(2, 3))
        dx = dxp[:, :, r : r + h, r : r + w] if r else dxp
        return (np.ascontiguousarray(dx),
                dsp_g.reshape(dsp.dims),
                dch_g)

    return _record("local_dyn_conv", (x, dsp, dch), out_t, bwd)


class OpCounter:
    """Tallies of work done by the instrumented reference paths."""

    def __init__(self):
        self.filter_values = 0     # dynamic filter entries materialized
        self.macs = 0              # multiply-accumulate events applying filters


def local_dyn_conv_reference(x, dsp, dch, counter=None):
    """Brute-force oracle: materialize each combined filter and apply it.

    For every (channel r, pixel i) the combined window weight table
    W[d] = Dsp[i][d] * Dch[r][d] is built explicitly and applied by
    direct summation.  Intended for small test inputs only.
    """
    n, c, h, w = x.dims
    k = _check_local_shapes(x, dsp, dch)
    r = k // 2
    xp = np.pad(x.data, ((0, 0), (0, 0), (r, r), (r, r)))
    sp = dsp.data
    ch = dch.data
    out = np.zeros((n, c, h, w), dtype=x.dtype)
    if counter is not None:
        # prediction stage: the decoupled tables themselves
        counter.filter_values += n * (h * w * k * k + c * k * k)
    for bi in range(n):
        for ci in range(c):
            for y in range(h):
                for xpos in range(w):
                    wtab = sp[bi, y * w + xpos] * ch[bi, ci]
                    acc = 0.0
                    for a in range(k):
                        for b in range(k):
                            acc += wtab[a, b] * xp[bi, ci, y + a, xpos + b]
                            if counter is not None:
                                counter.macs += 1
                    out[bi, ci, y, xpos] = acc
    return Tensor(out)


def conv2d_reference(x, weight, bias=None, stride=1, padding=0, counter=None):
    """Six-nested-loop convolution oracle with an optional multiply counter."""
    n, c_in, h, w = x.dims
    c_out, _, k, _ = weight.dims
    oh = (h + 2 * padding - k) // stride + 1
    ow = (w + 2 * padding - k) // stride + 1
    xp = np.pad(x.data, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    wd = weight.data
    out = np.zeros((n, c_out, oh, ow), dtype=x.dtype)
    for bi in range(n):
        for co in range(c_out):
            for y in range(oh):
                for xpos in range(ow):
                    acc = 0.0
                    for ci in range(c_in):
                        for a in range(k):
                            for b in range(k):
                                acc += wd[co, ci, a, b] * xp[bi, ci, y * stride + a, xpos * stride + b]
                                if counter is not None:
                                    counter.macs += 1
                    out[bi, co, y, xpos] = acc
    if bias is not None:
        out += bias.data
    return Tensor(out)


def mac_count(layer_kind, n_pixels, c_in, c_out, k):
    """Closed-form work counts: filter materialization for the decoupled
    dynamic layer versus multiplies for a standard convolution."""
    if min(n_pixels, c_in, c_out, k) < 1:
        raise ValueError("mac_count needs positive dims")
    if layer_kind == "local_dyn":
        return n_pixels * k * k + c_in * k * k
    if layer_kind == "conv":
        return n_pixels * c_out * c_in * k * k
    raise ValueError(f"unknown layer kind '{layer_kind}'")
