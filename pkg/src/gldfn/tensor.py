"""Minimal 4-D tensor engine with tape-based reverse-mode autodiff.

Every value is carried by a :class:`Tensor`: a dense, contiguous,
row-major float array of shape (n, c, h, w).  Operations defined here
compute forward results eagerly with numpy and, when a :class:`Tape` is
active, record enough state to replay the chain rule in reverse.

The engine deliberately supports only what the network needs: no
broadcasting beyond conv bias, no general einsum, no views.  Reductions
use numpy's fixed-order summation, so repeated forward passes on the
same inputs are bit-identical regardless of BLAS thread count (each
output element is reduced in a fixed order).
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


class ShapeError(ValueError):
    """Raised when operand shapes are incompatible."""


DEFAULT_DTYPE = np.float32


def _as_4d(data, dtype=None):
    arr = np.asarray(data)
    if arr.dtype not in (np.float32, np.float64):
        arr = arr.astype(DEFAULT_DTYPE)
    if dtype is not None:
        arr = arr.astype(dtype)
    if arr.ndim != 4:
        raise ShapeError(f"tensor data must be 4-D (n, c, h, w), got shape {arr.shape}")
    return np.ascontiguousarray(arr)


class Tensor:
    """Dense (n, c, h, w) array with an optional gradient buffer."""

    __slots__ = ("data", "grad", "requires_grad")

    def __init__(self, data, requires_grad=False, dtype=None):
        self.data = _as_4d(data, dtype)
        self.grad = None
        self.requires_grad = bool(requires_grad)

    @property
    def dims(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self):
        return self.data.size

    def item(self):
        if self.data.size != 1:
            raise ShapeError(f"item() needs a single-element tensor, got dims {self.dims}")
        return float(self.data.reshape(()))

    def detach(self):
        return Tensor(self.data.copy())

    def zero_grad(self):
        self.grad = None

    @staticmethod
    def zeros(dims, dtype=DEFAULT_DTYPE, requires_grad=False):
        return Tensor(np.zeros(dims, dtype=dtype), requires_grad=requires_grad)

    @staticmethod
    def full(dims, value, dtype=DEFAULT_DTYPE, requires_grad=False):
        return Tensor(np.full(dims, value, dtype=dtype), requires_grad=requires_grad)

    @staticmethod
    def scalar(value, dtype=DEFAULT_DTYPE, requires_grad=False):
        return Tensor(np.full((1, 1, 1, 1), value, dtype=dtype), requires_grad=requires_grad)

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(dims={self.dims}, dtype={self.dtype.name}{flag})"


class _Record:
    __slots__ = ("name", "inputs", "output", "backward")

    def __init__(self, name, inputs, output, backward):
        self.name = name
        self.inputs = inputs
        self.output = output
        self.backward = backward


_TAPE_STACK = []


class Tape:
    """Ordered record of operations, replayed in reverse by backward().

    Used as a context manager; operations executed inside the block are
    recorded when any of their inputs requires a gradient.
    """

    __slots__ = ("_records",)

    def __init__(self):
        self._records = []

    def __enter__(self):
        _TAPE_STACK.append(self)
        return self

    def __exit__(self, exc_type, exc, tb):
        _TAPE_STACK.pop()
        return False

    def __len__(self):
        return len(self._records)

    def op_names(self):
        return [r.name for r in self._records]

    def check_finite(self):
        """Raise naming the first recorded op whose output is non-finite."""
        for rec in self._records:
            if not np.all(np.isfinite(rec.output.data)):
                raise FloatingPointError(f"non-finite values produced by op '{rec.name}'")


def _record(name, inputs, output, backward_fn):
    output.requires_grad = any(t.requires_grad for t in inputs)
    if _TAPE_STACK and output.requires_grad:
        _TAPE_STACK[-1]._records.append(_Record(name, tuple(inputs), output, backward_fn))
    return output


def backward(loss, tape):
    """Populate grads of every requires_grad input recorded on the tape.

    Gradients accumulate additively across fan-out.  Inputs of recorded
    operations that never receive a downstream gradient end up with an
    all-zero grad buffer rather than None.
    """
    if loss.size != 1:
        raise ShapeError(f"backward needs a scalar loss, got dims {loss.dims}")
    loss.grad = np.ones_like(loss.data)
    for rec in reversed(tape._records):
        for t in rec.inputs:
            if t.requires_grad and t.grad is None:
                t.grad = np.zeros_like(t.data)
        out_grad = rec.output.grad
        if out_grad is None:
            continue
        grads = rec.backward(out_grad)
        for t, g in zip(rec.inputs, grads):
            if t.requires_grad and g is not None:
                t.grad += g


# ---------------------------------------------------------------------------
# convolution plumbing (shared with the dynamic-filter operators)
# ---------------------------------------------------------------------------

def _pad_zeros(x, padding):
    if padding == 0:
        return x
    return np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))


def _conv_out_size(size, k, stride, padding):
    return (size + 2 * padding - k) // stride + 1


def _im2col(x, k, stride, padding):
    """Unfold (n, c, h, w) into column matrix (n, c*k*k, oh*ow)."""
    n, c, h, w = x.shape
    oh = _conv_out_size(h, k, stride, padding)
    ow = _conv_out_size(w, k, stride, padding)
    xp = _pad_zeros(x, padding)
    win = sliding_window_view(xp, (k, k), axis=(2, 3))[:, :, ::stride, ::stride]
    cols = win.transpose(0, 1, 4, 5, 2, 3).reshape(n, c * k * k, oh * ow)
    return np.ascontiguousarray(cols), oh, ow


def _col2im(dcols, x_shape, k, stride, padding, oh, ow):
    """Scatter-add column gradients back to input layout (adjoint of _im2col)."""
    n, c, h, w = x_shape
    dxp = np.zeros((n, c, h + 2 * padding, w + 2 * padding), dtype=dcols.dtype)
    d = dcols.reshape(n, c, k, k, oh, ow)
    for a in range(k):
        for b in range(k):
            dxp[:, :, a : a + stride * oh : stride, b : b + stride * ow : stride] += d[:, :, a, b]
    if padding:
        dxp = dxp[:, :, padding:-padding, padding:-padding]
    return np.ascontiguousarray(dxp)


def conv2d(x, weight, bias=None, stride=1, padding=0):
    """2-D correlation with zero padding.

    weight has dims (c_out, c_in, k, k) with k odd; bias, when given, has
    dims (1, c_out, 1, 1).  Output height is (h + 2*padding - k)//stride + 1.
    """
    n, c, h, w = x.dims
    c_out, c_in, k, k2 = weight.dims
    if k != k2 or k % 2 == 0:
        raise ShapeError(f"conv2d needs a square odd kernel, got weight dims {weight.dims}")
    if c != c_in:
        raise ShapeError(f"conv2d channel mismatch: input dims {x.dims} vs weight dims {weight.dims}")
    if stride < 1 or padding < 0:
        raise ShapeError(f"conv2d needs stride >= 1 and padding >= 0, got {stride}, {padding}")
    if bias is not None and bias.dims != (1, c_out, 1, 1):
        raise ShapeError(f"conv2d bias dims {bias.dims} do not match (1, {c_out}, 1, 1)")
    if h + 2 * padding < k or w + 2 * padding < k:
        raise ShapeError(f"conv2d kernel {k} larger than padded input dims {x.dims}")

    cols, oh, ow = _im2col(x.data, k, stride, padding)
    wmat = weight.data.reshape(c_out, c_in * k * k)
    out = np.matmul(wmat, cols).reshape(n, c_out, oh, ow)
    if bias is not None:
        out = out + bias.data
    out_t = Tensor(out)

    inputs = (x, weight) if bias is None else (x, weight, bias)

    def bwd(og):
        og3 = og.reshape(n, c_out, oh * ow)
        dw = np.matmul(og3, cols.transpose(0, 2, 1)).sum(axis=0).reshape(weight.dims)
        dcols = np.matmul(wmat.T, og3)
        dx = _col2im(dcols, x.dims, k, stride, padding, oh, ow)
        if bias is None:
            return dx, dw
        db = og.sum(axis=(0, 2, 3)).reshape(1, c_out, 1, 1)
        return dx, dw, db

    return _record("conv2d", inputs, out_t, bwd)


# ---------------------------------------------------------------------------
# pointwise and structural ops
# ---------------------------------------------------------------------------

def activation(x, kind="relu"):
    """Elementwise nonlinearity; subgradient at 0 is taken as 0."""
    if kind == "relu":
        out = Tensor(np.maximum(x.data, 0))
        mask = (x.data > 0).astype(x.dtype)
    elif kind == "lrelu":
        out = Tensor(np.where(x.data > 0, x.data, 0.2 * x.data))
        mask = np.where(x.data > 0, 1, 0.2).astype(x.dtype)
    else:
        raise ValueError(f"unknown activation kind '{kind}'")
    return _record("activation", (x,), out, lambda og: (og * mask,))


def softmax_channels(x):
    """Softmax over the channel axis, computed with max subtraction."""
    z = x.data - x.data.max(axis=1, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=1, keepdims=True)
    out = Tensor(y)

    def bwd(og):
        s = (og * y).sum(axis=1, keepdims=True)
        return (y * (og - s),)

    return _record("softmax", (x,), out, bwd)


def pixel_shuffle(x, r):
    """Rearrange (n, c*r*r, h, w) -> (n, c, h*r, w*r).

    out[b, c, y*r+dy, x*r+dx] = in[b, c*r*r + dy*r + dx, y, x]
    """
    n, cr2, h, w = x.dims
    if r < 1 or cr2 % (r * r) != 0:
        raise ShapeError(f"pixel_shuffle needs channels divisible by r*r, got dims {x.dims}, r={r}")
    c = cr2 // (r * r)
    out = x.data.reshape(n, c, r, r, h, w).transpose(0, 1, 4, 2, 5, 3).reshape(n, c, h * r, w * r)
    out_t = Tensor(np.ascontiguousarray(out))

    def bwd(og):
        g = og.reshape(n, c, h, r, w, r).transpose(0, 1, 3, 5, 2, 4).reshape(n, cr2, h, w)
        return (np.ascontiguousarray(g),)

    return _record("pixel_shuffle", (x,), out_t, bwd)


def pixel_unshuffle(x, r):
    """Inverse of pixel_shuffle: (n, c, h*r, w*r) -> (n, c*r*r, h, w)."""
    n, c, hr, wr = x.dims
    if r < 1 or hr % r != 0 or wr % r != 0:
        raise ShapeError(f"pixel_unshuffle needs spatial dims divisible by r, got dims {x.dims}, r={r}")
    h, w = hr // r, wr // r
    out = x.data.reshape(n, c, h, r, w, r).transpose(0, 1, 3, 5, 2, 4).reshape(n, c * r * r, h, w)
    out_t = Tensor(np.ascontiguousarray(out))

    def bwd(og):
        g = og.reshape(n, c, r, r, h, w).transpose(0, 1, 4, 2, 5, 3).reshape(n, c, hr, wr)
        return (np.ascontiguousarray(g),)

    return _record("pixel_unshuffle", (x,), out_t, bwd)


def _bilinear_axis(in_size, s):
    # sample centers at (o + 0.5)/s - 0.5, clamped to the valid range
    src = np.clip((np.arange(in_size * s) + 0.5) / s - 0.5, 0, in_size - 1)
    i0 = np.floor(src).astype(np.int64)
    i1 = np.minimum(i0 + 1, in_size - 1)
    f = src - i0
    return i0, i1, f


def bilinear_upsample(x, s):
    """Bilinear x s upsampling, align-corners=false, edge-clamped."""
    if s < 1:
        raise ShapeError(f"bilinear_upsample needs s >= 1, got {s}")
    if s == 1:
        out_t = Tensor(x.data.copy())
        return _record("bilinear_upsample", (x,), out_t, lambda og: (og.copy(),))
    n, c, h, w = x.dims
    y0, y1, fy = _bilinear_axis(h, s)
    x0, x1, fx = _bilinear_axis(w, s)
    fy = fy.astype(x.dtype)[None, None, :, None]
    fx = fx.astype(x.dtype)[None, None, None, :]
    d = x.data
    top = d[:, :, y0, :] * (1 - fy) + d[:, :, y1, :] * fy
    out = top[:, :, :, x0] * (1 - fx) + top[:, :, :, x1] * fx
    out_t = Tensor(out)

    def bwd(og):
        dtop = np.zeros((n, c, h * s, w), dtype=og.dtype)
        gx0 = og * (1 - fx)
        gx1 = og * fx
        for j in range(w * s):
            dtop[:, :, :, x0[j]] += gx0[:, :, :, j]
            dtop[:, :, :, x1[j]] += gx1[:, :, :, j]
        dx = np.zeros((n, c, h, w), dtype=og.dtype)
        gy0 = dtop * (1 - fy)
        gy1 = dtop * fy
        for i in range(h * s):
            dx[:, :, y0[i], :] += gy0[:, :, i, :]
            dx[:, :, y1[i], :] += gy1[:, :, i, :]
        return (dx,)

    return _record("bilinear_upsample", (x,), out_t, bwd)


def global_avg_pool(x):
    """Per-channel spatial mean: (n, c, h, w) -> (n, c, 1, 1)."""
    n, c, h, w = x.dims
    if h * w < 1:
        raise ShapeError(f"global_avg_pool needs h*w >= 1, got dims {x.dims}")
    out = Tensor(x.data.mean(axis=(2, 3), keepdims=True))

    def bwd(og):
        return (np.broadcast_to(og / (h * w), x.dims).astype(og.dtype).copy(),)

    return _record("global_avg_pool", (x,), out, bwd)


def _check_same_dims(a, b, op):
    if a.dims != b.dims:
        raise ShapeError(f"{op} dims mismatch: {a.dims} vs {b.dims}")


def add(a, b):
    _check_same_dims(a, b, "add")
    out = Tensor(a.data + b.data)
    return _record("add", (a, b), out, lambda og: (og, og))


def sub(a, b):
    _check_same_dims(a, b, "sub")
    out = Tensor(a.data - b.data)
    return _record("sub", (a, b), out, lambda og: (og, -og))


def mul_scalar(x, s):
    out = Tensor(x.data * s)
    return _record("mul_scalar", (x,), out, lambda og: (og * s,))


def sum_all(x):
    """Sum of all elements as a (1, 1, 1, 1) tensor."""
    out = Tensor(np.array(x.data.sum(), dtype=x.dtype).reshape(1, 1, 1, 1))

    def bwd(og):
        return (np.full(x.dims, og.reshape(()), dtype=og.dtype),)

    return _record("sum_all", (x,), out, bwd)


def weighted_sum(x, weights):
    """Scalar projection sum(x * weights) against a constant array."""
    warr = np.asarray(weights, dtype=x.dtype)
    if warr.shape != x.dims:
        raise ShapeError(f"weighted_sum weights shape {warr.shape} vs tensor dims {x.dims}")
    out = Tensor(np.array((x.data * warr).sum(), dtype=x.dtype).reshape(1, 1, 1, 1))
    return _record("weighted_sum", (x,), out, lambda og: (warr * og.reshape(()),))


def concat_channels(a, b):
    if a.dims[0] != b.dims[0] or a.dims[2:] != b.dims[2:]:
        raise ShapeError(f"concat_channels dims mismatch: {a.dims} vs {b.dims}")
    ca = a.dims[1]
    out = Tensor(np.concatenate([a.data, b.data], axis=1))

    def bwd(og):
        return og[:, :ca].copy(), og[:, ca:].copy()

    return _record("concat_channels", (a, b), out, bwd)


def reshape(x, dims):
    dims = tuple(int(d) for d in dims)
    if int(np.prod(dims)) != x.size or len(dims) != 4:
        raise ShapeError(f"reshape {x.dims} -> {dims} changes the element count")
    out = Tensor(x.data.reshape(dims).copy())
    return _record("reshape", (x,), out, lambda og: (og.reshape(x.dims).copy(),))


def mean_abs_diff(a, b):
    """Mean absolute error as a scalar tensor; d/da = sign(a-b)/N."""
    _check_same_dims(a, b, "mean_abs_diff")
    diff = a.data - b.data
    out = Tensor(np.array(np.abs(diff).mean(), dtype=a.dtype).reshape(1, 1, 1, 1))
    n = diff.size

    def bwd(og):
        g = np.sign(diff) * (og.reshape(()) / n)
        return g.astype(a.dtype), (-g).astype(a.dtype)

    return _record("mean_abs_diff", (a, b), out, bwd)


def root_mean_square_diff(a, b, eps=1e-12):
    """sqrt(mean((a-b)^2)); optional alternative training objective."""
    _check_same_dims(a, b, "root_mean_square_diff")
    diff = a.data - b.data
    rms = np.sqrt(np.mean(diff * diff) + eps)
    out = Tensor(np.array(rms, dtype=a.dtype).reshape(1, 1, 1, 1))
    n = diff.size

    def bwd(og):
        g = diff * (og.reshape(()) / (n * rms))
        return g.astype(a.dtype), (-g).astype(a.dtype)

    return _record("root_mean_square_diff", (a, b), out, bwd)
