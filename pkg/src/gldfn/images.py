"""8-bit RGB PNG I/O and resampling helpers.

Loading maps pixel values v to v/255 floats; saving rounds
clamp(v, 0, 1) * 255 back to 8-bit.
"""

from __future__ import annotations

import numpy as np
from PIL import Image

from .tensor import ShapeError, Tensor


def load_png(path):
    """Read a PNG as a (1, 3, h, w) float32 tensor in [0, 1]."""
    with Image.open(path) as im:
        arr = np.asarray(im.convert("RGB"), dtype=np.float32) / 255.0
    return Tensor(arr.transpose(2, 0, 1)[None])


def save_png(img, path):
    """Write a (1, 3, h, w) tensor as 8-bit RGB."""
    if img.dims[0] != 1 or img.dims[1] != 3:
        raise ShapeError(f"save_png needs dims (1, 3, h, w), got {img.dims}")
    arr = np.clip(img.data[0], 0.0, 1.0)
    arr = np.rint(arr * 255.0).astype(np.uint8).transpose(1, 2, 0)
    Image.fromarray(arr, mode="RGB").save(path, format="PNG")


def crop_to_multiple(img, s):
    """Top-left crop so both spatial dims divide s."""
    n, c, h, w = img.dims
    h2, w2 = h - h % s, w - w % s
    if h2 < 1 or w2 < 1:
        raise ShapeError(f"image dims {img.dims} too small for scale {s}")
    if (h2, w2) == (h, w):
        return img
    return Tensor(img.data[:, :, :h2, :w2].copy())


def _cubic_weight(t):
    # Catmull-Rom (a = -0.5)
    a = -0.5
    t = np.abs(t)
    w = np.where(t <= 1, (a + 2) * t ** 3 - (a + 3) * t ** 2 + 1,
                 np.where(t < 2, a * t ** 3 - 5 * a * t ** 2 + 8 * a * t - 4 * a, 0.0))
    return w


def _cubic_axis(in_size, s):
    src = (np.arange(in_size * s) + 0.5) / s - 0.5
    base = np.floor(src).astype(np.int64)
    idx = np.clip(base[:, None] + np.arange(-1, 3)[None, :], 0, in_size - 1)
    w = _cubic_weight(src[:, None] - (base[:, None] + np.arange(-1, 3)[None, :]))
    w /= w.sum(axis=1, keepdims=True)
    return idx, w


def bicubic_upsample(img, s):
    """Separable Catmull-Rom x s upsampling (align-corners=false, edge clamp).

    Used only as the classical no-learning baseline when scoring models.
    """
    if s < 1:
        raise ValueError(f"scale must be >= 1, got {s}")
    if s == 1:
        return Tensor(img.data.copy())
    n, c, h, w = img.dims
    yi, yw = _cubic_axis(h, s)
    xi, xw = _cubic_axis(w, s)
    d = img.data.astype(np.float64)
    rows = np.einsum("ncqwt,qt->ncqw", d[:, :, yi, :].transpose(0, 1, 2, 4, 3), yw)
    out = np.einsum("nchqt,qt->nchq", rows[:, :, :, xi], xw)
    return Tensor(out.astype(img.dtype))
