"""PSNR and SSIM on the BT.601 luminance channel.

Both metrics score [0, 1]-ranged data after cropping ``shave`` border
pixels from each side, the usual guard against resampling edge effects.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .tensor import ShapeError, Tensor

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_C1 = 0.01 ** 2
SSIM_C2 = 0.03 ** 2


def rgb_to_y(img):
    """Studio-swing BT.601 luminance of [0,1] RGB: (65.481 R + 128.553 G + 24.966 B + 16)/255."""
    n, c, h, w = img.dims
    if c != 3:
        raise ShapeError(f"rgb_to_y needs 3 channels, got dims {img.dims}")
    r, g, b = img.data[:, 0], img.data[:, 1], img.data[:, 2]
    y = (65.481 * r + 128.553 * g + 24.966 * b + 16.0) / 255.0
    return Tensor(y[:, None].astype(img.dtype))


def _shaved(a, b, shave, op):
    if a.dims != b.dims:
        raise ShapeError(f"{op} dims mismatch: {a.dims} vs {b.dims}")
    h, w = a.dims[2], a.dims[3]
    if shave < 0 or h <= 2 * shave or w <= 2 * shave:
        raise ShapeError(f"{op}: images of dims {a.dims} too small for shave {shave}")
    if shave == 0:
        return a.data, b.data
    return (a.data[:, :, shave:-shave, shave:-shave],
            b.data[:, :, shave:-shave, shave:-shave])


def psnr(a, b, shave=0):
    """10 log10(1 / MSE) in dB; +inf for identical inputs."""
    ad, bd = _shaved(a, b, shave, "psnr")
    mse = float(np.mean((ad.astype(np.float64) - bd.astype(np.float64)) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(1.0 / mse)


def _gaussian_window(size, sigma):
    r = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-(r * r) / (2.0 * sigma * sigma))
    w = np.outer(g, g)
    return w / w.sum()


def _window_means(img, window):
    k = window.shape[0]
    win = sliding_window_view(img, (k, k))
    return np.einsum("hwab,ab->hw", win, window)


def ssim(a, b, shave=0):
    """Mean windowed SSIM over valid positions of an 11x11 Gaussian window."""
    ad, bd = _shaved(a, b, shave, "ssim")
    if ad.shape[0] != 1 or ad.shape[1] != 1:
        raise ShapeError(f"ssim expects a single-channel single image, got dims {a.dims}")
    x = ad[0, 0].astype(np.float64)
    y = bd[0, 0].astype(np.float64)
    if min(x.shape) < SSIM_WINDOW:
        raise ShapeError(f"image {x.shape} smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} ssim window")
    w = _gaussian_window(SSIM_WINDOW, SSIM_SIGMA)
    mu_x = _window_means(x, w)
    mu_y = _window_means(y, w)
    xx = _window_means(x * x, w) - mu_x * mu_x
    yy = _window_means(y * y, w) - mu_y * mu_y
    xy = _window_means(x * y, w) - mu_x * mu_y
    num = (2 * mu_x * mu_y + SSIM_C1) * (2 * xy + SSIM_C2)
    den = (mu_x * mu_x + mu_y * mu_y + SSIM_C1) * (xx + yy + SSIM_C2)
    return float(np.mean(num / den))


@dataclass
class EvalRecord:
    name: str
    psnr: float
    ssim: float


@dataclass
class EvalReport:
    setting: str
    scale: int
    records: list = field(default_factory=list)

    def add(self, name, psnr_db, ssim_val):
        self.records.append(EvalRecord(name, psnr_db, ssim_val))

    @property
    def mean_psnr(self):
        finite = [r.psnr for r in self.records if math.isfinite(r.psnr)]
        return float(np.mean(finite)) if finite else math.inf

    @property
    def mean_ssim(self):
        vals = [r.ssim for r in self.records]
        return float(np.mean(vals)) if vals else 0.0
