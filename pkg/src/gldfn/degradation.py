"""LR synthesis: blur with a Gaussian kernel, s-fold downsample, add noise.

Images travel as float tensors in [0, 1]; noise levels are quoted on the
0-255 intensity scale, so sigma=15 adds noise of std 15/255 to stored
values.  All randomness is counter-based (Philox keyed by the caller's
seed) so results never depend on execution order or thread count.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from numpy.random import Generator, Philox

from .tensor import ShapeError, Tensor

KERNEL_SIZE_ISO = 21        # Setting-1 kernel support
GAUSSIAN8_RANGES = {2: (0.80, 1.60), 3: (1.35, 2.40), 4: (1.80, 3.20)}


@dataclass
class BlurKernel:
    size: int
    coeffs: np.ndarray                      # (size, size), non-negative, sums to 1
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        self.coeffs = np.asarray(self.coeffs, dtype=np.float64)
        if self.coeffs.shape != (self.size, self.size):
            raise ShapeError(f"kernel coeffs shape {self.coeffs.shape} vs size {self.size}")


@dataclass
class DegradationSpec:
    kernel: BlurKernel
    scale: int
    noise_sigma: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.scale < 1:
            raise ValueError(f"scale must be >= 1, got {self.scale}")
        if self.noise_sigma < 0:
            raise ValueError(f"noise sigma must be >= 0, got {self.noise_sigma}")


@dataclass
class RegionBlurMap:
    labels: np.ndarray                      # (h, w) int region ids
    kernels: list                           # BlurKernel per region id

    def __post_init__(self):
        self.labels = np.asarray(self.labels)
        if self.labels.min() < 0 or self.labels.max() >= len(self.kernels):
            raise ValueError(
                f"labels span {self.labels.min()}..{self.labels.max()} "
                f"but only {len(self.kernels)} kernels are given")


def _offset_grid(size):
    c = (size - 1) / 2.0
    idx = np.arange(size) - c
    return np.meshgrid(idx, idx, indexing="ij")


def make_isotropic_gaussian(sigma, size=KERNEL_SIZE_ISO):
    """Normalized isotropic Gaussian kernel of odd size."""
    if sigma <= 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    if size % 2 == 0 or size < 1:
        raise ValueError(f"kernel size must be odd and positive, got {size}")
    yy, xx = _offset_grid(size)
    k = np.exp(-(yy * yy + xx * xx) / (2.0 * sigma * sigma))
    k /= k.sum()
    return BlurKernel(size, k, {"sigma_x": sigma, "sigma_y": sigma, "theta": 0.0})


def make_anisotropic_gaussian(sigma1, sigma2, theta, size):
    """Gaussian kernel with rotated covariance R diag(s1^2, s2^2) R^T."""
    if sigma1 <= 0 or sigma2 <= 0:
        raise ValueError(f"sigmas must be positive, got {sigma1}, {sigma2}")
    if size % 2 == 0 or size < 1:
        raise ValueError(f"kernel size must be odd and positive, got {size}")
    ct, st = math.cos(theta), math.sin(theta)
    rot = np.array([[ct, -st], [st, ct]])
    cov = rot @ np.diag([sigma1 ** 2, sigma2 ** 2]) @ rot.T
    det = np.linalg.det(cov)
    if not np.isfinite(det) or abs(det) < 1e-12:
        raise ValueError(f"covariance numerically singular (det={det})")
    icov = np.linalg.inv(cov)
    yy, xx = _offset_grid(size)
    # quadratic form p^T icov p over the offset grid, p = (x, y)
    q = icov[0, 0] * xx * xx + (icov[0, 1] + icov[1, 0]) * xx * yy + icov[1, 1] * yy * yy
    k = np.exp(-0.5 * q)
    k /= k.sum()
    return BlurKernel(size, k, {"sigma_x": sigma1, "sigma_y": sigma2, "theta": theta})


def gaussian8_kernels(scale, size=KERNEL_SIZE_ISO):
    """The eight evenly spaced isotropic widths used for evaluation."""
    if scale not in GAUSSIAN8_RANGES:
        raise ValueError(f"no evaluation width range for scale {scale}")
    lo, hi = GAUSSIAN8_RANGES[scale]
    widths = [lo + i * (hi - lo) / 7.0 for i in range(8)]
    return [make_isotropic_gaussian(w, size) for w in widths]


def blur(img, kernel):
    """Channelwise 2-D correlation with edge-replicate padding, same size."""
    n, c, h, w = img.dims
    k = kernel.size
    if k > h or k > w:
        raise ShapeError(f"kernel size {k} larger than image dims {img.dims}")
    r = k // 2
    xp = np.pad(img.data.astype(np.float64), ((0, 0), (0, 0), (r, r), (r, r)), mode="edge")
    win = sliding_window_view(xp, (k, k), axis=(2, 3))
    out = np.einsum("nchwab,ab->nchw", win, kernel.coeffs)
    return Tensor(out.astype(img.dtype))


def s_fold_downsample(img, s):
    """Keep the top-left sample of each s x s block."""
    n, c, h, w = img.dims
    if s < 1:
        raise ValueError(f"scale must be >= 1, got {s}")
    if h % s or w % s:
        raise ShapeError(f"image dims {img.dims} not divisible by scale {s}")
    return Tensor(img.data[:, :, ::s, ::s].copy())


def _philox_normals(seed, count):
    """count standard normals; value j is a pure function of (seed, j).

    Uniform draw i consumes exactly one 64-bit Philox output at counter
    position i, and normal j is the Box-Muller transform of uniforms
    (2j, 2j+1), so the mapping is independent of how work is split up.
    """
    g = Generator(Philox(key=np.uint64(seed & 0xFFFFFFFFFFFFFFFF)))
    u = g.random(2 * count)
    u1 = 1.0 - u[0::2]          # (0, 1]: keeps the log finite
    u2 = u[1::2]
    return np.sqrt(-2.0 * np.log(u1)) * np.cos(2.0 * np.pi * u2)


def add_awgn(img, sigma, seed):
    """Additive white Gaussian noise of std ``sigma`` in 0-255 units."""
    if sigma < 0:
        raise ValueError(f"sigma must be >= 0, got {sigma}")
    if sigma == 0:
        return Tensor(img.data.copy())
    noise = _philox_normals(seed, img.size).reshape(img.dims) * (sigma / 255.0)
    return Tensor(img.data + noise.astype(img.dtype))


def degrade(hr, spec):
    """blur -> s-fold downsample -> AWGN, in that order."""
    if hr.dims[2] % spec.scale or hr.dims[3] % spec.scale:
        raise ShapeError(f"HR dims {hr.dims} not divisible by scale {spec.scale}")
    out = blur(hr, spec.kernel)
    out = s_fold_downsample(out, spec.scale)
    return add_awgn(out, spec.noise_sigma, spec.seed)


def spatially_varying_degrade(hr, region_map, scale, sigma_range, seed):
    """Per-pixel kernel selection by region label, then downsample + noise.

    Each HR pixel takes the blur of its region's kernel; sigma is drawn
    uniformly from sigma_range using the seed, so the whole pipeline is a
    pure function of (hr, region_map, scale, sigma_range, seed).
    """
    n, c, h, w = hr.dims
    if region_map.labels.shape != (h, w):
        raise ShapeError(f"label map shape {region_map.labels.shape} vs HR dims {hr.dims}")
    blurred = np.zeros_like(hr.data)
    for rid in np.unique(region_map.labels):
        mask = region_map.labels == rid
        full = blur(hr, region_map.kernels[int(rid)])
        blurred[:, :, mask] = full.data[:, :, mask]
    out = s_fold_downsample(Tensor(blurred), scale)
    lo, hi = sigma_range
    g = Generator(Philox(key=np.uint64(seed & 0xFFFFFFFFFFFFFFFF)))
    sigma = lo + (hi - lo) * g.random()
    noise_seed = int(g.integers(0, 2 ** 63))
    return add_awgn(out, float(sigma), noise_seed)
