"""Dataset evaluation and single-image inference.

Each test image is degraded with a seed hashed from its file name, so
scores never depend on evaluation order or on other images in the
directory.
"""

from __future__ import annotations

import os

import numpy as np
from numpy.random import Generator, Philox

from .config import ANISO_KERNEL_SIZE, ANISO_TRAIN_WIDTH
from .data import filename_seed, half_split_labels, list_pngs, varying_region_kernels
from .degradation import (
    KERNEL_SIZE_ISO,
    DegradationSpec,
    RegionBlurMap,
    degrade,
    gaussian8_kernels,
    make_anisotropic_gaussian,
    spatially_varying_degrade,
)
from .images import crop_to_multiple, load_png, save_png
from .metrics import EvalReport, psnr, rgb_to_y, ssim
from .network import gldfn_forward
from .tensor import Tensor

DEFAULT_G8_INDEX = 3       # kernel #4 of the eight evaluation widths


def degrade_for_eval(hr, setting, scale, seed, sigma=0.0, g8_index=DEFAULT_G8_INDEX,
                     noise_range=(0.0, 5.0)):
    """Deterministic per-image LR synthesis for one evaluation setting."""
    if setting == "iso":
        kernel = gaussian8_kernels(scale)[g8_index]
        return degrade(hr, DegradationSpec(kernel, scale, sigma, seed))
    if setting == "aniso":
        g = Generator(Philox(key=np.uint64(seed)))
        lo, hi = ANISO_TRAIN_WIDTH
        s1 = lo + (hi - lo) * g.random()
        s2 = lo + (hi - lo) * g.random()
        theta = -np.pi + 2 * np.pi * g.random()
        kernel = make_anisotropic_gaussian(float(s1), float(s2), float(theta),
                                           ANISO_KERNEL_SIZE[scale])
        noise_seed = int(g.integers(0, 2 ** 63))
        return degrade(hr, DegradationSpec(kernel, scale, sigma, noise_seed))
    if setting == "varying":
        g = Generator(Philox(key=np.uint64(seed)))
        kernels = varying_region_kernels(g, KERNEL_SIZE_ISO)
        labels = half_split_labels(hr.dims[2], hr.dims[3], g)
        region_seed = int(g.integers(0, 2 ** 63))
        return spatially_varying_degrade(hr, RegionBlurMap(labels, kernels), scale,
                                         noise_range, region_seed)
    raise ValueError(f"unknown setting '{setting}'")


def score_pair(sr, hr, shave):
    """(psnr, ssim) on the luminance channel after clamping sr to [0, 1]."""
    sr = Tensor(np.clip(sr.data, 0.0, 1.0))
    y_sr = rgb_to_y(sr)
    y_hr = rgb_to_y(hr)
    return psnr(y_sr, y_hr, shave), ssim(y_sr, y_hr, shave)


def evaluate(weights, hr_dir, setting, scale, cfg, sigma=0.0,
             g8_index=DEFAULT_G8_INDEX, g8_sweep=False, noise_range=(0.0, 5.0),
             shave=None, forward=None):
    """Score every PNG in hr_dir; returns an EvalReport.

    ``forward`` defaults to the network but accepts any callable
    (lr tensor) -> sr tensor, which is how baselines are scored.
    """
    if shave is None:
        shave = scale
    if forward is None:
        forward = lambda lr: gldfn_forward(lr, weights, cfg)
    report = EvalReport(setting=setting, scale=scale)
    kernel_indices = range(8) if (setting == "iso" and g8_sweep) else [g8_index]
    for name in list_pngs(hr_dir):
        hr = crop_to_multiple(load_png(os.path.join(hr_dir, name)), scale)
        seed = filename_seed(name)
        for ki in kernel_indices:
            lr = degrade_for_eval(hr, setting, scale, seed, sigma=sigma,
                                  g8_index=ki, noise_range=noise_range)
            sr = forward(lr)
            p, s = score_pair(sr, hr, shave)
            label = name if len(kernel_indices) == 1 else f"{name}#k{ki + 1}"
            report.add(label, p, s)
    return report


def infer(weights, cfg, in_png, out_png):
    """Super-resolve one PNG; output dims are input dims times the scale."""
    lr = load_png(in_png)
    sr = gldfn_forward(lr, weights, cfg)
    save_png(Tensor(np.clip(sr.data, 0.0, 1.0)), out_png)
    return sr.dims
