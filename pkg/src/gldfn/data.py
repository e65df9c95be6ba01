"""HR image pool, patch sampling and degradation sampling for training.

A single Philox generator keyed by the config seed drives every random
choice, so the delivered pair sequence is a pure function of the seed.
"""

from __future__ import annotations

import hashlib
import os
import warnings

import numpy as np
from numpy.random import Generator, Philox

_warned_small = set()

from .config import ANISO_KERNEL_SIZE, ANISO_TRAIN_WIDTH, ISO_TRAIN_WIDTH
from .degradation import (
    KERNEL_SIZE_ISO,
    RegionBlurMap,
    add_awgn,
    blur,
    make_anisotropic_gaussian,
    make_isotropic_gaussian,
    s_fold_downsample,
    spatially_varying_degrade,
)
from .tensor import Tensor


def filename_seed(name):
    """Stable 63-bit seed from an image name; independent of list order."""
    digest = hashlib.blake2b(name.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little") & 0x7FFFFFFFFFFFFFFF


def list_pngs(directory):
    names = sorted(f for f in os.listdir(directory) if f.lower().endswith(".png"))
    if not names:
        raise FileNotFoundError(f"no .png files in {directory}")
    return names


def load_hr_pool(directory):
    """[(name, Tensor)] for every PNG in the directory, sorted by name."""
    from .images import load_png

    return [(name, load_png(os.path.join(directory, name))) for name in list_pngs(directory)]


def make_training_rng(seed):
    return Generator(Philox(key=np.uint64(seed & 0xFFFFFFFFFFFFFFFF)))


def sample_kernel(setting, scale, rng, width_range=None):
    """Draw a blur kernel for the active training setting."""
    if setting == "iso":
        lo, hi = width_range or ISO_TRAIN_WIDTH[scale]
        sigma = lo + (hi - lo) * rng.random()
        return make_isotropic_gaussian(float(sigma), KERNEL_SIZE_ISO)
    if setting == "aniso":
        lo, hi = width_range or ANISO_TRAIN_WIDTH
        s1 = lo + (hi - lo) * rng.random()
        s2 = lo + (hi - lo) * rng.random()
        theta = -np.pi + 2 * np.pi * rng.random()
        return make_anisotropic_gaussian(float(s1), float(s2), float(theta), ANISO_KERNEL_SIZE[scale])
    raise ValueError(f"no single-kernel sampler for setting '{setting}'")


def varying_region_kernels(rng, size):
    """A defocus-style isotropic kernel and a motion-style elongated one."""
    defocus = make_isotropic_gaussian(float(0.5 + 2.0 * rng.random()), size)
    motion = make_anisotropic_gaussian(
        float(2.0 + 2.0 * rng.random()), float(0.2 + 0.4 * rng.random()),
        float(-np.pi + 2 * np.pi * rng.random()), size)
    return [defocus, motion]


def half_split_labels(h, w, rng):
    """Random horizontal or vertical half/half region map."""
    labels = np.zeros((h, w), dtype=np.int64)
    if rng.random() < 0.5:
        labels[:, w // 2 :] = 1
    else:
        labels[h // 2 :, :] = 1
    return labels


def _augment(patch, rng):
    d = patch.data[0]
    rot = int(rng.integers(0, 4))
    if rot:
        d = np.rot90(d, rot, axes=(1, 2))
    if rng.random() < 0.5:
        d = d[:, :, ::-1]
    return Tensor(np.ascontiguousarray(d)[None])


def sample_training_pair(hr_pool, cfg, rng):
    """One aligned (lr, hr) patch pair per the active setting.

    Crops a random (patch*s)^2 HR window, optionally augments it with a
    random 90-degree rotation and horizontal flip, then degrades it.
    Images smaller than the crop are skipped.
    """
    s = cfg.net.scale
    crop = cfg.patch * s
    for _ in range(10 * len(hr_pool)):
        name, img = hr_pool[int(rng.integers(0, len(hr_pool)))]
        n, c, h, w = img.dims
        if h < crop or w < crop:
            if name not in _warned_small:
                _warned_small.add(name)
                warnings.warn(f"skipping '{name}': {h}x{w} smaller than the {crop}x{crop} crop")
            continue
        y = int(rng.integers(0, h - crop + 1))
        x = int(rng.integers(0, w - crop + 1))
        hr = Tensor(np.ascontiguousarray(img.data[:, :, y : y + crop, x : x + crop]))
        if cfg.augment:
            hr = _augment(hr, rng)
        noise_seed = int(rng.integers(0, 2 ** 63))
        if cfg.setting == "varying":
            kernels = varying_region_kernels(rng, KERNEL_SIZE_ISO)
            labels = half_split_labels(crop, crop, rng)
            lr = spatially_varying_degrade(
                hr, RegionBlurMap(labels, kernels), s, cfg.noise_range, noise_seed)
        else:
            kernel = sample_kernel(cfg.setting, s, rng, cfg.width_range)
            lr = add_awgn(s_fold_downsample(blur(hr, kernel), s), cfg.noise_sigma, noise_seed)
        return lr, hr
    raise ValueError(f"no image in the pool is at least {crop}x{crop}")


def sample_training_batch(hr_pool, cfg, rng):
    pairs = [sample_training_pair(hr_pool, cfg, rng) for _ in range(cfg.batch)]
    lr = Tensor(np.concatenate([p[0].data for p in pairs], axis=0))
    hr = Tensor(np.concatenate([p[1].data for p in pairs], axis=0))
    return lr, hr
