"""Network assembly: shallow feature extraction, dual dynamic-filter
refinement (modules chained into groups with residual-in-residual skips,
global-to-local fusion after each group), and the reconstruction head.

Parameters live in a flat WeightStore keyed by dotted names so they can
be saved, loaded and updated without touching the forward code.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dynfilters import (
    GlobalDynFilterParams,
    LocalDynFilterParams,
    global_dyn_conv,
    local_dyn_conv,
    predict_local_filters,
)
from .tensor import (
    ShapeError,
    Tensor,
    activation,
    add,
    bilinear_upsample,
    concat_channels,
    conv2d,
    mean_abs_diff,
    pixel_shuffle,
    root_mean_square_diff,
)

ATTN_REDUCTION = 4


class WeightStoreError(KeyError):
    """A named parameter is missing or mis-shaped."""


@dataclass
class NetworkConfig:
    scale: int = 2
    channels: int = 64
    n_shallow_rb: int = 2
    n_groups: int = 5
    n_modules_per_group: int = 10
    n_kernels: int = 4         # parallel kernels in the global dynamic layer
    filter_k: int = 3          # local dynamic filter window
    activation: str = "relu"

    def __post_init__(self):
        for name in ("scale", "channels", "n_shallow_rb", "n_groups",
                     "n_modules_per_group", "n_kernels", "filter_k"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")
        if self.scale not in (1, 2, 3, 4):
            raise ValueError(f"scale must be in 1..4, got {self.scale}")
        if self.channels % ATTN_REDUCTION:
            raise ValueError(f"channels must divide by {ATTN_REDUCTION}, got {self.channels}")
        if self.filter_k % 2 == 0:
            raise ValueError(f"filter_k must be odd, got {self.filter_k}")


class WeightStore:
    """Ordered name -> Tensor map over every learnable parameter."""

    def __init__(self, tensors=None):
        self._tensors = dict(tensors) if tensors else {}

    def __setitem__(self, name, tensor):
        self._tensors[name] = tensor

    def __getitem__(self, name):
        try:
            return self._tensors[name]
        except KeyError:
            raise WeightStoreError(f"missing parameter '{name}'") from None

    def __contains__(self, name):
        return name in self._tensors

    def __len__(self):
        return len(self._tensors)

    def items(self):
        return self._tensors.items()

    def names(self):
        return list(self._tensors)

    def fetch(self, name, dims):
        t = self[name]
        if t.dims != dims:
            raise WeightStoreError(f"parameter '{name}' has dims {t.dims}, expected {dims}")
        return t

    def zero_grads(self):
        for t in self._tensors.values():
            t.grad = None

    def n_values(self):
        return sum(t.size for t in self._tensors.values())


def _conv_spec(prefix, c_out, c_in, k, kind="conv"):
    return [(f"{prefix}.w", (c_out, c_in, k, k), kind),
            (f"{prefix}.b", (1, c_out, 1, 1), kind)]


def parameter_specs(cfg):
    """Ordered (name, dims, init_kind) for every parameter of a config."""
    C = cfg.channels
    red = C // ATTN_REDUCTION
    kk = cfg.filter_k * cfg.filter_k
    specs = []
    specs += _conv_spec("head", C, 3, 3)
    for i in range(cfg.n_shallow_rb):
        for j in (1, 2, 3):
            specs += _conv_spec(f"shallow.rb{i}.conv{j}", C, C, 3)
    for g in range(cfg.n_groups):
        for m in range(cfg.n_modules_per_group):
            p = f"g{g}.m{m}"
            specs += _conv_spec(f"{p}.local.conv1", C, C, 3)
            specs += _conv_spec(f"{p}.local.conv2", C, C, 3)
            specs += _conv_spec(f"{p}.local.sp", kk, C, 1, kind="predict")
            specs.append((f"{p}.local.sp.scale", (1, 1, 1, 1), "one"))
            specs += _conv_spec(f"{p}.local.ch1", red, C, 1)
            specs += _conv_spec(f"{p}.local.ch2", C * kk, red, 1, kind="predict")
            specs.append((f"{p}.local.ch.scale", (1, 1, 1, 1), "one"))
            specs += _conv_spec(f"{p}.glob.conv1", C, C, 3)
            specs += _conv_spec(f"{p}.glob.conv2", C, C, 3)
            for j in range(cfg.n_kernels):
                specs += _conv_spec(f"{p}.glob.kernel{j}", C, C, 3)
            specs += _conv_spec(f"{p}.glob.attn1", red, C, 1)
            specs += _conv_spec(f"{p}.glob.attn2", cfg.n_kernels, red, 1, kind="zero")
        specs += _conv_spec(f"g{g}.fuse", C, 2 * C, 1)
    specs += _conv_spec("merge", C, 2 * C, 1)
    specs += _conv_spec("recon", 3 * cfg.scale * cfg.scale, C, 3)
    return specs


def parameter_count(cfg):
    return sum(int(np.prod(dims)) for _, dims, _ in parameter_specs(cfg))


def config_from_store(store, activation="relu"):
    """Recover the NetworkConfig implied by a store's names and shapes.

    The store is then validated against the recovered config, so a
    missing or mis-shaped parameter is rejected by name.
    """
    channels = store["head.w"].dims[0]
    scale_sq = store["recon.w"].dims[0] // 3
    scale = int(round(scale_sq ** 0.5))
    filter_k = int(round(store["g0.m0.local.sp.w"].dims[0] ** 0.5))

    def count(pattern):
        i = 0
        while any(name.startswith(pattern.format(i)) for name in store.names()):
            i += 1
        return i

    cfg = NetworkConfig(
        scale=scale,
        channels=channels,
        n_shallow_rb=count("shallow.rb{}."),
        n_groups=count("g{}."),
        n_modules_per_group=count("g0.m{}."),
        n_kernels=count("g0.m0.glob.kernel{}."),
        filter_k=filter_k,
        activation=activation)
    validate_store(store, cfg)
    return cfg


def validate_store(store, cfg):
    """Check the store holds exactly the parameters the config demands."""
    expected = {name: dims for name, dims, _ in parameter_specs(cfg)}
    for name, dims in expected.items():
        store.fetch(name, dims)
    for name in store.names():
        if name not in expected:
            raise WeightStoreError(f"unexpected parameter '{name}'")


def init_weights(cfg, seed=0, dtype=np.float32):
    """Seeded initial WeightStore.

    Plain convolutions use fan-in-scaled uniform init; the attention
    logit layers start at zero (uniform mixture weights); the filter
    prediction layers start near zero (std 0.01) so the standardized
    dynamic filters begin small and training stays stable.
    """
    rng = np.random.default_rng(seed)
    store = WeightStore()
    fan_ins = {}
    for name, dims, kind in parameter_specs(cfg):
        if name.endswith(".w"):
            fan_ins[name[:-2]] = dims[1] * dims[2] * dims[3]
        if kind == "zero":
            data = np.zeros(dims)
        elif kind == "one":
            data = np.ones(dims)
        elif kind == "predict":
            data = rng.normal(0.0, 0.01, dims) if name.endswith(".w") else np.zeros(dims)
        else:
            bound = 1.0 / np.sqrt(fan_ins[name[:-2]])
            data = rng.uniform(-bound, bound, dims)
        store[name] = Tensor(data.astype(dtype), requires_grad=True)
    return store


def zero_weights(cfg, dtype=np.float32):
    store = WeightStore()
    for name, dims, _ in parameter_specs(cfg):
        store[name] = Tensor(np.zeros(dims, dtype=dtype), requires_grad=True)
    return store


def _conv(x, weights, prefix, c_out, c_in, k):
    w = weights.fetch(f"{prefix}.w", (c_out, c_in, k, k))
    b = weights.fetch(f"{prefix}.b", (1, c_out, 1, 1))
    return conv2d(x, w, b, padding=(k - 1) // 2)


def residual_block(x, weights, prefix, cfg):
    """conv-act-conv-act-conv plus identity skip; same spatial size."""
    C = cfg.channels
    z = activation(_conv(x, weights, f"{prefix}.conv1", C, C, 3), cfg.activation)
    z = activation(_conv(z, weights, f"{prefix}.conv2", C, C, 3), cfg.activation)
    z = _conv(z, weights, f"{prefix}.conv3", C, C, 3)
    return add(z, x)


def shallow_extract(lr, weights, cfg):
    """3-channel input conv followed by the shallow residual blocks."""
    if lr.dims[1] != 3:
        raise ShapeError(f"expected 3-channel input, got dims {lr.dims}")
    f = _conv(lr, weights, "head", cfg.channels, 3, 3)
    for i in range(cfg.n_shallow_rb):
        f = residual_block(f, weights, f"shallow.rb{i}", cfg)
    return f


def _local_params(weights, prefix, cfg):
    C, kk = cfg.channels, cfg.filter_k * cfg.filter_k
    red = C // ATTN_REDUCTION
    return LocalDynFilterParams(
        k=cfg.filter_k,
        sp_w=weights.fetch(f"{prefix}.sp.w", (kk, C, 1, 1)),
        sp_b=weights.fetch(f"{prefix}.sp.b", (1, kk, 1, 1)),
        sp_scale=weights.fetch(f"{prefix}.sp.scale", (1, 1, 1, 1)),
        ch_w1=weights.fetch(f"{prefix}.ch1.w", (red, C, 1, 1)),
        ch_b1=weights.fetch(f"{prefix}.ch1.b", (1, red, 1, 1)),
        ch_w2=weights.fetch(f"{prefix}.ch2.w", (C * kk, red, 1, 1)),
        ch_b2=weights.fetch(f"{prefix}.ch2.b", (1, C * kk, 1, 1)),
        ch_scale=weights.fetch(f"{prefix}.ch.scale", (1, 1, 1, 1)))


def _global_params(weights, prefix, cfg):
    C = cfg.channels
    red = C // ATTN_REDUCTION
    return GlobalDynFilterParams(
        kernels=[weights.fetch(f"{prefix}.kernel{j}.w", (C, C, 3, 3)) for j in range(cfg.n_kernels)],
        biases=[weights.fetch(f"{prefix}.kernel{j}.b", (1, C, 1, 1)) for j in range(cfg.n_kernels)],
        attn_w1=weights.fetch(f"{prefix}.attn1.w", (red, C, 1, 1)),
        attn_b1=weights.fetch(f"{prefix}.attn1.b", (1, red, 1, 1)),
        attn_w2=weights.fetch(f"{prefix}.attn2.w", (cfg.n_kernels, red, 1, 1)),
        attn_b2=weights.fetch(f"{prefix}.attn2.b", (1, cfg.n_kernels, 1, 1)))


def ddfm_forward(local_in, global_in, weights, cfg, prefix):
    """One dual dynamic filter module; the branches never exchange data.

    Each branch runs conv-act-conv, its dynamic filtering layer, then a
    skip from the branch input.  The global branch applies the
    activation after aggregation, before its skip.
    """
    if local_in.dims != global_in.dims:
        raise ShapeError(f"branch dims differ: {local_in.dims} vs {global_in.dims}")
    C = cfg.channels
    act = cfg.activation

    z = activation(_conv(local_in, weights, f"{prefix}.local.conv1", C, C, 3), act)
    z = _conv(z, weights, f"{prefix}.local.conv2", C, C, 3)
    dsp, dch = predict_local_filters(z, _local_params(weights, f"{prefix}.local", cfg))
    local_out = add(local_dyn_conv(z, dsp, dch), local_in)

    z = activation(_conv(global_in, weights, f"{prefix}.glob.conv1", C, C, 3), act)
    z = _conv(z, weights, f"{prefix}.glob.conv2", C, C, 3)
    z = activation(global_dyn_conv(z, _global_params(weights, f"{prefix}.glob", cfg)), act)
    global_out = add(z, global_in)
    return local_out, global_out


def ddfg_forward(local_in, global_in, weights, cfg, prefix):
    """A group: chained modules, long skips per branch, then fusion.

    The fusion 1x1 conv feeds the concatenated branch outputs back into
    the local stream only; the global stream passes through unchanged.
    """
    local, glob = local_in, global_in
    for m in range(cfg.n_modules_per_group):
        local, glob = ddfm_forward(local, glob, weights, cfg, f"{prefix}.m{m}")
    local = add(local, local_in)
    glob = add(glob, global_in)
    C = cfg.channels
    fused = _conv(concat_channels(local, glob), weights, f"{prefix}.fuse", C, 2 * C, 1)
    return fused, glob


def reconstruct(features, lr, weights, cfg):
    """conv -> sub-pixel shuffle, plus the bilinear upsample skip."""
    s = cfg.scale
    up = _conv(features, weights, "recon", 3 * s * s, cfg.channels, 3)
    up = pixel_shuffle(up, s)
    return add(up, bilinear_upsample(lr, s))


def gldfn_forward(lr, weights, cfg):
    """Full forward pass: (n, 3, h, w) -> (n, 3, h*s, w*s)."""
    f = shallow_extract(lr, weights, cfg)
    local, glob = f, f
    for g in range(cfg.n_groups):
        local, glob = ddfg_forward(local, glob, weights, cfg, f"g{g}")
    C = cfg.channels
    merged = _conv(concat_channels(local, glob), weights, "merge", C, 2 * C, 1)
    return reconstruct(merged, lr, weights, cfg)


def l1_loss(sr, gt):
    """Mean absolute error over all elements."""
    return mean_abs_diff(sr, gt)


def rmse_loss(sr, gt):
    """Root mean squared error; the alternative objective for ablations."""
    return root_mean_square_diff(sr, gt)
