"""Central-difference gradient checking for the tensor ops.

All checks run in 64-bit: finite differences in float32 lose too many
digits to separate a wrong backward rule from rounding noise.
"""

from __future__ import annotations

import numpy as np

from .tensor import Tape, Tensor, backward, weighted_sum


def grad_check(fn, inputs, eps=1e-5, projection_seed=0):
    """Compare taped gradients of fn against central differences.

    fn maps the given tensors to one output tensor.  The output is
    scalarized against a fixed random projection so a single backward
    pass yields every gradient.  Returns the max over all input elements
    of |analytic - numeric| / max(|analytic|, |numeric|, 1e-8).
    """
    if eps <= 0:
        raise ValueError(f"grad_check needs eps > 0, got {eps}")
    work = [Tensor(t.data.astype(np.float64), requires_grad=True) for t in inputs]

    with Tape() as tape:
        out = fn(*work)
        tape.check_finite()
        rng = np.random.default_rng(projection_seed)
        proj = rng.standard_normal(out.dims)
        loss = weighted_sum(out, proj)
    backward(loss, tape)
    analytic = [t.grad.copy() if t.grad is not None else np.zeros_like(t.data) for t in work]

    def eval_loss():
        o = fn(*work)
        return float((o.data * proj).sum())

    max_rel = 0.0
    for t, ag in zip(work, analytic):
        flat = t.data.reshape(-1)
        gflat = ag.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            f_plus = eval_loss()
            flat[i] = orig - eps
            f_minus = eval_loss()
            flat[i] = orig
            numeric = (f_plus - f_minus) / (2 * eps)
            denom = max(abs(gflat[i]), abs(numeric), 1e-8)
            max_rel = max(max_rel, abs(gflat[i] - numeric) / denom)
    return max_rel


def suite(module=None, rng_seed=7):
    """Run the per-operator checks; returns [(name, max_rel_err, threshold)].

    ``module`` filters by substring (e.g. "conv" or "dynfilters").
    """
    from . import dynfilters as dyn
    from . import network as net
    from . import tensor as T

    rng = np.random.default_rng(rng_seed)

    def t(*dims):
        return Tensor(rng.standard_normal(dims))

    checks = []

    def check(name, threshold, fn, *inputs, eps=1e-5):
        if module and module not in name:
            return
        checks.append((name, grad_check(fn, inputs, eps=eps), threshold))

    check("tensor.conv2d", 1e-6,
          lambda x, w, b: T.conv2d(x, w, b, padding=1), t(1, 2, 4, 4), t(3, 2, 3, 3), t(1, 3, 1, 1))
    check("tensor.conv2d_stride2", 1e-6,
          lambda x, w: T.conv2d(x, w, stride=2, padding=1), t(2, 2, 5, 5), t(2, 2, 3, 3))
    # keep relu inputs away from the kink at 0
    x_off = Tensor(rng.standard_normal((1, 3, 4, 4)) + np.where(rng.random((1, 3, 4, 4)) < 0.5, -1.0, 1.0))
    check("tensor.activation", 1e-6, lambda x: T.activation(x), x_off)
    check("tensor.softmax", 1e-6, lambda x: T.softmax_channels(x), t(3, 5, 1, 1))
    check("tensor.pixel_shuffle", 1e-6, lambda x: T.pixel_shuffle(x, 2), t(1, 8, 3, 3))
    check("tensor.bilinear_upsample", 1e-6, lambda x: T.bilinear_upsample(x, 2), t(1, 2, 3, 4))
    check("tensor.global_avg_pool", 1e-6, lambda x: T.global_avg_pool(x), t(2, 3, 4, 4))
    check("tensor.concat_channels", 1e-6, lambda a, b: T.concat_channels(a, b), t(1, 2, 3, 3), t(1, 3, 3, 3))
    check("tensor.mean_abs_diff", 1e-5,
          lambda a, b: T.mean_abs_diff(a, b), t(1, 2, 3, 3), t(1, 2, 3, 3), eps=1e-6)

    check("dynfilters.standardize", 1e-5,
          lambda x, s: dyn.standardize_filters(x, 9, s), t(2, 18, 3, 3), t(1, 1, 1, 1))
    check("dynfilters.local_dyn_conv", 1e-5,
          lambda x, sp, ch: dyn.local_dyn_conv(x, sp, ch),
          t(1, 3, 4, 4), t(1, 16, 3, 3), t(1, 3, 3, 3))

    # positive squeeze bias keeps the attention relu off its kink
    gp = dyn.GlobalDynFilterParams(
        kernels=[t(3, 4, 3, 3) for _ in range(3)],
        biases=[t(1, 3, 1, 1) for _ in range(3)],
        attn_w1=t(1, 4, 1, 1), attn_b1=Tensor(np.abs(rng.standard_normal((1, 1, 1, 1))) + 0.5),
        attn_w2=t(3, 1, 1, 1), attn_b2=t(1, 3, 1, 1))
    def global_fn(x, k0, k1, k2, b0, b1, b2, aw1, ab1, aw2, ab2):
        p = dyn.GlobalDynFilterParams([k0, k1, k2], [b0, b1, b2], aw1, ab1, aw2, ab2)
        return dyn.global_dyn_conv(x, p)

    check("dynfilters.global_dyn_conv", 1e-5, global_fn,
          t(2, 4, 4, 4), *gp.kernels, *gp.biases, gp.attn_w1, gp.attn_b1, gp.attn_w2, gp.attn_b2)

    lp = dyn.LocalDynFilterParams(
        k=3,
        sp_w=t(9, 4, 1, 1), sp_b=t(1, 9, 1, 1), sp_scale=t(1, 1, 1, 1),
        ch_w1=t(1, 4, 1, 1), ch_b1=Tensor(np.abs(rng.standard_normal((1, 1, 1, 1))) + 0.5),
        ch_w2=t(36, 1, 1, 1), ch_b2=t(1, 36, 1, 1), ch_scale=t(1, 1, 1, 1))

    def predict_fn(x, sp_w, sp_b, sp_s, ch_w1, ch_b1, ch_w2, ch_b2, ch_s):
        p = dyn.LocalDynFilterParams(3, sp_w, sp_b, sp_s, ch_w1, ch_b1, ch_w2, ch_b2, ch_s)
        dsp, dch = dyn.predict_local_filters(x, p)
        return T.concat_channels(T.reshape(dsp, (1, 16 * 9, 1, 1)), T.reshape(dch, (1, 4 * 9, 1, 1)))

    check("dynfilters.predict_local_filters", 1e-5, predict_fn,
          t(1, 4, 4, 4), lp.sp_w, lp.sp_b, lp.sp_scale, lp.ch_w1, lp.ch_b1, lp.ch_w2, lp.ch_b2, lp.ch_scale)

    if module is None or "network" in module:
        cfg = net.NetworkConfig(scale=2, channels=8, n_shallow_rb=1, n_groups=1,
                                n_modules_per_group=1, n_kernels=2, filter_k=3)
        weights = gradcheck_point_weights(cfg, seed=3)
        params = weights.names()
        lr_img = Tensor(rng.random((1, 3, 8, 8)))
        sr0 = net.gldfn_forward(lr_img, weights, cfg)
        # keep |sr - gt| far from the L1 tie so the loss is smooth at the
        # check point; finite differences are meaningless at a kink
        signs = np.where(rng.random(sr0.dims) < 0.5, -0.5, 0.5)
        gt_img = Tensor(sr0.data + signs)

        def net_fn(*tensors):
            store = net.WeightStore(dict(zip(params, tensors)))
            sr = net.gldfn_forward(lr_img, store, cfg)
            return net.l1_loss(sr, gt_img)

        err = grad_check(net_fn, [weights[n] for n in params], eps=1e-3)
        checks.append(("network.gldfn_tiny", err, 1e-4))

    return checks


def gradcheck_point_weights(cfg, seed=0):
    """Weights placing the network at a smooth, well-conditioned point.

    Finite differences only approximate a derivative where one exists, so
    the check point must keep every relu preactivation away from zero
    (small conv weights, +0.5 biases) and give the predicted filters a
    healthy spread before standardization (larger prediction weights).
    The resulting gradients still exercise every backward rule.
    """
    from . import network as net

    rng = np.random.default_rng(seed)
    store = net.WeightStore()
    for name, dims, kind in net.parameter_specs(cfg):
        if kind == "one":
            data = np.ones(dims)
        elif kind == "predict":
            data = rng.normal(0.0, 0.5, dims)
        elif kind == "zero":   # attention logit layer; softmax is smooth
            data = rng.uniform(-0.1, 0.1, dims)
        elif name.endswith(".b"):
            data = np.full(dims, 0.5)
        else:
            data = rng.uniform(-0.02, 0.02, dims)
        store[name] = net.Tensor(data.astype(np.float64), requires_grad=True)
    return store
