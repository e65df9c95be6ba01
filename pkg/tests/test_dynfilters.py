import numpy as np
import pytest

from gldfn import dynfilters as dyn
from gldfn import tensor as T
from gldfn.dynfilters import (
    GlobalDynFilterParams,
    LocalDynFilterParams,
    OpCounter,
    attention_weights,
    conv2d_reference,
    global_dyn_conv,
    local_dyn_conv,
    local_dyn_conv_reference,
    mac_count,
    predict_local_filters,
)
from gldfn.tensor import ShapeError, Tensor


def t(rng, *dims, scale=1.0):
    return Tensor(rng.standard_normal(dims) * scale)


def random_global_params(rng, c_in, c_out, K, zero_attn=False):
    red = max(1, c_in // 4)
    attn_w2 = Tensor(np.zeros((K, red, 1, 1))) if zero_attn else t(rng, K, red, 1, 1)
    attn_b2 = Tensor(np.zeros((1, K, 1, 1))) if zero_attn else t(rng, 1, K, 1, 1)
    return GlobalDynFilterParams(
        kernels=[t(rng, c_out, c_in, 3, 3) for _ in range(K)],
        biases=[t(rng, 1, c_out, 1, 1) for _ in range(K)],
        attn_w1=t(rng, red, c_in, 1, 1), attn_b1=t(rng, 1, red, 1, 1),
        attn_w2=attn_w2, attn_b2=attn_b2)


def random_local_params(rng, c, k, zero_predict=False):
    red = max(1, c // 4)
    kk = k * k
    mk = (lambda *d: Tensor(np.zeros(d))) if zero_predict else (lambda *d: t(rng, *d, scale=0.5))
    return LocalDynFilterParams(
        k=k,
        sp_w=mk(kk, c, 1, 1), sp_b=mk(1, kk, 1, 1), sp_scale=Tensor(np.ones((1, 1, 1, 1))),
        ch_w1=t(rng, red, c, 1, 1), ch_b1=t(rng, 1, red, 1, 1),
        ch_w2=mk(c * kk, red, 1, 1), ch_b2=mk(1, c * kk, 1, 1),
        ch_scale=Tensor(np.ones((1, 1, 1, 1))))


class TestAttentionWeights:
    def test_zero_final_layer_gives_uniform(self):
        rng = np.random.default_rng(0)
        p = random_global_params(rng, 8, 8, 4, zero_attn=True)
        pi = attention_weights(t(rng, 3, 8, 5, 5), p)
        np.testing.assert_allclose(pi.data, 0.25, atol=1e-7)

    def test_single_kernel_always_one(self):
        rng = np.random.default_rng(1)
        p = random_global_params(rng, 4, 4, 1)
        pi = attention_weights(t(rng, 2, 4, 3, 3), p)
        np.testing.assert_allclose(pi.data, 1.0)

    def test_rows_on_simplex(self):
        rng = np.random.default_rng(2)
        for _ in range(10):
            p = random_global_params(rng, 8, 4, 5)
            pi = attention_weights(t(rng, 4, 8, 4, 4, scale=3.0), p)
            assert pi.dims == (4, 5, 1, 1)
            assert np.all(pi.data >= 0) and np.all(pi.data <= 1)
            np.testing.assert_allclose(pi.data.sum(axis=1), 1.0, atol=1e-6)

    def test_channel_mismatch_rejected(self):
        rng = np.random.default_rng(3)
        p = random_global_params(rng, 8, 8, 4)
        with pytest.raises(ShapeError):
            attention_weights(t(rng, 1, 6, 4, 4), p)

    def test_argmax_invariant_to_positive_logit_scaling(self):
        rng = np.random.default_rng(4)
        for _ in range(20):
            logits = rng.standard_normal((2, 6, 1, 1))
            base = T.softmax_channels(Tensor(logits))
            for c in (0.5, 2.0, 10.0):
                scaled = T.softmax_channels(Tensor(logits * c))
                np.testing.assert_array_equal(np.argmax(scaled.data, axis=1),
                                              np.argmax(base.data, axis=1))


class TestGlobalDynConv:
    def test_single_kernel_equals_conv2d(self):
        rng = np.random.default_rng(5)
        p = random_global_params(rng, 4, 6, 1)
        x = t(rng, 2, 4, 5, 5)
        out = global_dyn_conv(x, p)
        ref = T.conv2d(x, p.kernels[0], p.biases[0], padding=1)
        assert np.abs(out.data - ref.data).max() < 1e-7

    def test_identical_kernels_independent_of_attention(self):
        rng = np.random.default_rng(6)
        K = 4
        kernel = t(rng, 5, 4, 3, 3)
        bias = t(rng, 1, 5, 1, 1)
        p = random_global_params(rng, 4, 5, K)
        p.kernels = [Tensor(kernel.data.copy()) for _ in range(K)]
        p.biases = [Tensor(bias.data.copy()) for _ in range(K)]
        x = t(rng, 3, 4, 6, 6)
        out = global_dyn_conv(x, p)
        ref = T.conv2d(x, kernel, bias, padding=1)
        assert np.abs(out.data - ref.data).max() < 1e-6

    def test_matches_aggregation_oracle(self):
        rng = np.random.default_rng(7)
        p = random_global_params(rng, 4, 3, 4)
        x = t(rng, 2, 4, 5, 5)
        out = global_dyn_conv(x, p)
        pi = attention_weights(x, p).data.reshape(2, 4)
        for i in range(2):
            wagg = sum(pi[i, j] * p.kernels[j].data for j in range(4))
            bagg = sum(pi[i, j] * p.biases[j].data for j in range(4))
            ref = conv2d_reference(Tensor(x.data[i : i + 1]), Tensor(wagg), Tensor(bagg), padding=1)
            assert np.abs(out.data[i] - ref.data[0]).max() < 1e-6

    def test_linear_in_input_with_frozen_attention(self):
        rng = np.random.default_rng(8)
        p = random_global_params(rng, 4, 4, 3)
        x = t(rng, 2, 4, 5, 5)
        pi = Tensor(np.array([[0.2, 0.3, 0.5], [0.6, 0.1, 0.3]]).reshape(2, 3, 1, 1))
        out1 = dyn._aggregated_conv(x, pi, p.kernels, p.biases, padding=1)
        out2 = dyn._aggregated_conv(T.mul_scalar(x, 2.0), pi, p.kernels, p.biases, padding=1)
        bias_mix = np.tensordot(pi.data.reshape(2, 3),
                                np.stack([b.data.reshape(4) for b in p.biases]), axes=(1, 0))
        bias_mix = bias_mix[:, :, None, None]
        np.testing.assert_allclose(out2.data - bias_mix, 2 * (out1.data - bias_mix), atol=1e-5)

    def test_shape_mismatch_rejected(self):
        rng = np.random.default_rng(9)
        p = random_global_params(rng, 4, 4, 2)
        with pytest.raises(ShapeError):
            global_dyn_conv(t(rng, 1, 5, 4, 4), p)


class TestPredictLocalFilters:
    def test_zero_branches_give_zero_filters(self):
        rng = np.random.default_rng(10)
        p = random_local_params(rng, 8, 3, zero_predict=True)
        dsp, dch = predict_local_filters(t(rng, 2, 8, 4, 4), p)
        np.testing.assert_array_equal(dsp.data, 0.0)
        np.testing.assert_array_equal(dch.data, 0.0)

    def test_standardization_contract(self):
        rng = np.random.default_rng(11)
        p = random_local_params(rng, 8, 3)
        p.sp_scale = Tensor(np.full((1, 1, 1, 1), 1.7))
        p.ch_scale = Tensor(np.full((1, 1, 1, 1), 0.6))
        dsp, dch = predict_local_filters(t(rng, 2, 8, 5, 5), p)
        for filt, scale in ((dsp, 1.7), (dch, 0.6)):
            flat = filt.data.reshape(filt.dims[0], filt.dims[1], -1)
            assert np.abs(flat.mean(axis=2)).max() < 1e-6
            np.testing.assert_allclose(flat.var(axis=2), scale ** 2, atol=1e-4)

    def test_shapes(self):
        rng = np.random.default_rng(12)
        p = random_local_params(rng, 8, 3)
        dsp, dch = predict_local_filters(t(rng, 3, 8, 6, 5), p)
        assert dsp.dims == (3, 30, 3, 3)
        assert dch.dims == (3, 8, 3, 3)


class TestLocalDynConv:
    def test_delta_spatial_ones_channel_is_identity(self):
        rng = np.random.default_rng(13)
        x = t(rng, 2, 3, 5, 5)
        dsp = np.zeros((2, 25, 3, 3))
        dsp[:, :, 1, 1] = 1.0
        dch = np.ones((2, 3, 3, 3))
        out = local_dyn_conv(x, Tensor(dsp), Tensor(dch))
        np.testing.assert_allclose(out.data, x.data, atol=1e-7)

    def test_uniform_spatial_ones_channel_is_box_mean(self):
        rng = np.random.default_rng(14)
        x = t(rng, 1, 2, 6, 6)
        k = 3
        dsp = np.full((1, 36, k, k), 1.0 / (k * k))
        dch = np.ones((1, 2, k, k))
        out = local_dyn_conv(x, Tensor(dsp), Tensor(dch))
        xp = np.pad(x.data, ((0, 0), (0, 0), (1, 1), (1, 1)))
        for y in range(6):
            for xx in range(6):
                box = xp[0, :, y : y + 3, xx : xx + 3].mean(axis=(1, 2)) * 9 / 9
                np.testing.assert_allclose(out.data[0, :, y, xx], box, atol=1e-6)

    def test_zero_channel_filter_annihilates(self):
        rng = np.random.default_rng(15)
        x = t(rng, 1, 2, 4, 4)
        dsp = t(rng, 1, 16, 3, 3)
        dch = Tensor(np.zeros((1, 2, 3, 3)))
        out = local_dyn_conv(x, dsp, dch)
        np.testing.assert_array_equal(out.data, 0.0)

    def test_matches_reference(self):
        rng = np.random.default_rng(16)
        for _ in range(50):
            x = t(rng, 1, 4, 6, 6)
            dsp = t(rng, 1, 36, 3, 3)
            dch = t(rng, 1, 4, 3, 3)
            fast = local_dyn_conv(x, dsp, dch)
            ref = local_dyn_conv_reference(x, dsp, dch)
            assert np.abs(fast.data - ref.data).max() < 1e-6

    def test_matches_reference_random_shapes(self):
        rng = np.random.default_rng(17)
        for _ in range(30):
            h = int(rng.integers(3, 9))
            w = int(rng.integers(3, 9))
            c = int(rng.integers(1, 9))
            k = int(rng.choice([3, 5]))
            n = int(rng.integers(1, 3))
            x = t(rng, n, c, h, w)
            dsp = t(rng, n, h * w, k, k)
            dch = t(rng, n, c, k, k)
            fast = local_dyn_conv(x, dsp, dch)
            ref = local_dyn_conv_reference(x, dsp, dch)
            assert np.abs(fast.data - ref.data).max() < 1e-6

    def test_shape_mismatch_rejected(self):
        rng = np.random.default_rng(18)
        with pytest.raises(ShapeError):
            local_dyn_conv(t(rng, 1, 2, 4, 4), t(rng, 1, 15, 3, 3), t(rng, 1, 2, 3, 3))


class TestMacCount:
    def test_worked_example(self):
        assert mac_count("local_dyn", 64, 8, 8, 3) == 648
        assert mac_count("conv", 64, 8, 8, 3) == 36864

    def test_unit_dims(self):
        assert mac_count("local_dyn", 1, 1, 7, 1) == 2
        assert mac_count("conv", 1, 1, 7, 1) == 7

    def test_local_count_ignores_output_channels(self):
        for c_out in (1, 4, 32):
            assert mac_count("local_dyn", 10, 6, c_out, 3) == mac_count("local_dyn", 10, 6, 1, 3)

    def test_instrumented_counters_match_formulas(self):
        rng = np.random.default_rng(19)
        for n_side, c, c_out, k in ((4, 3, 5, 3), (5, 2, 2, 3), (3, 4, 6, 5)):
            h = w = n_side
            n_pix = h * w
            x = t(rng, 1, c, h, w)
            counter = OpCounter()
            local_dyn_conv_reference(x, t(rng, 1, n_pix, k, k), t(rng, 1, c, k, k), counter)
            assert counter.filter_values == mac_count("local_dyn", n_pix, c, c_out, k)
            assert counter.macs == n_pix * c * k * k  # application stage is Theta(n c k^2)

            conv_counter = OpCounter()
            conv2d_reference(x, t(rng, c_out, c, k, k), padding=(k - 1) // 2, counter=conv_counter)
            assert conv_counter.macs == mac_count("conv", n_pix, c, c_out, k)
