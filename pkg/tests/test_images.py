import numpy as np
import pytest

from gldfn.images import bicubic_upsample, crop_to_multiple, load_png, save_png
from gldfn.tensor import ShapeError, Tensor


def test_png_roundtrip_exact_for_8bit_values(tmp_path):
    rng = np.random.default_rng(0)
    quantized = np.round(rng.random((1, 3, 9, 7)) * 255.0) / 255.0
    img = Tensor(quantized.astype(np.float32))
    path = str(tmp_path / "img.png")
    save_png(img, path)
    back = load_png(path)
    np.testing.assert_allclose(back.data, img.data, atol=1e-7)


def test_save_clamps(tmp_path):
    img = Tensor(np.array([[-0.5, 0.5], [1.5, 1.0]], dtype=np.float32).reshape(1, 1, 2, 2).repeat(3, axis=1))
    path = str(tmp_path / "clamp.png")
    save_png(img, path)
    back = load_png(path)
    assert back.data.min() == 0.0
    assert back.data.max() == 1.0


def test_crop_to_multiple():
    img = Tensor(np.zeros((1, 3, 9, 10)))
    out = crop_to_multiple(img, 4)
    assert out.dims == (1, 3, 8, 8)
    same = crop_to_multiple(Tensor(np.zeros((1, 3, 8, 8))), 4)
    assert same.dims == (1, 3, 8, 8)
    with pytest.raises(ShapeError):
        crop_to_multiple(Tensor(np.zeros((1, 3, 2, 2))), 4)


def test_bicubic_constant_and_identity():
    img = Tensor(np.full((1, 3, 5, 5), 0.37, dtype=np.float32))
    up = bicubic_upsample(img, 2)
    assert up.dims == (1, 3, 10, 10)
    np.testing.assert_allclose(up.data, 0.37, atol=1e-6)
    np.testing.assert_array_equal(bicubic_upsample(img, 1).data, img.data)


def test_bicubic_preserves_linear_ramps_in_interior():
    # cubic interpolation reproduces degree-1 polynomials exactly
    xx = np.arange(16.0) / 16.0
    img = Tensor(np.tile(xx, (1, 3, 16, 1)).astype(np.float64))
    up = bicubic_upsample(img, 2)
    interior = up.data[0, 0, 8, 4:-4]
    expected = (np.arange(32.0)[4:-4] + 0.5) / 2.0 / 16.0 - 0.5 / 16.0
    np.testing.assert_allclose(interior, expected, atol=1e-9)
