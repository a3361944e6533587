import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from matplotlib.colors import rgb_to_hsv
from PIL import Image

from asymmix.exceptions import ContractViolation, ImageReadError, UnsupportedDepthError
from asymmix.imageops import (
    adjust_hsv,
    apply_flip,
    crop_patches,
    flatten,
    load_image,
    load_mask,
    photometric_augment,
    save_image,
    save_mask,
    unflatten,
)

unit_images = arrays(
    np.float64,
    st.tuples(st.integers(1, 6), st.integers(1, 6), st.just(3)),
    elements=st.floats(0, 1),
)


class TestFlatten:
    def test_row_major(self):
        image = np.arange(12, dtype=float).reshape(2, 2, 3) / 12
        X = flatten(image)
        assert X.shape == (4, 3)
        assert np.array_equal(X[1], image[0, 1]) and np.array_equal(X[2], image[1, 0])

    def test_patch_size(self):
        assert flatten(np.zeros((512, 512, 3))).shape == (262144, 3)

    @given(unit_images)
    def test_round_trip(self, image):
        H, W = image.shape[:2]
        assert np.array_equal(unflatten(flatten(image), W, H), image)

    def test_labels(self):
        labels = np.arange(6)
        assert np.array_equal(flatten(unflatten(labels, 3, 2)[..., None])[:, 0], labels)

    def test_size_mismatch(self):
        with pytest.raises(ContractViolation):
            unflatten(np.zeros(5), 2, 2)


class TestFlip:
    def test_horizontal_pair(self):
        image = np.array([[[0.1, 0.2, 0.3], [0.4, 0.5, 0.6]]])
        assert np.array_equal(apply_flip(image, "H"), image[:, ::-1])
        assert np.array_equal(apply_flip(image, "H")[0, 0], image[0, 1])

    @settings(deadline=None)
    @given(unit_images, st.sampled_from(["H", "V", "I"]))
    def test_involution(self, image, flip):
        assert np.array_equal(apply_flip(apply_flip(image, flip), flip), image)

    @given(unit_images)
    def test_commute(self, image):
        hv = apply_flip(apply_flip(image, "H"), "V")
        vh = apply_flip(apply_flip(image, "V"), "H")
        assert np.array_equal(hv, vh)

    def test_maps_of_any_rank(self):
        z = np.random.default_rng(0).uniform(size=(3, 4, 2, 2))
        assert np.array_equal(apply_flip(z, "V"), z[::-1])

    def test_unknown(self):
        with pytest.raises(ContractViolation):
            apply_flip(np.zeros((2, 2)), "D")


class TestFiles:
    def test_ppm_normalisation(self, tmp_path):
        path = tmp_path / "two.ppm"
        path.write_bytes(b"P6\n2 1\n255\n" + bytes([255, 0, 0, 0, 0, 255]))
        image = load_image(path)
        assert image.shape == (1, 2, 3)
        assert np.array_equal(image, [[[1, 0, 0], [0, 0, 1]]])

    def test_png_round_trip(self, tmp_path):
        image = np.random.default_rng(1).integers(0, 256, (5, 7, 3)) / 255.0
        save_image(tmp_path / "x.png", image)
        assert np.array_equal(load_image(tmp_path / "x.png"), image)

    def test_mask_round_trip(self, tmp_path):
        mask = np.random.default_rng(2).uniform(size=(9, 4)) > 0.5
        save_mask(tmp_path / "m.png", mask)
        assert np.array_equal(load_mask(tmp_path / "m.png"), mask)
        raw = np.asarray(Image.open(tmp_path / "m.png"))
        assert raw.dtype == np.uint8 and set(np.unique(raw)) <= {0, 255}

    def test_sixteen_bit(self, tmp_path):
        Image.fromarray(np.full((3, 3), 40000, dtype=np.uint16)).save(tmp_path / "deep.png")
        with pytest.raises(UnsupportedDepthError):
            load_image(tmp_path / "deep.png")

    def test_unreadable(self, tmp_path):
        (tmp_path / "bad.png").write_bytes(b"not an image")
        with pytest.raises(ImageReadError):
            load_image(tmp_path / "bad.png")
        with pytest.raises(ImageReadError):
            load_image(tmp_path / "missing.png")

    def test_errors_distinct(self):
        assert not issubclass(UnsupportedDepthError, ImageReadError)
        assert not issubclass(ImageReadError, UnsupportedDepthError)


class TestPhotometric:
    def test_zero_factors_identity(self):
        image = np.random.default_rng(3).uniform(size=(6, 6, 3))
        out = photometric_augment(image, {"hue": 0, "saturation": 0, "brightness": 0}, seed=1)
        np.testing.assert_allclose(out, image, rtol=0, atol=1e-7)

    def test_brightness_on_gray(self):
        gray = np.full((2, 2, 3), 0.5)
        out = adjust_hsv(gray, value_scale=1.15)
        np.testing.assert_allclose(rgb_to_hsv(out)[..., 2], 0.575, rtol=0, atol=1e-7)

    def test_hue_wraps(self):
        red = np.zeros((1, 1, 3))
        red[..., 0] = 1.0
        np.testing.assert_allclose(adjust_hsv(red, hue_shift=1.0), red, atol=1e-12)

    @settings(max_examples=30, deadline=None)
    @given(unit_images, st.integers(0, 1000))
    def test_output_in_range(self, image, seed):
        out = photometric_augment(image, {"hue": 1, "saturation": 1, "brightness": 1}, seed=seed)
        assert out.min() >= 0.0 and out.max() <= 1.0

    def test_deterministic(self):
        image = np.random.default_rng(4).uniform(size=(4, 4, 3))
        assert np.array_equal(photometric_augment(image, seed=3), photometric_augment(image, seed=3))

    def test_factor_out_of_range(self):
        with pytest.raises(ContractViolation):
            photometric_augment(np.zeros((1, 1, 3)), {"hue": 1.5})


class TestCrop:
    def test_windows_cover_image(self):
        image = np.random.default_rng(5).uniform(size=(20, 30, 3))
        mask = image[..., 0] > 0.5
        patches = list(crop_patches(image, mask, size=16))
        assert len(patches) == 4
        for p, m in patches:
            assert p.shape == (16, 16, 3) and m.shape == (16, 16)
        assert np.array_equal(patches[-1][0], image[-16:, -16:])

    def test_small_image_resized(self):
        image = np.full((8, 8, 3), 0.25)
        mask = np.zeros((8, 8), bool)
        mask[:4] = True
        ((p, m),) = crop_patches(image, mask, size=16)
        np.testing.assert_allclose(p, 0.25)
        assert m.shape == (16, 16) and m[:8].all() and not m[8:].any()
