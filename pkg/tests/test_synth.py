import math

import numpy as np
import pytest
from scipy import stats

from asymmix.exceptions import ContractViolation
from asymmix.mixture import AsymmetricMixture
from asymmix.segmentation import LUMA
from asymmix.synth import gen_amm_dataset, gen_skewed_dataset, gen_synthetic_cells

MODEL = AsymmetricMixture.from_arrays(
    [0.3, 0.7],
    [[0.5, 0.5], [0.2, 0.8]],
    [[[0.0, 0.0], [5.0, 0.0]], [[0.0, 5.0], [5.0, 5.0]]],
    np.broadcast_to(np.diag([1.0, 0.25]), (2, 2, 2, 2)),
)


class TestAmmDataset:
    def test_reproducible(self):
        a = gen_amm_dataset(MODEL, 500, seed=3)
        b = gen_amm_dataset(MODEL, 500, seed=3)
        assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])

    def test_label_marginals_within_binomial_bounds(self):
        n = 20000
        _, labels = gen_amm_dataset(MODEL, n, seed=0)
        for j, p in enumerate(MODEL.weights):
            count = np.sum(labels[:, 0] == j)
            assert abs(count - n * p) < 4 * math.sqrt(n * p * (1 - p))

    def test_component_means(self):
        X, labels = gen_amm_dataset(MODEL, 20000, seed=1)
        for j in range(2):
            for m in range(2):
                rows = X[(labels[:, 0] == j) & (labels[:, 1] == m)]
                sd = np.sqrt(np.diag(MODEL.covariances[j, m]))
                bound = 4 * sd / math.sqrt(rows.shape[0])
                assert np.all(np.abs(rows.mean(axis=0) - MODEL.means[j, m]) < bound)


class TestSkewedDataset:
    def test_lognormal_median(self):
        X = gen_skewed_dataset("lognormal", {"mu": 0.0, "sigma": 0.5}, 100_000, seed=0)
        assert abs(np.median(X) - 1.0) < 0.05

    def test_gamma_mean(self):
        X = gen_skewed_dataset("gamma", {"shape": 2, "scale": 1.0}, 100_000, seed=0)
        assert abs(X.mean() - 2.0) < 0.1

    def test_gamma_skewness_always_positive(self):
        skews = [
            stats.skew(gen_skewed_dataset("gamma", {"shape": 2, "scale": 1.0}, 2000, seed=s)[:, 0])
            for s in range(100)
        ]
        assert min(skews) > 0

    def test_non_integer_gamma_shape(self):
        X = gen_skewed_dataset("gamma", {"shape": 2.5, "scale": 2.0}, 50_000, seed=1)
        assert abs(X.mean() - 5.0) < 0.1

    def test_shape_and_reproducibility(self):
        a = gen_skewed_dataset("lognormal", {"sigma": 1.0}, 10, seed=4, dims=3)
        assert a.shape == (10, 3)
        assert np.array_equal(a, gen_skewed_dataset("lognormal", {"sigma": 1.0}, 10, seed=4, dims=3))

    @pytest.mark.parametrize(
        "kind,params",
        [("gamma", {"shape": 0, "scale": 1}), ("gamma", {"shape": 2, "scale": -1}),
         ("lognormal", {"sigma": 0}), ("beta", {"a": 1})],
    )
    def test_invalid(self, kind, params):
        with pytest.raises(ContractViolation):
            gen_skewed_dataset(kind, params, 10)


def _scan_area(ellipses, W, H):
    # plain point-in-ellipse test per pixel centre
    count = 0
    for y in range(H):
        for x in range(W):
            for e in ellipses:
                dx, dy = x - e.cx, y - e.cy
                u = dx * math.cos(e.angle) + dy * math.sin(e.angle)
                v = -dx * math.sin(e.angle) + dy * math.cos(e.angle)
                if (u / e.a) ** 2 + (v / e.b) ** 2 <= 1.0:
                    count += 1
                    break
    return count


def _luma(pixels):
    return float(np.mean(pixels @ LUMA))


class TestSyntheticCells:
    def test_no_cells_empty_mask(self):
        image, mask = gen_synthetic_cells(32, 24, 0, seed=0)
        assert image.shape == (24, 32, 3) and mask.shape == (24, 32)
        assert not mask.any()

    def test_mask_area_matches_scan(self):
        for seed in range(3):
            _, mask, ellipses = gen_synthetic_cells(40, 30, 6, seed=seed, return_ellipses=True)
            assert mask.sum() == _scan_area(ellipses, 40, 30)

    def test_axes_in_range(self):
        _, _, ellipses = gen_synthetic_cells(64, 64, 50, seed=1, return_ellipses=True)
        for e in ellipses:
            assert 5.0 <= 2 * e.a <= 20.0 and 5.0 <= 2 * e.b <= 20.0

    def test_foreground_darker(self):
        for seed in range(100):
            image, mask = gen_synthetic_cells(64, 64, 12, seed=seed)
            assert _luma(image[mask]) < _luma(image[~mask])

    def test_foreground_colours_right_skewed(self):
        image, mask = gen_synthetic_cells(128, 128, 60, seed=0, lumen_count=0)
        luma = image[mask] @ LUMA
        assert stats.skew(luma) > 0.5

    def test_values_in_unit_range(self):
        image, _ = gen_synthetic_cells(64, 64, 30, seed=2)
        assert image.min() >= 0.0 and image.max() <= 1.0

    def test_bit_reproducible(self):
        a = gen_synthetic_cells(48, 48, 8, seed=9)
        b = gen_synthetic_cells(48, 48, 8, seed=9)
        assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])

    def test_impossible_geometry(self):
        with pytest.raises(ContractViolation):
            gen_synthetic_cells(4, 4, 1)
        with pytest.raises(ContractViolation):
            gen_synthetic_cells(0, 10, 0)
