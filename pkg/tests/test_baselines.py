import math

import numpy as np
import pytest

from blindspot.baselines import (
    NlmConfig,
    best_filter_psnr,
    default_h_grid,
    grid_search_h,
    mean_filter,
    median_filter,
    nl_means,
)
from blindspot.image import Image, NoiseConfig, add_gaussian_noise, psnr, synth_epithelia
from blindspot.rng import Rng


def reflect_index(i, n):
    # mirror without edge repetition, matching np.pad(mode="reflect")
    period = 2 * (n - 1)
    i = abs(i) % period
    return period - i if i >= n else i


def brute_force_window(data, r, c, k):
    p = k // 2
    h, w = data.shape
    return [
        data[reflect_index(r + i, h), reflect_index(c + j, w)]
        for i in range(-p, p + 1)
        for j in range(-p, p + 1)
    ]


class TestMeanMedian:
    @pytest.mark.parametrize("k", [3, 5, 7])
    def test_mean_matches_brute_force(self, k):
        img = Image(Rng(k).uniform(size=(9, 11)))
        out = mean_filter(img, k)
        for r in range(9):
            for c in range(11):
                want = np.mean(brute_force_window(img.data, r, c, k))
                assert out.data[r, c] == want, (r, c)

    @pytest.mark.parametrize("k", [3, 5, 7])
    def test_median_matches_brute_force(self, k):
        img = Image(Rng(10 + k).uniform(size=(9, 11)))
        out = median_filter(img, k)
        for r in range(9):
            for c in range(11):
                want = np.median(brute_force_window(img.data, r, c, k))
                assert out.data[r, c] == want, (r, c)

    def test_constant_preserved(self):
        img = Image(np.full((8, 8), 0.37))
        assert np.allclose(mean_filter(img, 3).data, 0.37)
        assert np.allclose(median_filter(img, 5).data, 0.37)

    def test_range_containment(self):
        img = Image(Rng(1).uniform(size=(16, 16)))
        for filt in (mean_filter, median_filter):
            out = filt(img, 5)
            assert out.data.min() >= img.data.min() - 1e-12
            assert out.data.max() <= img.data.max() + 1e-12

    def test_even_or_small_k_rejected(self):
        img = Image(np.zeros((8, 8)))
        for k in (1, 2, 4):
            with pytest.raises(ValueError):
                mean_filter(img, k)
            with pytest.raises(ValueError):
                median_filter(img, k)

    def test_translation_covariance_interior(self):
        img = Image(Rng(2).uniform(size=(20, 20)))
        rolled = Image(np.roll(img.data, (3, 3), axis=(0, 1)))
        a = mean_filter(img, 3).data
        b = mean_filter(rolled, 3).data
        assert np.allclose(a[1:12, 1:12], b[4:15, 4:15])


class TestNlmConfig:
    def test_even_sizes_rejected(self):
        with pytest.raises(ValueError):
            NlmConfig(patch_size=6)
        with pytest.raises(ValueError):
            NlmConfig(search_window=20)

    def test_patch_larger_than_window_rejected(self):
        with pytest.raises(ValueError):
            NlmConfig(patch_size=9, search_window=7)

    def test_nonpositive_h_rejected(self):
        with pytest.raises(ValueError):
            NlmConfig(h=0.0)


class TestNlMeans:
    def test_matches_triple_loop_oracle(self):
        cfg = NlmConfig(patch_size=3, search_window=5, h=0.2, sigma_est=0.05)
        img = Image(Rng(3).uniform(size=(8, 8)))
        out = nl_means(img, cfg)

        data = img.data
        h, w = data.shape
        ph, sh = 1, 2
        expected = np.zeros_like(data)
        for r in range(h):
            for c in range(w):
                num = den = 0.0
                for dy in range(-sh, sh + 1):
                    for dx in range(-sh, sh + 1):
                        d = 0.0
                        for i in range(-ph, ph + 1):
                            for j in range(-ph, ph + 1):
                                a = data[
                                    reflect_index(r + i, h), reflect_index(c + j, w)
                                ]
                                b = data[
                                    reflect_index(r + dy + i, h),
                                    reflect_index(c + dx + j, w),
                                ]
                                d += (a - b) ** 2
                        d /= (2 * ph + 1) ** 2
                        wgt = math.exp(
                            -max(d - 2 * cfg.sigma_est**2, 0.0) / cfg.h**2
                        )
                        num += wgt * data[
                            reflect_index(r + dy, h), reflect_index(c + dx, w)
                        ]
                        den += wgt
                expected[r, c] = num / den
        assert np.max(np.abs(out.data - expected)) < 1e-6

    def test_large_h_approaches_window_mean(self):
        cfg = NlmConfig(patch_size=3, search_window=7, h=1e6)
        img = Image(Rng(4).uniform(size=(12, 12)))
        out = nl_means(img, cfg)
        ref = mean_filter(img, 7)
        assert np.max(np.abs(out.data - ref.data)) < 1e-3

    def test_constant_preserved(self):
        img = Image(np.full((10, 10), 0.6))
        out = nl_means(img, NlmConfig(patch_size=3, search_window=5, h=0.1))
        assert np.allclose(out.data, 0.6)

    def test_range_containment(self):
        img = Image(Rng(5).uniform(size=(12, 12)))
        out = nl_means(img, NlmConfig(patch_size=3, search_window=5, h=0.3))
        assert out.data.min() >= img.data.min() - 1e-12
        assert out.data.max() <= img.data.max() + 1e-12

    def test_actually_denoises(self):
        clean = synth_epithelia(48, 48, 8, 2.0, Rng(6))
        noisy = add_gaussian_noise(clean, NoiseConfig(sigma=25 / 255), Rng(7))
        out = nl_means(noisy, NlmConfig(h=0.1, sigma_est=25 / 255))
        assert psnr(clean, out) > psnr(clean, noisy) + 1.0


class TestGridSearch:
    def test_recovers_best_h(self):
        clean = [synth_epithelia(32, 32, 6, 2.0, Rng(20 + i)) for i in range(2)]
        noisy = [
            add_gaussian_noise(c, NoiseConfig(sigma=25 / 255), Rng(8, i))
            for i, c in enumerate(clean)
        ]
        grid = [0.01, 0.2, 10.0]
        best_h, table = grid_search_h(noisy, clean, grid)
        assert len(table) == 3
        by_h = dict(table)
        assert by_h[best_h] == max(v for _, v in table)

    def test_smaller_h_wins_ties(self):
        # constant images make every h equivalent (psnr inf for identical)
        img = Image(np.full((8, 8), 0.5))
        best_h, _ = grid_search_h([img], [img], [0.3, 0.1, 0.2])
        assert best_h == 0.1

    def test_empty_inputs_rejected(self):
        img = Image(np.zeros((8, 8)))
        with pytest.raises(ValueError):
            grid_search_h([], [], [0.1])
        with pytest.raises(ValueError):
            grid_search_h([img], [img], [])
        with pytest.raises(ValueError):
            grid_search_h([img, img], [img], [0.1])

    def test_default_grid_span_and_monotone(self):
        grid = default_h_grid(0.1)
        assert len(grid) == 10
        assert grid[0] == pytest.approx(0.01)
        assert grid[-1] == pytest.approx(0.3)
        assert all(a < b for a, b in zip(grid, grid[1:]))


class TestBestFilter:
    def test_finds_better_size(self):
        clean = [synth_epithelia(32, 32, 6, 2.0, Rng(30 + i)) for i in range(2)]
        noisy = [
            add_gaussian_noise(c, NoiseConfig(sigma=25 / 255), Rng(9, i))
            for i, c in enumerate(clean)
        ]
        k, value = best_filter_psnr(noisy, clean, "mean")
        assert k in (3, 5, 7)
        for other in (3, 5, 7):
            _, v = best_filter_psnr(noisy, clean, "mean", sizes=(other,))
            assert value >= v

    def test_smaller_k_wins_ties(self):
        img = Image(np.full((8, 8), 0.5))
        k, value = best_filter_psnr([img], [img], "median")
        assert k == 3
        assert value == math.inf

    def test_unknown_family_rejected(self):
        img = Image(np.zeros((8, 8)))
        with pytest.raises(ValueError):
            best_filter_psnr([img], [img], "gaussian")
