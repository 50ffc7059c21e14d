import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import chi2

from blindspot.image import Image
from blindspot.masking import (
    MaskedBatch,
    SamplerConfig,
    build_masked_batch,
    mask_pixels,
    stratified_sample,
)
from blindspot.rng import Rng


class TestSamplerConfig:
    def test_rejects_zero_masked(self):
        with pytest.raises(ValueError):
            SamplerConfig(patch_size=8, n_masked=0)

    def test_rejects_small_patch(self):
        with pytest.raises(ValueError):
            SamplerConfig(patch_size=4, n_masked=1, replacement_radius=2)


class TestStratifiedSample:
    def test_single_pixel_in_bounds(self):
        cfg = SamplerConfig(patch_size=64, n_masked=1)
        (coord,) = stratified_sample(cfg, Rng(0))
        assert 0 <= coord[0] < 64 and 0 <= coord[1] < 64

    def test_saturated_strata_select_every_pixel(self):
        cfg = SamplerConfig(patch_size=8, n_masked=64)
        coords = stratified_sample(cfg, Rng(1))
        assert sorted(coords) == [(r, c) for r in range(8) for c in range(8)]

    def test_unique_and_in_bounds(self):
        cfg = SamplerConfig(patch_size=13, n_masked=23)
        for seed in range(20):
            coords = stratified_sample(cfg, Rng(seed))
            assert len(coords) == 23
            assert len(set(coords)) == 23
            assert all(0 <= r < 13 and 0 <= c < 13 for r, c in coords)

    def test_one_sample_per_cell_and_uniform_within(self):
        # 64x64 patch, N=64 -> 8x8 cells of 8x8 pixels
        cfg = SamplerConfig(patch_size=64, n_masked=64)
        draws = 20_000
        rng = Rng(3)
        counts = np.zeros((64, 64), dtype=np.int64)
        for _ in range(draws):
            coords = stratified_sample(cfg, rng)
            cells = {(r // 8, c // 8) for r, c in coords}
            assert len(cells) == 64  # exactly one sample per cell
            for r, c in coords:
                counts[r, c] += 1
        # pooled chi-square of per-pixel frequencies within cells
        expected = draws / 64.0
        stat = float(np.sum((counts - expected) ** 2 / expected))
        df = 64 * 63
        assert stat < chi2.ppf(1 - 0.001, df=df)

    def test_stratification_bound(self):
        # any axis-aligned window of k cells holds at most k samples
        cfg = SamplerConfig(patch_size=16, n_masked=16)  # 4x4 cells of 4x4
        for seed in range(50):
            coords = stratified_sample(cfg, Rng(seed))
            for r0 in range(3):
                for c0 in range(3):
                    inside = sum(
                        1
                        for r, c in coords
                        if r0 * 4 <= r < (r0 + 2) * 4 and c0 * 4 <= c < (c0 + 2) * 4
                    )
                    assert inside <= 4


class TestMaskPixels:
    def test_constant_patch_unchanged(self):
        patch = Image(np.full((8, 8), 0.3))
        masked, targets, mask = mask_pixels(patch, [(2, 2), (5, 5)], 2, Rng(0))
        assert np.array_equal(masked.data, patch.data)
        assert np.array_equal(targets.data, patch.data)
        assert mask.sum() == 2

    def test_center_gets_neighbor_value(self):
        data = np.arange(9, dtype=float).reshape(3, 3)
        patch = Image(data)
        seen = set()
        for seed in range(200):
            masked, _, _ = mask_pixels(patch, [(1, 1)], 1, Rng(seed))
            seen.add(masked.data[1, 1])
            assert masked.data[1, 1] != 4.0  # own value excluded
        assert seen <= {0.0, 1.0, 2.0, 3.0, 5.0, 6.0, 7.0, 8.0}

    def test_replacement_uniform_over_window(self):
        data = np.arange(9, dtype=float).reshape(3, 3)
        patch = Image(data)
        rng = Rng(77)
        counts = {v: 0 for v in (0.0, 1.0, 2.0, 3.0, 5.0, 6.0, 7.0, 8.0)}
        draws = 100_000
        for _ in range(draws):
            masked, _, _ = mask_pixels(patch, [(1, 1)], 1, rng)
            counts[masked.data[1, 1]] += 1
        expected = draws / 8.0
        stat = sum((c - expected) ** 2 / expected for c in counts.values())
        assert stat < chi2.ppf(1 - 0.001, df=7)

    def test_duplicate_coords_rejected(self):
        patch = Image(np.zeros((8, 8)))
        with pytest.raises(ValueError):
            mask_pixels(patch, [(1, 1), (1, 1)], 2, Rng(0))

    def test_out_of_bounds_rejected(self):
        patch = Image(np.zeros((8, 8)))
        with pytest.raises(ValueError):
            mask_pixels(patch, [(8, 0)], 2, Rng(0))

    def test_targets_keep_original_values(self):
        rng = np.random.default_rng(5)
        patch = Image(rng.uniform(size=(8, 8)))
        _, targets, mask = mask_pixels(patch, [(0, 0), (4, 4)], 2, Rng(1))
        assert np.array_equal(targets.data, patch.data)


def random_images(n, size, seed):
    return [Image(Rng(seed, i).uniform(size=(size, size))) for i in range(n)]


class TestBuildMaskedBatch:
    def test_constant_image_inputs_equal_targets(self):
        cfg = SamplerConfig(patch_size=8, n_masked=4)
        batch = build_masked_batch([Image(np.full((16, 16), 0.4))], 2, cfg, Rng(0))
        assert np.array_equal(batch.inputs, batch.targets)

    def test_invariants(self):
        cfg = SamplerConfig(patch_size=8, n_masked=6)
        batch = build_masked_batch(random_images(3, 16, 1), 5, cfg, Rng(2))
        assert batch.mask.sum(axis=(1, 2, 3)).tolist() == [6] * 5
        off = ~batch.mask
        assert np.array_equal(batch.inputs[off], batch.targets[off])
        changed = (batch.inputs != batch.targets).sum(axis=(1, 2, 3))
        assert np.all(changed <= 6)

    def test_deterministic(self):
        cfg = SamplerConfig(patch_size=8, n_masked=6)
        imgs = random_images(3, 16, 1)
        a = build_masked_batch(imgs, 4, cfg, Rng(9))
        b = build_masked_batch(imgs, 4, cfg, Rng(9))
        assert np.array_equal(a.inputs, b.inputs)
        assert np.array_equal(a.targets, b.targets)
        assert np.array_equal(a.mask, b.mask)

    def test_empty_list_rejected(self):
        cfg = SamplerConfig(patch_size=8, n_masked=4)
        with pytest.raises(ValueError):
            build_masked_batch([], 2, cfg, Rng(0))

    def test_small_image_rejected(self):
        cfg = SamplerConfig(patch_size=8, n_masked=4)
        with pytest.raises(ValueError):
            build_masked_batch([Image(np.zeros((6, 6)))], 1, cfg, Rng(0))

    @given(st.integers(0, 2**32 - 1), st.integers(1, 16))
    @settings(max_examples=25, deadline=None)
    def test_masked_value_never_original_when_unique(self, seed, n_masked):
        # on a patch of distinct values, replacement never equals the original
        cfg = SamplerConfig(patch_size=8, n_masked=n_masked, replacement_radius=2)
        img = Image(np.arange(256, dtype=float).reshape(16, 16))
        batch = build_masked_batch([img], 1, cfg, Rng(seed))
        on = batch.mask[0, 0]
        inner = on.copy()
        inner[:2, :] = inner[-2:, :] = inner[:, :2] = inner[:, -2:] = False
        # away from borders, reflection cannot fold back onto the pixel
        assert np.all(batch.inputs[0, 0][inner] != batch.targets[0, 0][inner])
