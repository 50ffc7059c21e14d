"""Blind-spot masking: stratified pixel selection and neighborhood replacement.

A masked batch pairs manipulated input patches with the untouched original
patches as targets; the loss later reads only the masked coordinates, so the
network never gets to copy a pixel's own value.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .image import Image, apply_augmentation, extract_random_patch
from .rng import Rng


@dataclass(frozen=True)
class SamplerConfig:
    patch_size: int
    n_masked: int
    replacement_radius: int = 2

    def __post_init__(self):
        if not 1 <= self.n_masked <= self.patch_size**2:
            raise ValueError("n_masked must be in [1, patch_size^2]")
        if self.replacement_radius < 1:
            raise ValueError("replacement_radius must be >= 1")
        if self.patch_size < 2 * self.replacement_radius + 1:
            raise ValueError("patch_size must be >= 2*replacement_radius + 1")


@dataclass
class MaskedBatch:
    """inputs: patches with masked pixels replaced; targets: original values."""

    inputs: np.ndarray  # (B, 1, P, P)
    targets: np.ndarray  # (B, 1, P, P)
    mask: np.ndarray  # (B, 1, P, P) bool


def _strata_bounds(patch_size: int, grid: int) -> np.ndarray:
    """Near-equal partition of [0, patch_size) into grid intervals."""
    return (np.arange(grid + 1) * patch_size) // grid


def stratified_sample(cfg: SamplerConfig, rng: Rng) -> list[tuple[int, int]]:
    """One uniform pixel per stratum cell.

    The patch is split into a ceil(sqrt(N)) x ceil(sqrt(N)) grid of cells,
    truncated to the first N cells in row-major order; this avoids the
    clustering a plain uniform draw would produce.
    """
    n = cfg.n_masked
    grid = math.isqrt(n)
    if grid * grid < n:
        grid += 1
    bounds = _strata_bounds(cfg.patch_size, grid)
    cells = np.arange(n)
    ci, cj = cells // grid, cells % grid
    r0, r1 = bounds[ci], bounds[ci + 1]
    c0, c1 = bounds[cj], bounds[cj + 1]
    rows = r0 + rng.integers(0, r1 - r0)
    cols = c0 + rng.integers(0, c1 - c0)
    return list(zip(rows.tolist(), cols.tolist()))


def _reflect(idx: np.ndarray, size: int) -> np.ndarray:
    """Mirror reflection without edge repetition, valid for |overhang| < size."""
    idx = np.where(idx < 0, -idx, idx)
    return np.where(idx >= size, 2 * (size - 1) - idx, idx)


def mask_pixels(
    patch: Image, coords: list[tuple[int, int]], r: int, rng: Rng
) -> tuple[Image, Image, np.ndarray]:
    """Replace each selected pixel with a random neighbor from its
    (2r+1)^2 window, never its own (0,0) offset; borders reflect."""
    coord_arr = np.asarray(coords, dtype=np.int64)
    if len(coord_arr) != len(set(map(tuple, coords))):
        raise ValueError("coords must be unique")
    if np.any(coord_arr < 0) or np.any(coord_arr[:, 0] >= patch.height) or np.any(
        coord_arr[:, 1] >= patch.width
    ):
        raise ValueError("coords out of bounds")

    side = 2 * r + 1
    offsets = [
        (dr, dc)
        for dr in range(-r, r + 1)
        for dc in range(-r, r + 1)
        if (dr, dc) != (0, 0)
    ]
    offsets = np.asarray(offsets, dtype=np.int64)
    assert len(offsets) == side * side - 1
    pick = rng.integers(0, len(offsets), size=len(coord_arr))
    src_r = _reflect(coord_arr[:, 0] + offsets[pick, 0], patch.height)
    src_c = _reflect(coord_arr[:, 1] + offsets[pick, 1], patch.width)

    masked = patch.data.copy()
    masked[coord_arr[:, 0], coord_arr[:, 1]] = patch.data[src_r, src_c]
    mask = np.zeros(patch.data.shape, dtype=bool)
    mask[coord_arr[:, 0], coord_arr[:, 1]] = True
    return Image(masked), patch.copy(), mask


def build_masked_batch(
    images: list[Image], batch_size: int, cfg: SamplerConfig, rng: Rng
) -> MaskedBatch:
    """Random crops with dihedral augmentation, each masked independently."""
    if not images:
        raise ValueError("empty image list")
    for img in images:
        if min(img.width, img.height) < cfg.patch_size:
            raise ValueError("every image must be at least patch_size in both dims")
    p = cfg.patch_size
    inputs = np.empty((batch_size, 1, p, p))
    targets = np.empty((batch_size, 1, p, p))
    mask = np.zeros((batch_size, 1, p, p), dtype=bool)
    for b in range(batch_size):
        img = images[int(rng.integers(0, len(images)))]
        patch = extract_random_patch(img, p, rng)
        patch = Image(apply_augmentation(patch.data, int(rng.integers(0, 8))).copy())
        coords = stratified_sample(cfg, rng)
        masked, target, m = mask_pixels(patch, coords, cfg.replacement_radius, rng)
        inputs[b, 0] = masked.data
        targets[b, 0] = target.data
        mask[b, 0] = m
    return MaskedBatch(inputs=inputs, targets=targets, mask=mask)
