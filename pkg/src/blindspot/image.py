"""Single-channel image type, noise models, augmentation and quality metrics.

Images hold real intensities, nominally in [0, 1]. Noisy images are NOT
clipped back into [0, 1]: clipping would make additive noise non-zero-mean.
Clamping happens only when an image is quantized for file output.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import gaussian_filter

from .rng import Rng


@dataclass
class Image:
    """A height x width float64 raster."""

    data: np.ndarray

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float64)
        if self.data.ndim != 2 or self.data.size == 0:
            raise ValueError("image data must be a non-empty 2-D array")
        if not np.all(np.isfinite(self.data)):
            raise ValueError("image contains NaN or infinite values")

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def height(self) -> int:
        return self.data.shape[0]

    def copy(self) -> "Image":
        return Image(self.data.copy())


@dataclass
class NoiseConfig:
    """Parameters for the supported degradation models.

    sigma is the Gaussian std in normalized intensity units (the usual
    8-bit sigma=25 becomes 25/255). peak scales intensities to Poisson
    photon counts. amplitude/period describe the checkerboard used for
    structured noise.
    """

    kind: str = "gaussian"  # gaussian | poisson_gaussian | structured
    sigma: float = 0.0
    peak: float = 100.0
    amplitude: float = 0.0
    period: int = 2
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("gaussian", "poisson_gaussian", "structured"):
            raise ValueError(f"unknown noise kind: {self.kind!r}")
        if self.sigma < 0:
            raise ValueError("sigma must be >= 0")
        if self.peak <= 0:
            raise ValueError("peak must be > 0")
        if self.period < 2:
            raise ValueError("period must be >= 2")


def psnr(reference: Image, test: Image, data_range: float = 1.0) -> float:
    """Peak signal-to-noise ratio in dB; +inf when the images are equal."""
    if reference.data.shape != test.data.shape:
        raise ValueError(
            f"dimension mismatch: {reference.data.shape} vs {test.data.shape}"
        )
    if data_range <= 0:
        raise ValueError("data_range must be > 0")
    mse = float(np.mean((reference.data - test.data) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(data_range * data_range / mse)


def add_gaussian_noise(img: Image, cfg: NoiseConfig, rng: Rng) -> Image:
    """i.i.d. zero-mean Gaussian noise, no clipping."""
    if cfg.kind != "gaussian":
        raise ValueError("NoiseConfig.kind must be 'gaussian'")
    noise = rng.normal(0.0, cfg.sigma, size=img.data.shape) if cfg.sigma > 0 else 0.0
    return Image(img.data + noise)


def add_poisson_gaussian_noise(img: Image, cfg: NoiseConfig, rng: Rng) -> Image:
    """Poisson shot noise at the given photon peak, then additive Gaussian."""
    if cfg.kind != "poisson_gaussian":
        raise ValueError("NoiseConfig.kind must be 'poisson_gaussian'")
    if np.any(img.data < 0):
        raise ValueError("poisson_gaussian noise requires non-negative intensities")
    out = rng.poisson(img.data * cfg.peak).astype(np.float64) / cfg.peak
    if cfg.sigma > 0:
        out = out + rng.normal(0.0, cfg.sigma, size=img.data.shape)
    return Image(out)


def checkerboard(height: int, width: int, period: int) -> np.ndarray:
    """+-1 pattern alternating in period x period blocks."""
    rows = np.arange(height)[:, None] // period
    cols = np.arange(width)[None, :] // period
    return np.where((rows + cols) % 2 == 0, 1.0, -1.0)


def add_structured_noise(img: Image, cfg: NoiseConfig, rng: Rng) -> Image:
    """Hidden checkerboard pattern plus i.i.d. Gaussian noise."""
    if cfg.kind != "structured":
        raise ValueError("NoiseConfig.kind must be 'structured'")
    out = img.data + cfg.amplitude * checkerboard(img.height, img.width, cfg.period)
    if cfg.sigma > 0:
        out = out + rng.normal(0.0, cfg.sigma, size=img.data.shape)
    return Image(out)


def apply_noise(img: Image, cfg: NoiseConfig, rng: Rng) -> Image:
    """Dispatch on cfg.kind."""
    if cfg.kind == "gaussian":
        return add_gaussian_noise(img, cfg, rng)
    if cfg.kind == "poisson_gaussian":
        return add_poisson_gaussian_noise(img, cfg, rng)
    return add_structured_noise(img, cfg, rng)


def augment_eightfold(img: Image) -> list[Image]:
    """The four right-angle rotations and their horizontal mirrors."""
    rots = [np.rot90(img.data, k) for k in range(4)]
    return [Image(r.copy()) for r in rots] + [Image(np.fliplr(r).copy()) for r in rots]


def apply_augmentation(data: np.ndarray, index: int) -> np.ndarray:
    """Apply one of the eight dihedral transforms (0..7) to a square array."""
    if not 0 <= index < 8:
        raise ValueError("augmentation index must be in 0..7")
    out = np.rot90(data, index % 4)
    if index >= 4:
        out = np.fliplr(out)
    return out


def extract_random_patch(img: Image, size: int, rng: Rng) -> Image:
    """Contiguous size x size crop at a uniformly random valid offset."""
    if size > min(img.width, img.height):
        raise ValueError(
            f"patch size {size} exceeds image dimensions "
            f"{img.width}x{img.height}"
        )
    row = int(rng.integers(0, img.height - size + 1))
    col = int(rng.integers(0, img.width - size + 1))
    return Image(img.data[row : row + size, col : col + size].copy())


def synth_epithelia(
    width: int,
    height: int,
    num_cells: int,
    membrane_width: float,
    rng: Rng,
) -> Image:
    """Membrane-labeled cell mosaic: bright ridges on Voronoi boundaries.

    Ridge brightness falls off with the Voronoi margin (distance gap between
    the two nearest sites); interiors sit at 0.1. A Gaussian blur of
    membrane_width/2 gives the signal its spatial correlation.
    """
    if num_cells < 2:
        raise ValueError("num_cells must be >= 2")
    sites_r = rng.uniform(0, height, size=num_cells)
    sites_c = rng.uniform(0, width, size=num_cells)
    rr = np.arange(height, dtype=np.float64)[:, None, None]
    cc = np.arange(width, dtype=np.float64)[None, :, None]
    d2 = (rr - sites_r[None, None, :]) ** 2 + (cc - sites_c[None, None, :]) ** 2
    d2.sort(axis=2)
    margin = np.sqrt(d2[:, :, 1]) - np.sqrt(d2[:, :, 0])
    img = 0.1 + 0.9 * np.exp(-((margin / membrane_width) ** 2))
    img = gaussian_filter(img, sigma=membrane_width / 2.0, mode="reflect")
    return Image(np.clip(img, 0.0, 1.0))
