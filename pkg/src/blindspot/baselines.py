"""Training-free denoisers: mean/median filters and non-local means.

All filters use mirror padding, matching the network's border convention, so
PSNR comparisons between methods are not confounded by border policy.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .image import Image, psnr


@dataclass(frozen=True)
class NlmConfig:
    patch_size: int = 7
    search_window: int = 21
    h: float = 0.1
    sigma_est: float = 0.0

    def __post_init__(self):
        if self.patch_size % 2 == 0 or self.search_window % 2 == 0:
            raise ValueError("patch_size and search_window must be odd")
        if self.patch_size > self.search_window:
            raise ValueError("patch_size must be <= search_window")
        if self.h <= 0:
            raise ValueError("h must be > 0")


def _check_odd(k: int) -> None:
    if k % 2 == 0 or k < 3:
        raise ValueError(f"filter size must be odd and >= 3, got {k}")


def _padded_windows(img: Image, k: int) -> np.ndarray:
    """(H, W, k*k) mirror-padded neighborhoods, contiguous per window."""
    p = k // 2
    padded = np.pad(img.data, p, mode="reflect")
    win = sliding_window_view(padded, (k, k))
    return win.reshape(img.height, img.width, k * k)


def mean_filter(img: Image, k: int) -> Image:
    _check_odd(k)
    return Image(_padded_windows(img, k).mean(axis=-1))


def median_filter(img: Image, k: int) -> Image:
    _check_odd(k)
    return Image(np.median(_padded_windows(img, k), axis=-1))


def nl_means(img: Image, cfg: NlmConfig) -> Image:
    """Classic non-local means with mean-squared patch distances.

    out_i = sum_j w_ij x_j / sum_j w_ij over the search window, with
    w_ij = exp(-max(d_ij - 2*sigma_est^2, 0) / h^2).
    """
    ph = cfg.patch_size // 2
    sh = cfg.search_window // 2
    pad = ph + sh
    padded = np.pad(img.data, pad, mode="reflect")
    h, w = img.height, img.width

    num = np.zeros((h, w))
    den = np.zeros((h, w))
    # center patches live at offset `pad`; candidate patches at pad+(dy,dx)
    base = padded[sh : sh + h + 2 * ph, sh : sh + w + 2 * ph]
    for dy in range(-sh, sh + 1):
        for dx in range(-sh, sh + 1):
            cand = padded[
                sh + dy : sh + dy + h + 2 * ph, sh + dx : sh + dx + w + 2 * ph
            ]
            sq = (base - cand) ** 2
            dist = _box_mean(sq, cfg.patch_size)
            wgt = np.exp(-np.maximum(dist - 2 * cfg.sigma_est**2, 0.0) / cfg.h**2)
            num += wgt * padded[pad + dy : pad + dy + h, pad + dx : pad + dx + w]
            den += wgt
    return Image(num / den)


def _box_mean(a: np.ndarray, k: int) -> np.ndarray:
    """Valid k x k box mean via summed-area table."""
    s = np.zeros((a.shape[0] + 1, a.shape[1] + 1))
    np.cumsum(a, axis=0, out=s[1:, 1:])
    np.cumsum(s[1:, 1:], axis=1, out=s[1:, 1:])
    out = s[k:, k:] - s[:-k, k:] - s[k:, :-k] + s[:-k, :-k]
    return out / (k * k)


def _mean_psnr(noisy: list[Image], clean: list[Image], filt) -> float:
    values = [psnr(c, filt(n)) for n, c in zip(noisy, clean)]
    return float(np.mean(values))


def grid_search_h(
    noisy: list[Image], clean: list[Image], grid: list[float]
) -> tuple[float, list[tuple[float, float]]]:
    """h maximizing mean PSNR; smaller h wins ties."""
    if not grid or not noisy or len(noisy) != len(clean):
        raise ValueError("grid and image lists must be non-empty and matched")
    table = []
    for h in sorted(grid):
        cfg = NlmConfig(h=h)
        table.append((h, _mean_psnr(noisy, clean, lambda im: nl_means(im, cfg))))
    best_h, _ = max(table, key=lambda t: (t[1], -t[0]))
    return best_h, table


def default_h_grid(sigma: float, steps: int = 10) -> list[float]:
    """Logarithmic grid from 0.1*sigma to 3*sigma."""
    return list(np.geomspace(0.1 * sigma, 3.0 * sigma, steps))


def best_filter_psnr(
    noisy: list[Image],
    clean: list[Image],
    family: str,
    sizes: tuple[int, ...] = (3, 5, 7),
) -> tuple[int, float]:
    """Best filter size by mean PSNR; smaller k wins ties."""
    if not noisy or len(noisy) != len(clean):
        raise ValueError("image lists must be non-empty and matched")
    if family not in ("mean", "median"):
        raise ValueError(f"unknown filter family {family!r}")
    filt = mean_filter if family == "mean" else median_filter
    table = [(k, _mean_psnr(noisy, clean, lambda im: filt(im, k))) for k in sorted(sizes)]
    best_k, best = max(table, key=lambda t: (t[1], -t[0]))
    return best_k, best
