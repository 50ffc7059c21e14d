"""Training loops for the three schemes, plateau schedule and tiled inference.

traditional: (noisy, clean) pairs, plain MSE.
n2n:         (noisy, second-noisy) pairs, plain MSE.
n2v:         single noisy images, masked inputs, masked MSE on original values.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from . import net
from .image import Image, apply_augmentation, psnr
from .masking import SamplerConfig, build_masked_batch
from .rng import Rng

SCHEMES = ("traditional", "n2n", "n2v")

# rng stream ids; validation uses a fixed stream so the per-epoch
# validation batches are identical and the loss trace is comparable
_STREAM_TRAIN = 1
_STREAM_VAL = 2

_MIN_IMPROVEMENT = 1e-6
_VAL_BATCHES = 4
_VAL_PSNR_IMAGES = 2


@dataclass
class TrainConfig:
    scheme: str
    batch_size: int = 16
    patch_size: int = 32
    sampler: SamplerConfig | None = None
    lr: float = 4e-4
    epochs: int = 10
    steps_per_epoch: int = 50
    plateau_patience: int = 10
    plateau_factor: float = 0.5
    min_lr: float = 1e-7
    val_fraction: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ValueError(f"scheme must be one of {SCHEMES}")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if not 0 < self.plateau_factor < 1:
            raise ValueError("plateau_factor must be in (0, 1)")
        if not 0 < self.val_fraction < 1:
            raise ValueError("val_fraction must be in (0, 1)")
        if self.scheme == "n2v":
            if self.sampler is None:
                self.sampler = SamplerConfig(patch_size=self.patch_size, n_masked=64)
            if self.sampler.patch_size != self.patch_size:
                raise ValueError("sampler.patch_size must equal patch_size")


@dataclass
class Dataset:
    """noisy is always present; clean pairs for traditional, noisy2 for n2n."""

    noisy: list[Image]
    clean: list[Image] | None = None
    noisy2: list[Image] | None = None

    def __post_init__(self):
        if not self.noisy:
            raise ValueError("empty image list")
        for paired in (self.clean, self.noisy2):
            if paired is None:
                continue
            if len(paired) != len(self.noisy):
                raise ValueError("paired image lists must have equal length")
            for a, b in zip(self.noisy, paired):
                if a.data.shape != b.data.shape:
                    raise ValueError("paired images must have matching dimensions")


@dataclass
class TrainReport:
    train_loss: list[float] = field(default_factory=list)
    val_loss: list[float] = field(default_factory=list)
    val_psnr: list[float] = field(default_factory=list)
    lr_trace: list[float] = field(default_factory=list)

    def save_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["epoch", "train_loss", "val_loss", "val_psnr", "lr"])
            for e in range(len(self.train_loss)):
                writer.writerow(
                    [
                        e,
                        repr(self.train_loss[e]),
                        repr(self.val_loss[e]),
                        repr(self.val_psnr[e]),
                        repr(self.lr_trace[e]),
                    ]
                )


def _check_scheme_data(dataset: Dataset, cfg: TrainConfig) -> None:
    if cfg.scheme == "traditional" and dataset.clean is None:
        raise ValueError("traditional training requires clean targets")
    if cfg.scheme == "n2n" and dataset.noisy2 is None:
        raise ValueError("n2n training requires a second noisy copy")


def _split_indices(n: int, val_fraction: float) -> tuple[list[int], list[int]]:
    """Hold out the tail of the image list; split precedes augmentation."""
    n_val = max(1, round(n * val_fraction)) if n > 1 else 0
    return list(range(n - n_val)), list(range(n - n_val, n))


def _paired_batch(
    dataset: Dataset, indices: list[int], cfg: TrainConfig, rng: Rng
) -> tuple[np.ndarray, np.ndarray]:
    """Aligned (input, target) patch batch with shared crop and augmentation."""
    p = cfg.patch_size
    targets_src = dataset.clean if cfg.scheme == "traditional" else dataset.noisy2
    xs = np.empty((cfg.batch_size, 1, p, p))
    ys = np.empty((cfg.batch_size, 1, p, p))
    for b in range(cfg.batch_size):
        j = indices[int(rng.integers(0, len(indices)))]
        src = dataset.noisy[j]
        if min(src.width, src.height) < p:
            raise ValueError("image smaller than patch_size")
        row = int(rng.integers(0, src.height - p + 1))
        col = int(rng.integers(0, src.width - p + 1))
        aug = int(rng.integers(0, 8))
        xs[b, 0] = apply_augmentation(src.data[row : row + p, col : col + p], aug)
        ys[b, 0] = apply_augmentation(
            targets_src[j].data[row : row + p, col : col + p], aug
        )
    return xs, ys


def _step_loss(
    params: net.ModelParams,
    net_cfg: net.UNetConfig,
    dataset: Dataset,
    indices: list[int],
    cfg: TrainConfig,
    rng: Rng,
    mode: str,
):
    """One batch forward; returns (loss, grad_pred, cache)."""
    if cfg.scheme == "n2v":
        batch = build_masked_batch(
            [dataset.noisy[j] for j in indices], cfg.batch_size, cfg.sampler, rng
        )
        pred, cache = net.forward(params, net_cfg, batch.inputs, mode)
        loss, grad = net.masked_mse_loss(pred, batch.targets, batch.mask)
    else:
        xs, ys = _paired_batch(dataset, indices, cfg, rng)
        pred, cache = net.forward(params, net_cfg, xs, mode)
        loss, grad = net.mse_loss(pred, ys)
    return loss, grad, cache


def train(
    dataset: Dataset, net_cfg: net.UNetConfig, cfg: TrainConfig
) -> tuple[net.ModelParams, TrainReport]:
    """Run the configured scheme; returns the best-validation parameters."""
    _check_scheme_data(dataset, cfg)
    if cfg.patch_size % 2**net_cfg.depth:
        raise ValueError("patch_size must be divisible by 2^depth")
    if cfg.scheme == "n2v" and cfg.patch_size <= net.receptive_field_extent(net_cfg):
        raise ValueError("n2v requires patch_size > receptive field extent")

    train_idx, val_idx = _split_indices(len(dataset.noisy), cfg.val_fraction)
    if not train_idx:
        raise ValueError("dataset too small for the requested validation split")
    if not val_idx:
        val_idx = train_idx

    params = net.unet_init(net_cfg, Rng(cfg.seed, 0))
    state = net.AdamState()
    rng = Rng(cfg.seed, _STREAM_TRAIN)
    lr = cfg.lr
    report = TrainReport()
    best_val = math.inf
    plateau_ref = math.inf
    best_params = params.copy()
    since_improve = 0

    for epoch in range(cfg.epochs):
        epoch_loss = 0.0
        for _ in range(cfg.steps_per_epoch):
            loss, grad, cache = _step_loss(
                params, net_cfg, dataset, train_idx, cfg, rng, "train"
            )
            grads = net.backward(params, net_cfg, cache, grad)
            params, state = net.adam_step(params, grads, state, lr)
            epoch_loss += loss

        val_rng = Rng(cfg.seed, _STREAM_VAL)
        val_loss = 0.0
        for _ in range(_VAL_BATCHES):
            loss, _, _ = _step_loss(
                params, net_cfg, dataset, val_idx, cfg, val_rng, "eval"
            )
            val_loss += loss
        val_loss /= _VAL_BATCHES

        val_psnr = math.nan
        if dataset.clean is not None:
            tile = max(cfg.patch_size, 32)
            overlap = _tile_overlap(net_cfg)
            vals = []
            for j in val_idx[:_VAL_PSNR_IMAGES]:
                den = denoise_image(
                    params, net_cfg, dataset.noisy[j], tile=tile, overlap=overlap
                )
                vals.append(psnr(dataset.clean[j], den))
            val_psnr = float(np.mean(vals))

        report.train_loss.append(epoch_loss / cfg.steps_per_epoch)
        report.val_loss.append(val_loss)
        report.val_psnr.append(val_psnr)
        report.lr_trace.append(lr)

        if val_loss < best_val:
            best_val = val_loss
            best_params = params.copy()
        if val_loss < plateau_ref - _MIN_IMPROVEMENT:
            plateau_ref = val_loss
            since_improve = 0
        else:
            since_improve += 1
            if since_improve >= cfg.plateau_patience:
                lr = max(lr * cfg.plateau_factor, cfg.min_lr)
                since_improve = 0

    return best_params, report


def _tile_overlap(net_cfg: net.UNetConfig) -> int:
    """Half the receptive field, rounded up to a multiple of 2^depth."""
    div = 2**net_cfg.depth
    half = (net.receptive_field_extent(net_cfg) + 1) // 2
    return ((half + div - 1) // div) * div


def denoise_image(
    params: net.ModelParams,
    net_cfg: net.UNetConfig,
    img: Image,
    tile: int = 64,
    overlap: int | None = None,
) -> Image:
    """Eval-mode inference over overlapping tiles; only interiors are kept."""
    if overlap is None:
        overlap = _tile_overlap(net_cfg)
    div = 2**net_cfg.depth
    if tile % div:
        raise ValueError("tile must be divisible by 2^depth")
    if overlap % div:
        raise ValueError("overlap must be divisible by 2^depth")
    if tile < 2 * overlap + div:
        raise ValueError("tile too small for the requested overlap")

    h, w = img.height, img.width
    step = tile - 2 * overlap
    ny = (h + step - 1) // step
    nx = (w + step - 1) // step
    pad_h = ny * step + 2 * overlap - h
    pad_w = nx * step + 2 * overlap - w
    padded = _reflect_pad_2d(img.data, overlap, pad_h - overlap, overlap, pad_w - overlap)

    out = np.empty((h, w))
    for iy in range(ny):
        for ix in range(nx):
            y0, x0 = iy * step, ix * step
            block = padded[y0 : y0 + tile, x0 : x0 + tile]
            pred, _ = net.forward(params, net_cfg, block[None, None], "eval")
            inner = pred[0, 0, overlap : overlap + step, overlap : overlap + step]
            ys = min(step, h - y0)
            xs = min(step, w - x0)
            out[y0 : y0 + ys, x0 : x0 + xs] = inner[:ys, :xs]
    return Image(out)


def _reflect_pad_2d(a: np.ndarray, top: int, bottom: int, left: int, right: int):
    """Reflect padding that tolerates pads larger than the array size."""
    h, w = a.shape
    maxp = min(h, w) - 1
    while max(top, bottom, left, right) > 0:
        t, b = min(top, maxp), min(bottom, maxp)
        l, r = min(left, maxp), min(right, maxp)
        a = np.pad(a, ((t, b), (l, r)), mode="reflect")
        top, bottom, left, right = top - t, bottom - b, left - l, right - r
        maxp = min(a.shape) - 1
    return a


def identity_control_experiment(
    dataset: Dataset, net_cfg: net.UNetConfig, cfg: TrainConfig
) -> tuple[net.ModelParams, TrainReport]:
    """Negative control: unmasked training with each noisy patch as its own
    target. Without the blind spot the network just learns the identity."""
    control = Dataset(noisy=dataset.noisy, clean=dataset.noisy)
    control_cfg = TrainConfig(
        scheme="traditional",
        batch_size=cfg.batch_size,
        patch_size=cfg.patch_size,
        lr=cfg.lr,
        epochs=cfg.epochs,
        steps_per_epoch=cfg.steps_per_epoch,
        plateau_patience=cfg.plateau_patience,
        plateau_factor=cfg.plateau_factor,
        min_lr=cfg.min_lr,
        val_fraction=cfg.val_fraction,
        seed=cfg.seed,
    )
    return train(control, net_cfg, control_cfg)


def evaluate(
    params: net.ModelParams,
    net_cfg: net.UNetConfig,
    test_pairs: list[tuple[Image, Image]],
    tile: int = 64,
    overlap: int | None = None,
) -> float:
    """Mean PSNR of denoise(noisy) against clean, data range 1."""
    if not test_pairs:
        raise ValueError("empty test set")
    values = []
    for noisy, clean in test_pairs:
        if noisy.data.shape != clean.data.shape:
            raise ValueError("test pair dimensions do not match")
        den = denoise_image(params, net_cfg, noisy, tile=tile, overlap=overlap)
        values.append(psnr(clean, den))
    if any(math.isinf(v) for v in values):
        return math.inf
    return float(np.mean(values))
