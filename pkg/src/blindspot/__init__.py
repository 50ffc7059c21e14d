"""Self-supervised blind-spot denoising toolkit."""

from .image import (
    Image,
    NoiseConfig,
    add_gaussian_noise,
    add_poisson_gaussian_noise,
    add_structured_noise,
    augment_eightfold,
    extract_random_patch,
    psnr,
    synth_epithelia,
)
from .masking import MaskedBatch, SamplerConfig, build_masked_batch, mask_pixels, stratified_sample
from .net import (
    AdamState,
    ModelParams,
    UNetConfig,
    adam_step,
    backward,
    forward,
    load_checkpoint,
    masked_mse_loss,
    mse_loss,
    receptive_field_extent,
    save_checkpoint,
    unet_init,
)
from .pgm import load_image, save_image
from .rng import Rng
from .training import (
    Dataset,
    TrainConfig,
    TrainReport,
    denoise_image,
    evaluate,
    identity_control_experiment,
    train,
)

__all__ = [name for name in dir() if not name.startswith("_")]
