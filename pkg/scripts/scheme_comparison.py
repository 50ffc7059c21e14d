#!/usr/bin/env python3
"""Compare the three training schemes and classical filters on synthetic
epithelia with Poisson-Gaussian noise.

Trains a small network under traditional (noisy->clean), noise2noise
(noisy->noisy) and blind-spot (noisy only) supervision on the same data
budget and reports held-out PSNR next to the best mean/median filter.
"""

import argparse
import time

import numpy as np

from blindspot.baselines import best_filter_psnr
from blindspot.image import NoiseConfig, add_poisson_gaussian_noise, synth_epithelia
from blindspot.net import UNetConfig
from blindspot.rng import Rng
from blindspot.training import Dataset, TrainConfig, evaluate, train


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--images", type=int, default=8)
    parser.add_argument("--steps", type=int, default=2000)
    parser.add_argument("--peak", type=float, default=100.0)
    parser.add_argument("--sigma", type=float, default=10 / 255)
    args = parser.parse_args()

    clean = [
        synth_epithelia(96, 96, 30, 1.5, Rng(500 + i)) for i in range(args.images)
    ]
    noise = NoiseConfig(kind="poisson_gaussian", peak=args.peak, sigma=args.sigma)
    noisy = [
        add_poisson_gaussian_noise(c, noise, Rng(args.seed, i))
        for i, c in enumerate(clean)
    ]
    noisy2 = [
        add_poisson_gaussian_noise(c, noise, Rng(args.seed, 100 + i))
        for i, c in enumerate(clean)
    ]
    test_clean = clean[-2:]
    test_noisy = [
        add_poisson_gaussian_noise(c, noise, Rng(args.seed, 200 + i))
        for i, c in enumerate(test_clean)
    ]

    from blindspot.image import psnr

    print(f"noisy PSNR: {np.mean([psnr(c, n) for c, n in zip(test_clean, test_noisy)]):.2f} dB")
    for family in ("mean", "median"):
        k, v = best_filter_psnr(test_noisy, test_clean, family)
        print(f"{family} filter (k={k}): {v:.2f} dB")

    net_cfg = UNetConfig(depth=1, kernel=3, base_features=8)
    for scheme in ("traditional", "n2n", "n2v"):
        cfg = TrainConfig(
            scheme=scheme,
            batch_size=4,
            patch_size=32,
            epochs=args.steps // 100,
            steps_per_epoch=100,
            seed=args.seed,
            lr=1e-3,
        )
        ds = Dataset(
            noisy=noisy,
            clean=clean if scheme == "traditional" else None,
            noisy2=noisy2 if scheme == "n2n" else None,
        )
        t0 = time.time()
        params, _ = train(ds, net_cfg, cfg)
        value = evaluate(params, net_cfg, list(zip(test_noisy, test_clean)), tile=64)
        print(f"{scheme}: {value:.2f} dB ({time.time() - t0:.0f}s)")


if __name__ == "__main__":
    main()
