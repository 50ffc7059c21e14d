"""Command-line pipeline: synth, corrupt, train, denoise, eval, sweep.

Config and sweep-spec files are flat ``key = value`` text (UTF-8, ``#``
comments). Noisy training data is read from ``.f32`` sidecars when present,
so unclipped values reach the network; PSNR evaluation always happens in
clamped [0, 1] space with data range 1.
"""

from __future__ import annotations

import argparse
import csv
import math
import sys
from pathlib import Path

import numpy as np

from . import baselines, net, pgm, training
from .image import Image, NoiseConfig, apply_noise, psnr, synth_epithelia
from .masking import SamplerConfig
from .rng import Rng


class CliError(Exception):
    """User-facing error: one-line diagnostic, nonzero exit."""


def parse_kv(path) -> dict[str, str]:
    """Flat key = value file with # comments."""
    out: dict[str, str] = {}
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise CliError(f"cannot read config file {path}: {exc}") from exc
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise CliError(f"{path}:{lineno}: expected 'key = value'")
        key, value = line.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def _list_pgms(directory) -> list[Path]:
    d = Path(directory)
    if not d.is_dir():
        raise CliError(f"not a directory: {d}")
    files = sorted(d.glob("*.pgm"))
    if not files:
        raise CliError(f"no .pgm files in {d}")
    return files


def _load_for_training(path: Path) -> Image:
    """Prefer the unclipped .f32 sidecar over the quantized PGM."""
    sidecar = path.with_suffix(".f32")
    if sidecar.exists():
        return pgm.load_f32(sidecar)
    return pgm.load_image(path)


def _ensure_outdir(directory) -> Path:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    return d


# ---------------------------------------------------------------- commands


def cmd_synth(args) -> None:
    if args.count < 1:
        raise CliError("count must be >= 1")
    if args.size < 8:
        raise CliError("size must be >= 8")
    out = _ensure_outdir(args.out)
    for i in range(args.count):
        img = synth_epithelia(
            args.size, args.size, args.cells, args.membrane_width, Rng(args.seed, i)
        )
        pgm.save_image(img, out / f"epithelia_{i}.pgm", depth="16bit")
    print(f"wrote {args.count} images to {out}")


_NOISE_KINDS = {"gaussian": "gaussian", "pg": "poisson_gaussian", "structured": "structured"}


def cmd_corrupt(args) -> None:
    if args.noise not in _NOISE_KINDS:
        raise CliError(f"unknown noise kind {args.noise!r} (gaussian|pg|structured)")
    if args.copies < 1:
        raise CliError("copies must be >= 1")
    files = _list_pgms(args.in_dir)
    cfg = NoiseConfig(
        kind=_NOISE_KINDS[args.noise],
        sigma=args.sigma,
        peak=args.peak,
        amplitude=args.amplitude,
        period=args.period,
        seed=args.seed,
    )
    out = _ensure_outdir(args.out)
    for i, path in enumerate(files):
        clean = pgm.load_image(path)
        for c in range(args.copies):
            rng = Rng(args.seed, i * args.copies + c)
            noisy = apply_noise(clean, cfg, rng)
            stem = path.stem if args.copies == 1 else f"{path.stem}_n{c}"
            pgm.save_image(noisy, out / f"{stem}.pgm", depth="16bit")
            pgm.save_f32(noisy, out / f"{stem}.f32")
    print(f"wrote {len(files) * args.copies} corrupted images to {out}")


_TRAIN_KEYS = {
    "batch_size": int,
    "patch_size": int,
    "n_masked": int,
    "replacement_radius": int,
    "lr": float,
    "epochs": int,
    "steps_per_epoch": int,
    "plateau_patience": int,
    "plateau_factor": float,
    "min_lr": float,
    "val_fraction": float,
    "seed": int,
    "depth": int,
    "kernel": int,
    "base_features": int,
}


def _parse_train_config(path) -> dict:
    raw = parse_kv(path) if path else {}
    cfg = {}
    for key, value in raw.items():
        if key not in _TRAIN_KEYS:
            raise CliError(f"unknown config key {key!r}")
        try:
            cfg[key] = _TRAIN_KEYS[key](value)
        except ValueError:
            raise CliError(f"bad value for {key!r}: {value!r}") from None
    return cfg


def _build_configs(scheme: str, cfg: dict) -> tuple[net.UNetConfig, training.TrainConfig]:
    net_cfg = net.UNetConfig(
        depth=cfg.get("depth", 2),
        kernel=cfg.get("kernel", 3),
        base_features=cfg.get("base_features", 16),
    )
    patch = cfg.get("patch_size", 32)
    sampler = None
    if scheme == "n2v":
        sampler = SamplerConfig(
            patch_size=patch,
            n_masked=cfg.get("n_masked", 64),
            replacement_radius=cfg.get("replacement_radius", 2),
        )
    train_cfg = training.TrainConfig(
        scheme=scheme,
        batch_size=cfg.get("batch_size", 16),
        patch_size=patch,
        sampler=sampler,
        lr=cfg.get("lr", 4e-4),
        epochs=cfg.get("epochs", 20),
        steps_per_epoch=cfg.get("steps_per_epoch", 50),
        plateau_patience=cfg.get("plateau_patience", 10),
        plateau_factor=cfg.get("plateau_factor", 0.5),
        min_lr=cfg.get("min_lr", 1e-7),
        val_fraction=cfg.get("val_fraction", 0.1),
        seed=cfg.get("seed", 0),
    )
    return net_cfg, train_cfg


def _load_paired(noisy_files: list[Path], other_dir, what: str) -> list[Image]:
    d = Path(other_dir)
    out = []
    for path in noisy_files:
        other = d / path.name
        if not other.exists():
            raise CliError(f"missing {what} image {other}")
        out.append(_load_for_training(other))
    return out


def cmd_train(args) -> None:
    if args.scheme not in training.SCHEMES:
        raise CliError(f"unknown scheme {args.scheme!r}")
    if args.scheme == "traditional" and not args.clean:
        raise CliError("traditional training requires --clean <dir>")
    if args.scheme == "n2n" and not args.noisy2:
        raise CliError("n2n training requires --noisy2 <dir>")
    cfg = _parse_train_config(args.config)
    net_cfg, train_cfg = _build_configs(args.scheme, cfg)

    noisy_files = _list_pgms(args.noisy)
    dataset = training.Dataset(
        noisy=[_load_for_training(p) for p in noisy_files],
        clean=_load_paired(noisy_files, args.clean, "clean") if args.clean else None,
        noisy2=_load_paired(noisy_files, args.noisy2, "second noisy")
        if args.noisy2
        else None,
    )
    params, report = training.train(dataset, net_cfg, train_cfg)
    net.save_checkpoint(params, net_cfg, args.out)
    if args.report:
        report.save_csv(args.report)
    print(f"trained {args.scheme}: final val loss {report.val_loss[-1]:.6g}")


def cmd_denoise(args) -> None:
    try:
        params, net_cfg = net.load_checkpoint(args.ckpt)
    except (net.CheckpointError, OSError) as exc:
        raise CliError(f"cannot load checkpoint {args.ckpt}: {exc}") from exc
    files = _list_pgms(args.in_dir)
    out = _ensure_outdir(args.out)
    for path in files:
        img = _load_for_training(path)
        den = training.denoise_image(
            params, net_cfg, img, tile=args.tile, overlap=args.overlap
        )
        pgm.save_image(den, out / path.name, depth="16bit")
    print(f"denoised {len(files)} images into {out}")


def cmd_eval(args) -> None:
    clean_files = _list_pgms(args.clean)
    den_files = _list_pgms(args.denoised)
    if len(clean_files) != len(den_files):
        raise CliError(
            f"image count mismatch: {len(clean_files)} clean vs {len(den_files)} denoised"
        )
    rows = []
    for c, d in zip(clean_files, den_files):
        value = psnr(pgm.load_image(c), pgm.load_image(d))
        rows.append((c.name, value))
    mean = math.inf if any(math.isinf(v) for _, v in rows) else float(
        np.mean([v for _, v in rows])
    )
    with open(args.out, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["image", "psnr"])
        for name, value in rows:
            writer.writerow([name, "inf" if math.isinf(value) else repr(value)])
        writer.writerow(["mean", "inf" if math.isinf(mean) else repr(mean)])
    print(f"mean PSNR {mean:.4f} dB over {len(rows)} images")


_SWEEP_METHODS = ("n2v", "traditional", "n2n", "mean", "median", "nlm")


def _sweep_cell_psnr(
    method: str,
    clean: list[Image],
    sigma: float,
    seed: int,
    cfg: dict,
) -> float:
    noise = NoiseConfig(kind="gaussian", sigma=sigma)
    noisy = [
        apply_noise(img, noise, Rng(seed, 10_000 + i)) for i, img in enumerate(clean)
    ]
    if method == "mean" or method == "median":
        _, value = baselines.best_filter_psnr(noisy, clean, method)
        return value
    if method == "nlm":
        _, table = baselines.grid_search_h(
            noisy, clean, baselines.default_h_grid(sigma)
        )
        return max(v for _, v in table)
    scheme_cfg = dict(cfg)
    scheme_cfg["seed"] = seed
    net_cfg, train_cfg = _build_configs(method, scheme_cfg)
    dataset = training.Dataset(
        noisy=noisy,
        clean=clean if method == "traditional" else None,
        noisy2=[
            apply_noise(img, noise, Rng(seed, 20_000 + i))
            for i, img in enumerate(clean)
        ]
        if method == "n2n"
        else None,
    )
    params, _ = training.train(dataset, net_cfg, train_cfg)
    return training.evaluate(
        params, net_cfg, list(zip(noisy, clean)), tile=cfg.get("tile", 64)
    )


def cmd_sweep(args) -> None:
    spec = parse_kv(args.spec)
    for key in ("sigmas", "methods", "seeds", "clean_dir"):
        if key not in spec:
            raise CliError(f"sweep spec missing required key {key!r}")
    try:
        sigmas = [float(s) for s in spec["sigmas"].split(",")]
        seeds = [int(s) for s in spec["seeds"].split(",")]
    except ValueError as exc:
        raise CliError(f"bad sweep spec: {exc}") from exc
    methods = [m.strip() for m in spec["methods"].split(",")]
    for m in methods:
        if m not in _SWEEP_METHODS:
            raise CliError(f"unknown method {m!r} (choose from {_SWEEP_METHODS})")
    if not sigmas or not methods or not seeds:
        raise CliError("sweep spec lists must be non-empty")
    if any(s <= 0 for s in sigmas):
        raise CliError("sigmas must be > 0")

    cfg = {}
    for key, conv in _TRAIN_KEYS.items():
        if key in spec:
            cfg[key] = conv(spec[key])
    if "tile" in spec:
        cfg["tile"] = int(spec["tile"])

    clean = [pgm.load_image(p) for p in _list_pgms(spec["clean_dir"])]
    rows = []
    for sigma in sigmas:
        for method in methods:
            for seed in seeds:
                value = _sweep_cell_psnr(method, clean, sigma, seed, cfg)
                rows.append((sigma, method, seed, value))

    with open(args.out, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["sigma", "method", "seed", "psnr"])
        for sigma, method, seed, value in rows:
            writer.writerow([repr(sigma), method, seed, repr(value)])
    summary_path = args.summary or str(Path(args.out).with_suffix("")) + "_summary.csv"
    with open(summary_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["sigma", "method", "mean_psnr"])
        for sigma in sigmas:
            for method in methods:
                vals = [v for s, m, _, v in rows if s == sigma and m == method]
                writer.writerow([repr(sigma), method, repr(float(np.mean(vals)))])
    print(f"wrote {len(rows)} sweep rows to {args.out}")


# ---------------------------------------------------------------- entry point


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="blindspot", description="self-supervised denoising pipeline"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate synthetic epithelia images")
    p.add_argument("--out", required=True)
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--size", type=int, default=128)
    p.add_argument("--cells", type=int, default=30)
    p.add_argument("--membrane-width", type=float, default=3.0)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("corrupt", help="apply a noise model to a directory of PGMs")
    p.add_argument("--in", dest="in_dir", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--noise", required=True, help="gaussian | pg | structured")
    p.add_argument("--sigma", type=float, default=0.0)
    p.add_argument("--peak", type=float, default=100.0)
    p.add_argument("--amplitude", type=float, default=0.0)
    p.add_argument("--period", type=int, default=2)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--copies", type=int, default=1)
    p.set_defaults(func=cmd_corrupt)

    p = sub.add_parser("train", help="train a denoising network")
    p.add_argument("--scheme", required=True, help="traditional | n2n | n2v")
    p.add_argument("--noisy", required=True)
    p.add_argument("--clean")
    p.add_argument("--noisy2")
    p.add_argument("--config")
    p.add_argument("--out", required=True, help="checkpoint path")
    p.add_argument("--report", help="TrainReport CSV path")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("denoise", help="run tiled inference with a checkpoint")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--in", dest="in_dir", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--tile", type=int, default=64)
    p.add_argument("--overlap", type=int, default=None)
    p.set_defaults(func=cmd_denoise)

    p = sub.add_parser("eval", help="PSNR of denoised images against clean")
    p.add_argument("--clean", required=True)
    p.add_argument("--denoised", required=True)
    p.add_argument("--out", required=True, help="CSV path")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep", help="noise-level sweep over methods and seeds")
    p.add_argument("--spec", required=True)
    p.add_argument("--out", required=True, help="per-cell CSV path")
    p.add_argument("--summary", help="summary CSV path")
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args.func(args)
    except (CliError, pgm.ImageIoError, net.CheckpointError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
