"""A small U-Net with manual backpropagation, losses and Adam.

The architecture schema is fixed: per encoder level two conv-BN-ReLU blocks
and a 2x2 max pool, a two-block bottom, then per decoder level a nearest
neighbor 2x upsample, a skip concatenation and two conv-BN-ReLU blocks,
closed by a linear 1x1 convolution. Feature counts double per level.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from . import layers
from .rng import Rng

BN_MOMENTUM = 0.9
BN_EPS = 1e-5


@dataclass(frozen=True)
class UNetConfig:
    depth: int = 2
    kernel: int = 3
    base_features: int = 16
    batch_norm: bool = True

    def __post_init__(self):
        if self.depth < 1:
            raise ValueError("depth must be >= 1")
        if self.kernel % 2 == 0 or self.kernel < 1:
            raise ValueError("kernel must be odd and positive")
        if self.base_features < 1:
            raise ValueError("base_features must be >= 1")


def conv_plan(cfg: UNetConfig) -> list[tuple[str, int, int, int, bool]]:
    """(name, in_channels, out_channels, kernel, has_bn) for every conv."""
    f = cfg.base_features
    plan = []
    for lvl in range(cfg.depth):
        cin = 1 if lvl == 0 else f * 2 ** (lvl - 1)
        cout = f * 2**lvl
        plan.append((f"enc{lvl}a", cin, cout, cfg.kernel, cfg.batch_norm))
        plan.append((f"enc{lvl}b", cout, cout, cfg.kernel, cfg.batch_norm))
    cbot = f * 2**cfg.depth
    plan.append((f"bottom_a", cbot // 2, cbot, cfg.kernel, cfg.batch_norm))
    plan.append((f"bottom_b", cbot, cbot, cfg.kernel, cfg.batch_norm))
    for lvl in reversed(range(cfg.depth)):
        skip = f * 2**lvl
        up = f * 2 ** (lvl + 1)
        plan.append((f"dec{lvl}a", skip + up, skip, cfg.kernel, cfg.batch_norm))
        plan.append((f"dec{lvl}b", skip, skip, cfg.kernel, cfg.batch_norm))
    plan.append(("out", f, 1, 1, False))
    return plan


@dataclass
class ModelParams:
    """Named tensors: conv weights/biases plus batch-norm state."""

    tensors: dict[str, np.ndarray] = field(default_factory=dict)

    def trainable_names(self) -> list[str]:
        return [n for n in self.tensors if ".running_" not in n]

    def copy(self) -> "ModelParams":
        return ModelParams({n: t.copy() for n, t in self.tensors.items()})

    def count(self) -> int:
        return sum(self.tensors[n].size for n in self.trainable_names())


def unet_init(cfg: UNetConfig, rng: Rng, dtype=np.float32) -> ModelParams:
    """He fan-in initialization; zero biases; identity batch norm."""
    params = ModelParams()
    for name, cin, cout, k, bn in conv_plan(cfg):
        fan_in = cin * k * k
        w = rng.normal(0.0, np.sqrt(2.0 / fan_in), size=(cout, cin, k, k))
        params.tensors[f"{name}.w"] = w.astype(dtype)
        params.tensors[f"{name}.b"] = np.zeros(cout, dtype=dtype)
        if bn:
            params.tensors[f"{name}.gamma"] = np.ones(cout, dtype=dtype)
            params.tensors[f"{name}.beta"] = np.zeros(cout, dtype=dtype)
            params.tensors[f"{name}.running_mean"] = np.zeros(cout, dtype=np.float64)
            params.tensors[f"{name}.running_var"] = np.ones(cout, dtype=np.float64)
    return params


def _block_forward(params: ModelParams, name: str, x: np.ndarray, train: bool, bn: bool):
    t = params.tensors
    out, cc = layers.conv_forward(
        x, np.asarray(t[f"{name}.w"], dtype=np.float64), np.asarray(t[f"{name}.b"], dtype=np.float64)
    )
    cb = None
    if bn:
        out, cb = layers.bn_forward(
            out,
            np.asarray(t[f"{name}.gamma"], dtype=np.float64),
            np.asarray(t[f"{name}.beta"], dtype=np.float64),
            t[f"{name}.running_mean"],
            t[f"{name}.running_var"],
            train,
            BN_MOMENTUM,
            BN_EPS,
        )
    out, cr = layers.relu_forward(out)
    return out, (name, cc, cb, cr)


def _block_backward(dout: np.ndarray, cache, grads: dict[str, np.ndarray]):
    name, cc, cb, cr = cache
    dout = layers.relu_backward(dout, cr)
    if cb is not None:
        dout, dgamma, dbeta = layers.bn_backward(dout, cb)
        grads[f"{name}.gamma"] = dgamma
        grads[f"{name}.beta"] = dbeta
    dx, dw, db = layers.conv_backward(dout, cc)
    grads[f"{name}.w"] = dw
    grads[f"{name}.b"] = db
    return dx


def forward(
    params: ModelParams, cfg: UNetConfig, batch: np.ndarray, mode: str = "eval"
):
    """Run the network; returns (prediction, cache for backward)."""
    if mode not in ("train", "eval"):
        raise ValueError("mode must be 'train' or 'eval'")
    train = mode == "train"
    x = np.asarray(batch, dtype=np.float64)
    if x.ndim != 4 or x.shape[1] != 1:
        raise ValueError("batch must have shape (B, 1, H, W)")
    div = 2**cfg.depth
    if x.shape[2] % div or x.shape[3] % div:
        raise ValueError(f"spatial dims must be divisible by {div}")

    bn = cfg.batch_norm
    block_caches = []
    skips = []
    pool_caches = []
    h = x
    for lvl in range(cfg.depth):
        h, c = _block_forward(params, f"enc{lvl}a", h, train, bn)
        block_caches.append(c)
        h, c = _block_forward(params, f"enc{lvl}b", h, train, bn)
        block_caches.append(c)
        skips.append(h)
        h, pc = layers.maxpool2_forward(h)
        pool_caches.append(pc)
    h, c = _block_forward(params, "bottom_a", h, train, bn)
    block_caches.append(c)
    h, c = _block_forward(params, "bottom_b", h, train, bn)
    block_caches.append(c)
    up_caches = []
    concat_splits = []
    for lvl in reversed(range(cfg.depth)):
        h, uc = layers.upsample2_forward(h)
        up_caches.append(uc)
        skip = skips[lvl]
        concat_splits.append(skip.shape[1])
        h = np.concatenate([skip, h], axis=1)
        h, c = _block_forward(params, f"dec{lvl}a", h, train, bn)
        block_caches.append(c)
        h, c = _block_forward(params, f"dec{lvl}b", h, train, bn)
        block_caches.append(c)
    t = params.tensors
    pred, out_cache = layers.conv_forward(
        h, np.asarray(t["out.w"], dtype=np.float64), np.asarray(t["out.b"], dtype=np.float64)
    )
    cache = (cfg, block_caches, pool_caches, up_caches, concat_splits, out_cache, train)
    return pred, cache


def backward(
    params: ModelParams, cfg: UNetConfig, cache, grad_pred: np.ndarray
) -> dict[str, np.ndarray]:
    """Gradients of the loss w.r.t. every trainable tensor."""
    c_cfg, block_caches, pool_caches, up_caches, concat_splits, out_cache, train = cache
    if c_cfg != cfg:
        raise ValueError("cache does not match the given config")
    if not train:
        raise ValueError("backward requires a cache from a train-mode forward")
    grads: dict[str, np.ndarray] = {}
    blocks = list(block_caches)

    dh, dw, db = layers.conv_backward(grad_pred, out_cache)
    grads["out.w"] = dw
    grads["out.b"] = db

    dskips = []
    for i in range(cfg.depth):
        dh = _block_backward(dh, blocks.pop(), grads)
        dh = _block_backward(dh, blocks.pop(), grads)
        nskip = concat_splits[cfg.depth - 1 - i]
        dskip, dup = dh[:, :nskip], dh[:, nskip:]
        dskips.append(dskip)
        dh = layers.upsample2_backward(dup, up_caches[cfg.depth - 1 - i])
    dh = _block_backward(dh, blocks.pop(), grads)
    dh = _block_backward(dh, blocks.pop(), grads)
    for lvl in reversed(range(cfg.depth)):
        dh = layers.maxpool2_backward(dh, pool_caches[lvl])
        dh = dh + dskips[lvl]
        dh = _block_backward(dh, blocks.pop(), grads)
        dh = _block_backward(dh, blocks.pop(), grads)
    assert not blocks
    return grads


def mse_loss(pred: np.ndarray, target: np.ndarray):
    """Mean squared error and its gradient w.r.t. the prediction."""
    if pred.shape != target.shape:
        raise ValueError("shape mismatch")
    diff = pred - target
    loss = float(np.mean(diff**2))
    grad = 2.0 * diff / diff.size
    return loss, grad


def masked_mse_loss(pred: np.ndarray, target: np.ndarray, mask: np.ndarray):
    """MSE over masked coordinates only; zero gradient elsewhere."""
    if pred.shape != target.shape or pred.shape != mask.shape:
        raise ValueError("shape mismatch")
    count = int(mask.sum())
    if count == 0:
        raise ValueError("mask must select at least one coordinate")
    diff = np.where(mask, pred - target, 0.0)
    loss = float(np.sum(diff**2) / count)
    grad = 2.0 * diff / count
    return loss, grad


@dataclass
class AdamState:
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


def adam_step(
    params: ModelParams,
    grads: dict[str, np.ndarray],
    state: AdamState,
    lr: float,
) -> tuple[ModelParams, AdamState]:
    """Bias-corrected Adam update over the trainable tensors."""
    new = params.copy()
    state.step += 1
    t = state.step
    for name, g in grads.items():
        if name not in state.m:
            state.m[name] = np.zeros_like(g)
            state.v[name] = np.zeros_like(g)
        state.m[name] = state.beta1 * state.m[name] + (1 - state.beta1) * g
        state.v[name] = state.beta2 * state.v[name] + (1 - state.beta2) * g * g
        mhat = state.m[name] / (1 - state.beta1**t)
        vhat = state.v[name] / (1 - state.beta2**t)
        p = new.tensors[name]
        new.tensors[name] = (
            p.astype(np.float64) - lr * mhat / (np.sqrt(vhat) + state.eps)
        ).astype(p.dtype)
    return new, state


def _rf_accumulate(kernel_jump_pairs) -> int:
    """Receptive-field side from (kernel, jump) per layer, input to output."""
    rf = 1
    for k, jump in kernel_jump_pairs:
        rf += (k - 1) * jump
    return rf


def receptive_field_extent(cfg: UNetConfig) -> int:
    """Analytic side length of one output pixel's receptive field."""
    pairs = []
    jump = 1
    for _ in range(cfg.depth):
        pairs += [(cfg.kernel, jump), (cfg.kernel, jump)]
        pairs.append((2, jump))  # pool
        jump *= 2
    pairs += [(cfg.kernel, jump), (cfg.kernel, jump)]
    for _ in range(cfg.depth):
        jump //= 2
        pairs += [(cfg.kernel, jump), (cfg.kernel, jump)]
    pairs.append((1, 1))  # final 1x1
    return _rf_accumulate(pairs)


class CheckpointError(Exception):
    pass


_MAGIC = b"N2VW"
_VERSION = 1


def save_checkpoint(params: ModelParams, cfg: UNetConfig, path) -> None:
    """Binary checkpoint; tensor payloads as little-endian float32."""
    chunks = [_MAGIC, struct.pack("<I", _VERSION)]
    chunks.append(
        struct.pack(
            "<IIII", cfg.depth, cfg.kernel, cfg.base_features, int(cfg.batch_norm)
        )
    )
    names = list(params.tensors)
    chunks.append(struct.pack("<I", len(names)))
    for name in names:
        raw = name.encode("utf-8")
        t = params.tensors[name]
        chunks.append(struct.pack("<H", len(raw)))
        chunks.append(raw)
        chunks.append(struct.pack("<B", t.ndim))
        chunks.append(struct.pack(f"<{t.ndim}I", *t.shape))
        chunks.append(np.ascontiguousarray(t, dtype="<f4").tobytes())
    with open(path, "wb") as fh:
        fh.write(b"".join(chunks))


def load_checkpoint(path) -> tuple[ModelParams, UNetConfig]:
    with open(path, "rb") as fh:
        buf = fh.read()

    pos = 0

    def take(n: int) -> bytes:
        nonlocal pos
        if pos + n > len(buf):
            raise CheckpointError("truncated checkpoint")
        out = buf[pos : pos + n]
        pos += n
        return out

    if take(4) != _MAGIC:
        raise CheckpointError("bad magic bytes")
    (version,) = struct.unpack("<I", take(4))
    if version != _VERSION:
        raise CheckpointError(f"unsupported version {version}")
    depth, kernel, base, bn = struct.unpack("<IIII", take(16))
    cfg = UNetConfig(depth=depth, kernel=kernel, base_features=base, batch_norm=bool(bn))
    (count,) = struct.unpack("<I", take(4))
    params = ModelParams()
    for _ in range(count):
        (nlen,) = struct.unpack("<H", take(2))
        name = take(nlen).decode("utf-8")
        (rank,) = struct.unpack("<B", take(1))
        dims = struct.unpack(f"<{rank}I", take(4 * rank))
        n = int(np.prod(dims)) if rank else 1
        data = np.frombuffer(take(4 * n), dtype="<f4").reshape(dims)
        if ".running_" in name:
            params.tensors[name] = data.astype(np.float64)
        else:
            params.tensors[name] = data.astype(np.float32)

    expected = unet_init(cfg, Rng(0))
    if set(expected.tensors) != set(params.tensors):
        raise CheckpointError("tensor names do not match the config")
    for name, t in expected.tensors.items():
        if params.tensors[name].shape != t.shape:
            raise CheckpointError(f"shape mismatch for {name}")
    return params, cfg
