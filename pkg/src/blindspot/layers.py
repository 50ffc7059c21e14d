"""Layer primitives with explicit forward/backward passes.

All arrays are NCHW float64. Convolutions are cross-correlations with mirror
(reflect) padding, so spatial dimensions are preserved. Each forward returns
(out, cache); each backward consumes its cache and the upstream gradient.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def reflect_pad(x: np.ndarray, p: int) -> np.ndarray:
    if p == 0:
        return x
    return np.pad(x, ((0, 0), (0, 0), (p, p), (p, p)), mode="reflect")


def reflect_pad_backward(dxp: np.ndarray, p: int) -> np.ndarray:
    """Fold gradients of the padded array back onto the source pixels."""
    if p == 0:
        return dxp
    h = dxp.shape[2] - 2 * p
    dx = dxp[:, :, p : p + h, :].copy()
    dx[:, :, 1 : p + 1, :] += dxp[:, :, p - 1 :: -1, :]
    dx[:, :, h - p - 1 : h - 1, :] += dxp[:, :, : p + h - 1 : -1, :]
    w = dx.shape[3] - 2 * p
    dy = dx[:, :, :, p : p + w].copy()
    dy[:, :, :, 1 : p + 1] += dx[:, :, :, p - 1 :: -1]
    dy[:, :, :, w - p - 1 : w - 1] += dx[:, :, :, : p + w - 1 : -1]
    return dy


def _im2col(xp: np.ndarray, k: int) -> np.ndarray:
    """(B*H*W, C*k*k) patch matrix from a padded (B,C,Hp,Wp) array."""
    b, c = xp.shape[0], xp.shape[1]
    h, w = xp.shape[2] - k + 1, xp.shape[3] - k + 1
    win = sliding_window_view(xp, (k, k), axis=(2, 3))  # (B,C,H,W,k,k)
    return win.transpose(0, 2, 3, 1, 4, 5).reshape(b * h * w, c * k * k)


def conv_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray):
    """Same-size cross-correlation. x: (B,C,H,W); w: (F,C,k,k); b: (F,)."""
    f, c, k, _ = w.shape
    p = k // 2
    xp = reflect_pad(x, p)
    nb, _, hp, wp = xp.shape
    h, wd = hp - k + 1, wp - k + 1
    cols = _im2col(xp, k)
    out = cols @ w.reshape(f, c * k * k).T + b
    out = out.reshape(nb, h, wd, f).transpose(0, 3, 1, 2)
    return out, (cols, xp.shape, w)


def conv_backward(dout: np.ndarray, cache):
    cols, xp_shape, w = cache
    f, c, k, _ = w.shape
    p = k // 2
    nb, _, h, wd = dout.shape
    dout_mat = dout.transpose(0, 2, 3, 1).reshape(nb * h * wd, f)
    dw = (dout_mat.T @ cols).reshape(f, c, k, k)
    db = dout_mat.sum(axis=0)
    # dxp is the full convolution of dout with the flipped kernels
    dp = np.zeros((nb, f, h + 2 * (k - 1), wd + 2 * (k - 1)))
    dp[:, :, k - 1 : k - 1 + h, k - 1 : k - 1 + wd] = dout
    dcols = _im2col(dp, k)  # (B*Hp*Wp, F*k*k)
    wflip = w[:, :, ::-1, ::-1].transpose(1, 0, 2, 3).reshape(c, f * k * k)
    dxp = (dcols @ wflip.T).reshape(nb, xp_shape[2], xp_shape[3], c)
    dxp = dxp.transpose(0, 3, 1, 2)
    dx = reflect_pad_backward(dxp, p)
    return dx, dw, db


def relu_forward(x: np.ndarray):
    out = np.maximum(x, 0.0)
    return out, (x > 0)


def relu_backward(dout: np.ndarray, cache):
    return dout * cache


def bn_forward(
    x: np.ndarray,
    gamma: np.ndarray,
    beta: np.ndarray,
    running_mean: np.ndarray,
    running_var: np.ndarray,
    train: bool,
    momentum: float = 0.9,
    eps: float = 1e-5,
):
    """Per-channel batch norm over (B,H,W).

    In train mode batch statistics are used and the running buffers are
    updated in place with the given momentum; eval mode reads the buffers.
    """
    if train:
        mean = x.mean(axis=(0, 2, 3))
        var = x.var(axis=(0, 2, 3))
        running_mean *= momentum
        running_mean += (1.0 - momentum) * mean
        running_var *= momentum
        running_var += (1.0 - momentum) * var
    else:
        mean, var = running_mean, running_var
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = (x - mean[None, :, None, None]) * inv_std[None, :, None, None]
    out = gamma[None, :, None, None] * xhat + beta[None, :, None, None]
    return out, (xhat, gamma, inv_std, train)


def bn_backward(dout: np.ndarray, cache):
    xhat, gamma, inv_std, train = cache
    dgamma = (dout * xhat).sum(axis=(0, 2, 3))
    dbeta = dout.sum(axis=(0, 2, 3))
    dxhat = dout * gamma[None, :, None, None]
    if train:
        # gradient through the batch statistics
        m = dout.shape[0] * dout.shape[2] * dout.shape[3]
        s1 = dxhat.sum(axis=(0, 2, 3))[None, :, None, None]
        s2 = (dxhat * xhat).sum(axis=(0, 2, 3))[None, :, None, None]
        dx = (inv_std[None, :, None, None] / m) * (m * dxhat - s1 - xhat * s2)
    else:
        dx = dxhat * inv_std[None, :, None, None]
    return dx, dgamma, dbeta


def maxpool2_forward(x: np.ndarray):
    """2x2 max pooling, stride 2; ties route to the first maximum."""
    b, c, h, w = x.shape
    if h % 2 or w % 2:
        raise ValueError("maxpool requires even spatial dims")
    xr = x.reshape(b, c, h // 2, 2, w // 2, 2).transpose(0, 1, 2, 4, 3, 5)
    flat = xr.reshape(b, c, h // 2, w // 2, 4)
    idx = flat.argmax(axis=-1)
    out = np.take_along_axis(flat, idx[..., None], axis=-1)[..., 0]
    return out, (idx, x.shape)


def maxpool2_backward(dout: np.ndarray, cache):
    idx, shape = cache
    b, c, h, w = shape
    dflat = np.zeros((b, c, h // 2, w // 2, 4))
    np.put_along_axis(dflat, idx[..., None], dout[..., None], axis=-1)
    dx = dflat.reshape(b, c, h // 2, w // 2, 2, 2).transpose(0, 1, 2, 4, 3, 5)
    return dx.reshape(b, c, h, w)


def upsample2_forward(x: np.ndarray):
    """Nearest-neighbor 2x upsampling."""
    out = np.repeat(np.repeat(x, 2, axis=2), 2, axis=3)
    return out, x.shape


def upsample2_backward(dout: np.ndarray, cache):
    b, c, h, w = cache
    return dout.reshape(b, c, h, 2, w, 2).sum(axis=(3, 5))
