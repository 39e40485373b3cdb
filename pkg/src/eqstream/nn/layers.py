"""Layer primitives with explicit vector-Jacobian products.

Each ``*_forward`` returns ``(out, cache)``; the matching ``*_backward`` takes
the upstream gradient and that cache. Grids are ``(C, H, W)`` float64.
Reductions run in a fixed order so results do not depend on thread count.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..errors import ValidationError

LN_EPS = 1e-5


def sigmoid(x):
    # split by sign so exp never overflows
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def conv_output_size(size, kernel, stride, padding):
    return (size + 2 * padding - kernel) // stride + 1


def _windows(x, k, stride, padding):
    xp = np.pad(x, ((0, 0), (padding, padding), (padding, padding))) if padding else x
    win = sliding_window_view(xp, (k, k), axis=(1, 2))[:, ::stride, ::stride]
    return xp.shape, win


def conv2d_forward(x, w, b=None, stride=1, padding=0):
    """Cross-correlation of ``x`` (C, H, W) with ``w`` (O, C, k, k), zero padding."""
    x = np.asarray(x, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    if x.ndim != 3 or w.ndim != 4:
        raise ValidationError(f"conv2d expects x (C,H,W) and w (O,C,k,k); got {x.shape} and {w.shape}")
    if w.shape[1] != x.shape[0] or w.shape[2] != w.shape[3]:
        raise ValidationError(f"conv2d weight {w.shape} incompatible with input {x.shape}")
    if stride < 1:
        raise ValidationError("stride must be >= 1")
    k = w.shape[2]
    if x.shape[1] + 2 * padding < k or x.shape[2] + 2 * padding < k:
        raise ValidationError(f"kernel {k} larger than padded input {x.shape}")
    padded_shape, win = _windows(x, k, stride, padding)
    out = np.tensordot(w, win, axes=([1, 2, 3], [0, 3, 4]))
    if b is not None:
        out += np.asarray(b, dtype=np.float64)[:, None, None]
    return out, (win, w, stride, padding, padded_shape, b is not None)


def conv2d_backward(dout, cache):
    """Return ``(dx, dw, db)``; ``db`` is None when the layer had no bias."""
    win, w, stride, padding, padded_shape, has_bias = cache
    k = w.shape[2]
    ho, wo = dout.shape[1:]
    dw = np.tensordot(dout, win, axes=([1, 2], [1, 2]))
    dwin = np.tensordot(w, dout, axes=([0], [0]))          # (C, k, k, Ho, Wo)
    dxp = np.zeros(padded_shape)
    for i in range(k):
        for j in range(k):
            dxp[:, i:i + stride * ho:stride, j:j + stride * wo:stride] += dwin[:, i, j]
    if padding:
        dxp = dxp[:, padding:-padding, padding:-padding]
    db = dout.sum(axis=(1, 2)) if has_bias else None
    return dxp, dw, db


def conv2d(x, w, b=None, stride=1, padding=0):
    """Convolution on (C, H, W) or a batch (N, C, H, W)."""
    x = np.asarray(x)
    if x.ndim == 4:
        return np.stack([conv2d_forward(xi, w, b, stride, padding)[0] for xi in x])
    return conv2d_forward(x, w, b, stride, padding)[0]


def layer_norm_forward(x, gain, offset, eps=LN_EPS):
    """Normalize over channels at each spatial site, then apply per-channel affine."""
    mu = x.mean(axis=0, keepdims=True)
    xc = x - mu
    var = (xc * xc).mean(axis=0, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    gain = np.asarray(gain, dtype=np.float64)[:, None, None]
    out = gain * xhat + np.asarray(offset, dtype=np.float64)[:, None, None]
    return out, (xhat, inv, gain)


def layer_norm_backward(dout, cache):
    xhat, inv, gain = cache
    dgain = (dout * xhat).sum(axis=(1, 2))
    doffset = dout.sum(axis=(1, 2))
    dxhat = dout * gain
    dx = inv * (dxhat - dxhat.mean(axis=0, keepdims=True) - xhat * (dxhat * xhat).mean(axis=0, keepdims=True))
    return dx, dgain, doffset


def layer_norm(x, gain, offset, eps=LN_EPS):
    return layer_norm_forward(np.asarray(x, dtype=np.float64), gain, offset, eps)[0]
