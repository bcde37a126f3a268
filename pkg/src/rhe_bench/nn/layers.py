"""Forward/backward primitives for the compact CNN (float64, NCHW layout)."""

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def conv3x3_forward(x, w, b):
    """Stride-1, zero-padded 3x3 convolution (cross-correlation).

    x: (B, C, H, W), w: (F, C, 3, 3), b: (F,). Returns (out, windows) where
    ``windows`` is the padded-input view reused by the backward pass.
    """
    xp = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))
    windows = sliding_window_view(xp, (3, 3), axis=(2, 3))  # (B, C, H, W, 3, 3)
    out = np.tensordot(windows, w, axes=([1, 4, 5], [1, 2, 3]))  # (B, H, W, F)
    out = out.transpose(0, 3, 1, 2) + b[None, :, None, None]
    return np.ascontiguousarray(out), windows


def conv3x3_backward(dout, windows, w):
    db = dout.sum(axis=(0, 2, 3))
    dw = np.tensordot(dout, windows, axes=([0, 2, 3], [0, 2, 3]))  # (F, C, 3, 3)
    dp = np.pad(dout, ((0, 0), (0, 0), (1, 1), (1, 1)))
    dwin = sliding_window_view(dp, (3, 3), axis=(2, 3))  # (B, F, H, W, 3, 3)
    dx = np.tensordot(dwin, w[:, :, ::-1, ::-1], axes=([1, 4, 5], [0, 2, 3]))  # (B, H, W, C)
    return np.ascontiguousarray(dx.transpose(0, 3, 1, 2)), dw, db


def relu_forward(z):
    return np.maximum(z, 0.0)


def relu_backward(dout, z):
    return dout * (z > 0)


def maxpool2_forward(x):
    """2x2/stride-2 max pool; ties resolve to the first position in row-major order."""
    bsz, c, h, w = x.shape
    if h % 2 or w % 2:
        raise ValueError(f"max pool needs even spatial dims, got {h}x{w}")
    tiles = x.reshape(bsz, c, h // 2, 2, w // 2, 2).transpose(0, 1, 2, 4, 3, 5)
    tiles = tiles.reshape(bsz, c, h // 2, w // 2, 4)
    idx = tiles.argmax(axis=-1)
    out = np.take_along_axis(tiles, idx[..., None], axis=-1)[..., 0]
    return out, idx


def maxpool2_backward(dout, idx):
    bsz, c, hh, ww = dout.shape
    grad = np.zeros((bsz, c, hh, ww, 4))
    np.put_along_axis(grad, idx[..., None], dout[..., None], axis=-1)
    grad = grad.reshape(bsz, c, hh, ww, 2, 2).transpose(0, 1, 2, 4, 3, 5)
    return grad.reshape(bsz, c, hh * 2, ww * 2)


def softmax(logits):
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def log_softmax(logits):
    shifted = logits - logits.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
