"""Strided 2-D convolution primitives and their adjoints (NCHW layout).

Padding follows the "same" convention: the output of a stride-``s`` conv has
``ceil(n / s)`` samples per axis, and the extra padding, when odd, goes after
the data. A transposed convolution is the exact adjoint of the convolution
that maps its output size back to its input size.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


class ShapeError(ValueError):
    pass


def same_padding(n: int, k: int, stride: int) -> tuple[int, int]:
    out = -(-n // stride)
    total = max((out - 1) * stride + k - n, 0)
    return total // 2, total - total // 2


def _pad(x: np.ndarray, k: int, stride: int) -> tuple[np.ndarray, int, int]:
    h, w = x.shape[2:]
    ph, pw = same_padding(h, k, stride), same_padding(w, k, stride)
    xp = np.pad(x, ((0, 0), (0, 0), ph, pw))
    return xp, -(-h // stride), -(-w // stride)


def _windows(x: np.ndarray, k: int, stride: int) -> np.ndarray:
    xp, ho, wo = _pad(x, k, stride)
    win = sliding_window_view(xp, (k, k), axis=(2, 3))
    return win[:, :, ::stride, ::stride][:, :, :ho, :wo]


def _check(x: np.ndarray, w: np.ndarray, stride: int) -> None:
    if x.ndim != 4 or w.ndim != 4:
        raise ShapeError(f"expected 4-D input and weights, got {x.shape} and {w.shape}")
    if x.shape[1] != w.shape[1]:
        raise ShapeError(f"input has {x.shape[1]} channels, weights expect {w.shape[1]}")
    if w.shape[2] != w.shape[3]:
        raise ShapeError("kernels must be square")
    if stride not in (1, 2):
        raise ShapeError(f"stride must be 1 or 2, got {stride}")


def conv2d(x: np.ndarray, w: np.ndarray, stride: int = 1) -> np.ndarray:
    """Cross-correlate ``x`` (N, C, H, W) with ``w`` (O, C, k, k)."""
    _check(x, w, stride)
    win = _windows(x, w.shape[2], stride)
    y = np.tensordot(win, w, axes=([1, 4, 5], [1, 2, 3]))
    return y.transpose(0, 3, 1, 2)


def conv2d_grad_input(dy: np.ndarray, w: np.ndarray, stride: int, in_hw: tuple[int, int]) -> np.ndarray:
    """Adjoint of :func:`conv2d` with respect to its input of size ``in_hw``."""
    k = w.shape[2]
    h, wd = in_hw
    ho, wo = -(-h // stride), -(-wd // stride)
    if dy.shape[2:] != (ho, wo) or dy.shape[1] != w.shape[0]:
        raise ShapeError(f"gradient {dy.shape} does not fit a conv from {in_hw} with {w.shape}")
    (pt, pb), (pl, pr) = same_padding(h, k, stride), same_padding(wd, k, stride)
    dxp = np.zeros((dy.shape[0], w.shape[1], h + pt + pb, wd + pl + pr))
    contrib = np.tensordot(dy, w, axes=([1], [0])).transpose(0, 3, 4, 5, 1, 2)
    for i in range(k):
        for j in range(k):
            dxp[:, :, i:i + stride * ho:stride, j:j + stride * wo:stride] += contrib[:, :, i, j]
    return dxp[:, :, pt:pt + h, pl:pl + wd]


def conv2d_grad_weight(x: np.ndarray, dy: np.ndarray, k: int, stride: int) -> np.ndarray:
    win = _windows(x, k, stride)
    return np.tensordot(dy, win, axes=([0, 2, 3], [0, 2, 3]))


def conv_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray | None = None, stride: int = 1) -> np.ndarray:
    y = conv2d(x, w, stride)
    if b is not None:
        y = y + b[None, :, None, None]
    return y


def conv_transpose_forward(
    x: np.ndarray, w: np.ndarray, b: np.ndarray | None = None, stride: int = 1
) -> np.ndarray:
    """Upsampling layer; ``w`` has shape (C_in, C_out, k, k).

    The output is ``stride`` times larger than ``x`` in each spatial axis.
    """
    if x.ndim != 4 or w.ndim != 4 or x.shape[1] != w.shape[0]:
        raise ShapeError(f"input {x.shape} does not match transposed weights {w.shape}")
    if stride not in (1, 2):
        raise ShapeError(f"stride must be 1 or 2, got {stride}")
    out_hw = (x.shape[2] * stride, x.shape[3] * stride)
    y = conv2d_grad_input(x, w, stride, out_hw)
    if b is not None:
        y = y + b[None, :, None, None]
    return y
