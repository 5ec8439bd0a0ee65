"""Pure NumPy implementations of the hot kernels.

Convolution is lowered to im2col + matmul; the input gradient is computed
as a full correlation of the output gradient with the flipped kernel, which
keeps the backward pass matmul-shaped instead of scatter-add-shaped.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

name = "python"


def _im2col(x: np.ndarray, kh: int, kw: int) -> np.ndarray:
    # x: [N, C, H, W] -> [N*Ho*Wo, C*kh*kw], window layout (c, u, v) row-major
    n, c, _, _ = x.shape
    win = sliding_window_view(x, (kh, kw), axis=(2, 3))
    ho, wo = win.shape[2], win.shape[3]
    cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(n * ho * wo, c * kh * kw)
    return np.ascontiguousarray(cols)


def conv2d_forward(x: np.ndarray, k: np.ndarray, padding: int) -> np.ndarray:
    n, c, h, w = x.shape
    f, _, kh, kw = k.shape
    if padding:
        x = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    ho = h + 2 * padding - kh + 1
    wo = w + 2 * padding - kw + 1
    cols = _im2col(x, kh, kw)
    out = cols @ k.reshape(f, -1).T
    return np.ascontiguousarray(out.reshape(n, ho, wo, f).transpose(0, 3, 1, 2))


def conv2d_backward(
    x: np.ndarray, k: np.ndarray, padding: int, gout: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    n, c, h, w = x.shape
    f, _, kh, kw = k.shape
    xp = x
    if padding:
        xp = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))

    gmat = gout.transpose(0, 2, 3, 1).reshape(-1, f)
    cols = _im2col(xp, kh, kw)
    gk = (gmat.T @ cols).reshape(f, c, kh, kw)

    # dX: correlate the padded output gradient with the flipped kernel.
    gp = np.pad(gout, ((0, 0), (0, 0), (kh - 1, kh - 1), (kw - 1, kw - 1)))
    colsg = _im2col(gp, kh, kw)
    krot = k[:, :, ::-1, ::-1].transpose(0, 2, 3, 1).reshape(f * kh * kw, c)
    hp, wp = h + 2 * padding, w + 2 * padding
    gxp = np.ascontiguousarray(
        (colsg @ krot).reshape(n, hp, wp, c).transpose(0, 3, 1, 2)
    )
    if padding:
        gxp = np.ascontiguousarray(gxp[:, :, padding:-padding, padding:-padding])
    return gxp, np.ascontiguousarray(gk)


def _windows(x: np.ndarray) -> np.ndarray:
    n, c, h, w = x.shape
    return x.reshape(n, c, h // 2, 2, w // 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(
        n, c, h // 2, w // 2, 4
    )


def maxpool2d_forward(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    win = _windows(x)
    idx = win.argmax(axis=-1).astype(np.uint8)  # argmax keeps the first max
    out = np.take_along_axis(win, idx[..., None].astype(np.intp), axis=-1)[..., 0]
    return np.ascontiguousarray(out), idx


def maxpool2d_backward(idx: np.ndarray, gout: np.ndarray) -> np.ndarray:
    n, c, h2, w2 = gout.shape
    g4 = np.zeros((n, c, h2, w2, 4), dtype=gout.dtype)
    np.put_along_axis(g4, idx[..., None].astype(np.intp), gout[..., None], axis=-1)
    gx = g4.reshape(n, c, h2, w2, 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(
        n, c, 2 * h2, 2 * w2
    )
    return np.ascontiguousarray(gx)
