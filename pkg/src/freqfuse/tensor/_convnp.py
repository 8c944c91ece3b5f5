"""Vectorized numpy kernels for 2-D cross-correlation and its adjoints.

These work on raw ndarrays; the taped ops in :mod:`.ops` wrap them. Dense
(groups=1) and depthwise (groups=channels) layouts ride BLAS matmuls; other
group counts fall back to a per-group loop. The independent reference for all
of this lives in :mod:`freqfuse.verify` as a plain nested-loop summation that
shares no code with this file.
"""
from __future__ import annotations

import numpy as np


def out_extent(n: int, k: int, stride: int, padding: int, dilation: int) -> int:
    return (n + 2 * padding - dilation * (k - 1) - 1) // stride + 1


def tconv_out_extent(n: int, k: int, stride: int, padding: int, dilation: int) -> int:
    return stride * (n - 1) + dilation * (k - 1) + 1 - 2 * padding


def _pad(x: np.ndarray, p: int) -> np.ndarray:
    if p == 0:
        return x
    return np.pad(x, ((0, 0), (0, 0), (p, p), (p, p)))


def _cols(xp: np.ndarray, kh: int, kw: int, stride: int, dilation: int,
          ho: int, wo: int) -> np.ndarray:
    """Contiguous (N, C, kh*kw, ho*wo) patch matrix from the padded input."""
    sn, sc, sh, sw = xp.strides
    shape = (xp.shape[0], xp.shape[1], kh, kw, ho, wo)
    strides = (sn, sc, dilation * sh, dilation * sw, stride * sh, stride * sw)
    view = np.lib.stride_tricks.as_strided(xp, shape=shape, strides=strides, writeable=False)
    return np.ascontiguousarray(view).reshape(xp.shape[0], xp.shape[1], kh * kw, ho * wo)


def conv2d_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray | None,
                   stride: int, padding: int, dilation: int, groups: int) -> np.ndarray:
    n, c, h, wd = x.shape
    co, cg, kh, kw = w.shape
    ho = out_extent(h, kh, stride, padding, dilation)
    wo = out_extent(wd, kw, stride, padding, dilation)
    cols = _cols(_pad(x, padding), kh, kw, stride, dilation, ho, wo)
    k = kh * kw
    if groups == 1:
        y = np.matmul(w.reshape(co, c * k), cols.reshape(n, c * k, ho * wo))
    elif groups == c and cg == 1 and co == c:
        y = np.matmul(w.reshape(c, 1, k), cols)  # (N, C, 1, L)
    else:
        cog = co // groups
        y = np.empty((n, co, ho * wo), dtype=x.dtype)
        for g in range(groups):
            wg = w[g * cog:(g + 1) * cog].reshape(cog, cg * k)
            cg_cols = cols[:, g * cg:(g + 1) * cg].reshape(n, cg * k, ho * wo)
            y[:, g * cog:(g + 1) * cog] = np.matmul(wg, cg_cols)
    y = y.reshape(n, co, ho, wo)
    if b is not None:
        y = y + b.reshape(1, co, 1, 1)
    return y


def _scatter_cols(gcols: np.ndarray, in_shape, kh, kw, stride, padding, dilation,
                  ho, wo) -> np.ndarray:
    """Adjoint of the patch extraction: accumulate (N,C,kh,kw,ho,wo) into the image."""
    n, c, h, wd = in_shape
    gxp = np.zeros((n, c, h + 2 * padding, wd + 2 * padding), dtype=gcols.dtype)
    for i in range(kh):
        hi = i * dilation
        for j in range(kw):
            wj = j * dilation
            gxp[:, :, hi:hi + stride * ho:stride, wj:wj + stride * wo:stride] += gcols[:, :, i, j]
    if padding == 0:
        return gxp
    return gxp[:, :, padding:padding + h, padding:padding + wd]


def conv2d_grad_input(gy: np.ndarray, w: np.ndarray, in_shape: tuple[int, ...],
                      stride: int, padding: int, dilation: int, groups: int) -> np.ndarray:
    n, c, h, wd = in_shape
    co, cg, kh, kw = w.shape
    _, _, ho, wo = gy.shape
    k = kh * kw
    gy2 = gy.reshape(n, co, ho * wo)
    if groups == 1:
        gcols = np.matmul(w.reshape(co, c * k).T, gy2)  # (N, C*K, L)
    elif groups == c and cg == 1 and co == c:
        gcols = np.matmul(w.reshape(c, k, 1), gy2.reshape(n, c, 1, ho * wo))  # (N, C, K, L)
    else:
        cog = co // groups
        gcols = np.empty((n, c * k, ho * wo), dtype=gy.dtype)
        for g in range(groups):
            wg = w[g * cog:(g + 1) * cog].reshape(cog, cg * k)
            gcols[:, g * cg * k:(g + 1) * cg * k] = np.matmul(wg.T, gy2[:, g * cog:(g + 1) * cog])
    gcols = gcols.reshape(n, c, kh, kw, ho, wo)
    return _scatter_cols(gcols, in_shape, kh, kw, stride, padding, dilation, ho, wo)


def conv2d_grad_weight(x: np.ndarray, gy: np.ndarray, w_shape: tuple[int, ...],
                       stride: int, padding: int, dilation: int, groups: int) -> np.ndarray:
    n, c, h, wd = x.shape
    co, cg, kh, kw = w_shape
    _, _, ho, wo = gy.shape
    k = kh * kw
    cols = _cols(_pad(x, padding), kh, kw, stride, dilation, ho, wo)
    gy2 = gy.reshape(n, co, ho * wo)
    if groups == 1:
        gw = np.matmul(gy2, cols.reshape(n, c * k, ho * wo).transpose(0, 2, 1)).sum(axis=0)
    elif groups == c and cg == 1 and co == c:
        gw = np.matmul(gy2.reshape(n, c, 1, ho * wo), cols.transpose(0, 1, 3, 2)).sum(axis=0)
    else:
        cog = co // groups
        gw = np.empty((co, cg * k), dtype=gy.dtype)
        for g in range(groups):
            cg_cols = cols[:, g * cg:(g + 1) * cg].reshape(n, cg * k, ho * wo)
            gw[g * cog:(g + 1) * cog] = np.matmul(
                gy2[:, g * cog:(g + 1) * cog], cg_cols.transpose(0, 2, 1)).sum(axis=0)
    return gw.reshape(co, cg, kh, kw)
