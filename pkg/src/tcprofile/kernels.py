"""Hot loops, each with a numba kernel and a numpy twin.

The public functions dispatch on :func:`tcprofile._accel.use_numba`. Both
paths are tested against each other and timed in ``benchmarks/``.
"""
from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ._accel import njit, use_numba


def same_padding(size: int, kernel: int, stride: int) -> tuple[int, int, int]:
    """Output length and (before, after) padding for ceil-division "same" convolution."""
    out = -(-size // stride)
    total = max((out - 1) * stride + kernel - size, 0)
    before = total // 2
    return out, before, total - before


# ---------------------------------------------------------------- bilinear


@njit
def _bilinear_grid_nb(img, xs, ys, inside, fill):
    n_ch = img.shape[0]
    h = img.shape[1]
    w = img.shape[2]
    n_a, n_r = xs.shape
    out = np.empty((n_ch, n_a, n_r), dtype=np.float64)
    for c in range(n_ch):
        for i in range(n_a):
            for j in range(n_r):
                if not inside[i, j]:
                    out[c, i, j] = fill[c]
                    continue
                x = xs[i, j]
                y = ys[i, j]
                x0 = min(int(np.floor(x)), w - 2)
                y0 = min(int(np.floor(y)), h - 2)
                fx = x - x0
                fy = y - y0
                out[c, i, j] = (
                    (1.0 - fx) * (1.0 - fy) * img[c, y0, x0]
                    + fx * (1.0 - fy) * img[c, y0, x0 + 1]
                    + (1.0 - fx) * fy * img[c, y0 + 1, x0]
                    + fx * fy * img[c, y0 + 1, x0 + 1]
                )
    return out


def _bilinear_grid_np(img, xs, ys, inside, fill):
    h, w = img.shape[1:]
    xc = np.where(inside, xs, 0.0)
    yc = np.where(inside, ys, 0.0)
    x0 = np.minimum(np.floor(xc).astype(np.int64), w - 2)
    y0 = np.minimum(np.floor(yc).astype(np.int64), h - 2)
    fx = xc - x0
    fy = yc - y0
    out = (
        (1.0 - fx) * (1.0 - fy) * img[:, y0, x0]
        + fx * (1.0 - fy) * img[:, y0, x0 + 1]
        + (1.0 - fx) * fy * img[:, y0 + 1, x0]
        + fx * fy * img[:, y0 + 1, x0 + 1]
    )
    return np.where(inside[None], out, fill[:, None, None])


def bilinear_grid(img: np.ndarray, xs: np.ndarray, ys: np.ndarray, inside: np.ndarray, fill: np.ndarray) -> np.ndarray:
    """Sample every channel of ``img`` (C, H, W) at pixel coordinates ``xs``/``ys``.

    Cells where ``inside`` is false take the per-channel ``fill`` value.
    """
    img = np.ascontiguousarray(img, dtype=np.float64)
    fill = np.ascontiguousarray(fill, dtype=np.float64)
    if use_numba():
        return _bilinear_grid_nb(img, xs, ys, inside, fill)
    return _bilinear_grid_np(img, xs, ys, inside, fill)


# ------------------------------------------------------------ im2col pair


@njit
def _im2col_nb(x, kh, kw, sh, sw, oh, ow, ph, pw, circular):
    b_n, c_n, h, w = x.shape
    cols = np.zeros((b_n * oh * ow, c_n * kh * kw), dtype=x.dtype)
    for b in range(b_n):
        for i in range(oh):
            for j in range(ow):
                row = (b * oh + i) * ow + j
                for c in range(c_n):
                    for u in range(kh):
                        y = i * sh - ph + u
                        if circular:
                            y = y % h
                        elif y < 0 or y >= h:
                            continue
                        base = (c * kh + u) * kw
                        for v in range(kw):
                            xx = j * sw - pw + v
                            if xx < 0 or xx >= w:
                                continue
                            cols[row, base + v] = x[b, c, y, xx]
    return cols


@njit
def _col2im_nb(cols, shape, kh, kw, sh, sw, oh, ow, ph, pw, circular, dtype_probe):
    b_n, c_n, h, w = shape
    dx = np.zeros((b_n, c_n, h, w), dtype=dtype_probe.dtype)
    for b in range(b_n):
        for i in range(oh):
            for j in range(ow):
                row = (b * oh + i) * ow + j
                for c in range(c_n):
                    for u in range(kh):
                        y = i * sh - ph + u
                        if circular:
                            y = y % h
                        elif y < 0 or y >= h:
                            continue
                        base = (c * kh + u) * kw
                        for v in range(kw):
                            xx = j * sw - pw + v
                            if xx < 0 or xx >= w:
                                continue
                            dx[b, c, y, xx] += cols[row, base + v]
    return dx


def _pad_np(x, pads_h, pads_w, circular):
    if circular:
        h = x.shape[2]
        rows = (np.arange(-pads_h[0], h + pads_h[1])) % h
        x = x[:, :, rows, :]
    else:
        x = np.pad(x, ((0, 0), (0, 0), pads_h, (0, 0)))
    return np.pad(x, ((0, 0), (0, 0), (0, 0), pads_w))


def _im2col_np(x, kh, kw, sh, sw, oh, ow, pads_h, pads_w, circular):
    b_n, c_n = x.shape[:2]
    xp = _pad_np(x, pads_h, pads_w, circular)
    win = sliding_window_view(xp, (kh, kw), axis=(2, 3))[:, :, : (oh - 1) * sh + 1 : sh, : (ow - 1) * sw + 1 : sw]
    # (B, C, OH, OW, KH, KW) -> (B, OH, OW, C, KH, KW)
    return np.ascontiguousarray(win.transpose(0, 2, 3, 1, 4, 5)).reshape(b_n * oh * ow, c_n * kh * kw)


def _col2im_np(cols, shape, kh, kw, sh, sw, oh, ow, pads_h, pads_w, circular):
    b_n, c_n, h, w = shape
    hp = h + pads_h[0] + pads_h[1]
    wp = w + pads_w[0] + pads_w[1]
    g = cols.reshape(b_n, oh, ow, c_n, kh, kw).transpose(0, 3, 1, 2, 4, 5)
    dxp = np.zeros((b_n, c_n, hp, wp), dtype=cols.dtype)
    for u in range(kh):
        for v in range(kw):
            dxp[:, :, u : u + (oh - 1) * sh + 1 : sh, v : v + (ow - 1) * sw + 1 : sw] += g[..., u, v]
    dxp = dxp[:, :, :, pads_w[0] : pads_w[0] + w]
    if not circular:
        return np.ascontiguousarray(dxp[:, :, pads_h[0] : pads_h[0] + h])
    dx = dxp[:, :, pads_h[0] : pads_h[0] + h].copy()
    for p in range(pads_h[0]):
        dx[:, :, (p - pads_h[0]) % h] += dxp[:, :, p]
    for p in range(pads_h[1]):
        dx[:, :, (h + p) % h] += dxp[:, :, pads_h[0] + h + p]
    return dx


def im2col(x: np.ndarray, kernel: tuple[int, int], stride: tuple[int, int], circular: bool):
    """Unfold (B, C, H, W) into (B*OH*OW, C*KH*KW) patch rows with "same" padding.

    With ``circular`` the H axis wraps around; W is always zero padded.
    Returns the columns and the output spatial shape.
    """
    kh, kw = kernel
    sh, sw = stride
    oh, ph0, ph1 = same_padding(x.shape[2], kh, sh)
    ow, pw0, pw1 = same_padding(x.shape[3], kw, sw)
    if use_numba():
        cols = _im2col_nb(np.ascontiguousarray(x), kh, kw, sh, sw, oh, ow, ph0, pw0, circular)
    else:
        cols = _im2col_np(x, kh, kw, sh, sw, oh, ow, (ph0, ph1), (pw0, pw1), circular)
    return cols, (oh, ow)


def col2im(cols: np.ndarray, shape: tuple[int, int, int, int], kernel, stride, circular: bool) -> np.ndarray:
    """Adjoint of :func:`im2col`: scatter-add patch rows back onto the input grid."""
    kh, kw = kernel
    sh, sw = stride
    oh, ph0, ph1 = same_padding(shape[2], kh, sh)
    ow, pw0, pw1 = same_padding(shape[3], kw, sw)
    if use_numba():
        probe = np.zeros(0, dtype=cols.dtype)
        return _col2im_nb(np.ascontiguousarray(cols), tuple(shape), kh, kw, sh, sw, oh, ow, ph0, pw0, circular, probe)
    return _col2im_np(cols, shape, kh, kw, sh, sw, oh, ow, (ph0, ph1), (pw0, pw1), circular)
