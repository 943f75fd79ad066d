"""Hot numeric kernels for the float32 training path.

numpy + BLAS handles the big GEMMs well, but on batch-8 training several
bandwidth-bound pieces dominate a step: im2col packing, max-pool routing,
the dense-layer weight gradient (a rank-8 outer product on a 10^7-element
matrix), its input gradient, and the Adam update.  These are written as
numba kernels tiled so that the small batch activations stay cache-resident
and the large matrices stream exactly once.

Every kernel is elementwise- or block-parallel with no cross-thread
reductions, so results do not depend on the thread count.  The float64
path used by the gradient checker goes through plain numpy instead (see
layers.py); both paths implement the same formulas.
"""

from __future__ import annotations

import numba as nb
import numpy as np


@nb.njit(parallel=True, cache=True)
def adam_update_f32(p, g, m, v, alpha, beta1, beta2, eps):
    """In-place Adam step on flat float32 views (bias correction in alpha)."""
    one_m_b1 = np.float32(1.0) - beta1
    one_m_b2 = np.float32(1.0) - beta2
    for i in nb.prange(p.size):
        gi = g[i]
        mi = beta1 * m[i] + one_m_b1 * gi
        vi = beta2 * v[i] + one_m_b2 * gi * gi
        m[i] = mi
        v[i] = vi
        p[i] = p[i] - alpha * mi / (np.sqrt(vi) + eps)


@nb.njit(parallel=True, cache=True)
def dense_grad_t_f32(dy, x, out):
    """out[u, i] = sum_n dy[n, u] * x[n, i]   (dy: (N, U), x: (N, F), out: (U, F)).

    Tiled over columns of `out` so x is read once and the output streams.
    """
    n_batch, units = dy.shape
    feat = x.shape[1]
    block = 2048
    n_blocks = (feat + block - 1) // block
    for b in nb.prange(n_blocks):
        i0 = b * block
        i1 = min(i0 + block, feat)
        for u in range(units):
            for i in range(i0, i1):
                acc = np.float32(0.0)
                for n in range(n_batch):
                    acc += dy[n, u] * x[n, i]
                out[u, i] = acc


@nb.njit(parallel=True, cache=True)
def dense_dx_f32(dy, wt, out):
    """out[n, i] = sum_u dy[n, u] * wt[u, i]   (wt: (U, F), out: (N, F)).

    Tiled over columns so the weight matrix streams exactly once.
    """
    n_batch, units = dy.shape
    feat = wt.shape[1]
    block = 2048
    n_blocks = (feat + block - 1) // block
    for b in nb.prange(n_blocks):
        i0 = b * block
        i1 = min(i0 + block, feat)
        for n in range(n_batch):
            for i in range(i0, i1):
                out[n, i] = np.float32(0.0)
        for u in range(units):
            for n in range(n_batch):
                d = dy[n, u]
                if d != np.float32(0.0):
                    for i in range(i0, i1):
                        out[n, i] += d * wt[u, i]


@nb.njit(parallel=True, cache=True)
def im2col_f32(x, col):
    """Pack 3x3 same-padded patches: x (N, H, W, C) -> col (N, H, W, 3, 3, C)."""
    n_batch, h, w, c = x.shape
    for n in nb.prange(n_batch):
        for y in range(h):
            for ky in range(3):
                yy = y + ky - 1
                inside_y = 0 <= yy < h
                for x_ in range(w):
                    for kx in range(3):
                        xx = x_ + kx - 1
                        if inside_y and 0 <= xx < w:
                            for ch in range(c):
                                col[n, y, x_, ky, kx, ch] = x[n, yy, xx, ch]
                        else:
                            for ch in range(c):
                                col[n, y, x_, ky, kx, ch] = np.float32(0.0)


@nb.njit(parallel=True, cache=True)
def col2im_f32(dcol, dx):
    """Fold patch gradients back: dcol (N, H, W, 3, 3, C) -> dx (N, H, W, C)."""
    n_batch, h, w, c = dx.shape
    for n in nb.prange(n_batch):
        for y in range(h):
            for x_ in range(w):
                for ch in range(c):
                    dx[n, y, x_, ch] = np.float32(0.0)
        for y in range(h):
            for ky in range(3):
                yy = y + ky - 1
                if yy < 0 or yy >= h:
                    continue
                for x_ in range(w):
                    for kx in range(3):
                        xx = x_ + kx - 1
                        if 0 <= xx < w:
                            for ch in range(c):
                                dx[n, yy, xx, ch] += dcol[n, y, x_, ky, kx, ch]


@nb.njit(parallel=True, cache=True)
def bias_relu_f32(a, bias):
    """a[r, c] = max(a[r, c] + bias[c], 0) in place; a is (rows, channels)."""
    rows, channels = a.shape
    for r in nb.prange(rows):
        for c in range(channels):
            s = a[r, c] + bias[c]
            a[r, c] = s if s > np.float32(0.0) else np.float32(0.0)


@nb.njit(parallel=True, cache=True)
def relu_bwd_f32(dy, act):
    """dy *= (act > 0) in place on flat views."""
    for i in nb.prange(dy.size):
        if act[i] <= np.float32(0.0):
            dy[i] = np.float32(0.0)


@nb.njit(parallel=True, cache=True)
def maxpool_f32(x, out, idx):
    """2x2/stride-2 max pool; records the flat argmax for the backward pass.

    x: (N, H, W, C); out, idx: (N, H//2, W//2, C).  Ties go to the first
    position in (top-left, top-right, bottom-left, bottom-right) order.
    """
    n_batch, h2, w2, c = out.shape
    w = x.shape[2]
    for n in nb.prange(n_batch):
        for y in range(h2):
            for x_ in range(w2):
                for ch in range(c):
                    best = x[n, 2 * y, 2 * x_, ch]
                    arg = (2 * y) * w + (2 * x_)
                    v = x[n, 2 * y, 2 * x_ + 1, ch]
                    if v > best:
                        best, arg = v, (2 * y) * w + (2 * x_ + 1)
                    v = x[n, 2 * y + 1, 2 * x_, ch]
                    if v > best:
                        best, arg = v, (2 * y + 1) * w + (2 * x_)
                    v = x[n, 2 * y + 1, 2 * x_ + 1, ch]
                    if v > best:
                        best, arg = v, (2 * y + 1) * w + (2 * x_ + 1)
                    out[n, y, x_, ch] = best
                    idx[n, y, x_, ch] = arg


@nb.njit(parallel=True, cache=True)
def maxpool_bwd_f32(dy, idx, dx):
    """Scatter pooled gradients to the recorded argmax positions."""
    n_batch, h, w, c = dx.shape
    h2, w2 = dy.shape[1], dy.shape[2]
    for n in nb.prange(n_batch):
        for y in range(h):
            for x_ in range(w):
                for ch in range(c):
                    dx[n, y, x_, ch] = np.float32(0.0)
        for y in range(h2):
            for x_ in range(w2):
                for ch in range(c):
                    flat = idx[n, y, x_, ch]
                    dx[n, flat // w, flat % w, ch] += dy[n, y, x_, ch]


def warm_up() -> None:
    """Compile the kernels on toy shapes (first-call latency control)."""
    f = np.float32
    p = np.zeros(4, dtype=f)
    adam_update_f32(p, p.copy(), p.copy(), p.copy(), f(0.1), f(0.9), f(0.999), f(1e-7))
    dy = np.zeros((2, 3), dtype=f)
    x = np.zeros((2, 5), dtype=f)
    dense_grad_t_f32(dy, x, np.zeros((3, 5), dtype=f))
    dense_dx_f32(dy, np.zeros((3, 5), dtype=f), np.zeros((2, 5), dtype=f))
    img = np.zeros((1, 4, 4, 2), dtype=f)
    col = np.zeros((1, 4, 4, 3, 3, 2), dtype=f)
    im2col_f32(img, col)
    col2im_f32(col, img.copy())
    bias_relu_f32(np.zeros((4, 2), dtype=f), np.zeros(2, dtype=f))
    relu_bwd_f32(np.zeros(4, dtype=f), np.zeros(4, dtype=f))
    out = np.zeros((1, 2, 2, 2), dtype=f)
    idx = np.zeros((1, 2, 2, 2), dtype=np.int64)
    maxpool_f32(img, out, idx)
    maxpool_bwd_f32(out, idx, img.copy())
    affine_batch_f32(np.zeros((1, 4, 4), dtype=f), np.zeros((1, 4, 4), dtype=f),
                     np.array([[1, 0, 0, 0, 1, 0]], dtype=f), np.zeros(1, dtype=f))


@nb.njit(parallel=True, cache=True)
def affine_batch_f32(src, dst, inv_mats, fills):
    """Bilinear warp of a batch with per-image inverse affine maps.

    inv_mats[n] = (a0..a5) mapping output (x, y) to source coordinates
    xs = a0*x + a1*y + a2, ys = a3*x + a4*y + a5.  Reads outside the frame
    take fills[n].
    """
    n_batch, height, width = src.shape
    for n in nb.prange(n_batch):
        a0, a1, a2 = inv_mats[n, 0], inv_mats[n, 1], inv_mats[n, 2]
        a3, a4, a5 = inv_mats[n, 3], inv_mats[n, 4], inv_mats[n, 5]
        fill = fills[n]
        for y in range(height):
            for x in range(width):
                xs = a0 * x + a1 * y + a2
                ys = a3 * x + a4 * y + a5
                x0 = int(np.floor(xs))
                y0 = int(np.floor(ys))
                fx = xs - x0
                fy = ys - y0
                v = np.float32(0.0)
                for dy_ in range(2):
                    yy = y0 + dy_
                    wy = fy if dy_ == 1 else np.float32(1.0) - fy
                    for dx_ in range(2):
                        xx = x0 + dx_
                        wx = fx if dx_ == 1 else np.float32(1.0) - fx
                        if 0 <= yy < height and 0 <= xx < width:
                            v += wy * wx * src[n, yy, xx]
                        else:
                            v += wy * wx * fill
                dst[n, y, x] = v
