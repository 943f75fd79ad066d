"""Forward/backward passes for the fixed conv-pool-dense architecture.

One `Net` owns the parameter dict plus reusable scratch buffers.  The
float32 training path routes bandwidth-bound pieces through the numba
kernels; the float64 path (gradient checking) uses plain numpy with the
same formulas, including first-argmax tie routing in the pool.
"""

from __future__ import annotations

import numpy as np

from .config import ModelSpec
from . import kernels


class Net:
    def __init__(self, spec: ModelSpec, params: dict[str, np.ndarray], dtype=np.float32):
        self.spec = spec
        self.dtype = dtype
        self.params = params
        if any(p.dtype != dtype for p in params.values()):
            self.params = {k: v.astype(dtype) for k, v in params.items()}
        self._fast = dtype == np.float32
        self._bufs: dict[tuple, np.ndarray] = {}
        self._cache: dict[str, object] = {}

    def _buf(self, name: str, shape: tuple, zero: bool = False, dtype=None) -> np.ndarray:
        key = (name, shape)
        arr = self._bufs.get(key)
        if arr is None:
            arr = np.empty(shape, dtype=dtype or self.dtype)
            self._bufs[key] = arr
        if zero:
            arr.fill(0)
        return arr

    # ------------------------------------------------------------------ conv

    def _im2col(self, x: np.ndarray, tag: str) -> np.ndarray:
        """(N, H, W, C) -> (N*H*W, 9C) with columns ordered (ky, kx, c)."""
        n, h, w, c = x.shape
        col6 = self._buf(f"{tag}/col", (n, h, w, 3, 3, c))
        if self._fast:
            kernels.im2col_f32(np.ascontiguousarray(x), col6)
        else:
            col6.fill(0)
            for ky in range(3):
                ys, ye = max(0, 1 - ky), min(h, h + 1 - ky)
                for kx in range(3):
                    xs, xe = max(0, 1 - kx), min(w, w + 1 - kx)
                    col6[:, ys:ye, xs:xe, ky, kx, :] = \
                        x[:, ys + ky - 1:ye + ky - 1, xs + kx - 1:xe + kx - 1, :]
        return col6.reshape(n * h * w, 9 * c)

    def _col2im(self, dcol: np.ndarray, n: int, h: int, w: int, c: int, tag: str) -> np.ndarray:
        dx = self._buf(f"{tag}/dx", (n, h, w, c))
        d6 = dcol.reshape(n, h, w, 3, 3, c)
        if self._fast:
            kernels.col2im_f32(d6, dx)
        else:
            dx.fill(0)
            for ky in range(3):
                ys, ye = max(0, 1 - ky), min(h, h + 1 - ky)
                for kx in range(3):
                    xs, xe = max(0, 1 - kx), min(w, w + 1 - kx)
                    dx[:, ys + ky - 1:ye + ky - 1, xs + kx - 1:xe + kx - 1, :] += \
                        d6[:, ys:ye, xs:xe, ky, kx, :]
        return dx

    def _conv_forward(self, x: np.ndarray, idx: int, cache: bool) -> np.ndarray:
        n, h, w, _ = x.shape
        kernel = self.params[f"conv{idx}/kernel"]
        cin, cout = kernel.shape[2], kernel.shape[3]
        kmat = kernel.reshape(9 * cin, cout)
        col = self._im2col(x, f"conv{idx}")
        out = self._buf(f"conv{idx}/out", (n * h * w, cout))
        np.dot(col, kmat, out=out)
        bias = self.params[f"conv{idx}/bias"]
        if self._fast:
            kernels.bias_relu_f32(out, bias)
        else:
            out += bias
            np.maximum(out, 0, out=out)
        if cache:
            self._cache[f"conv{idx}/col"] = col
            self._cache[f"conv{idx}/act"] = out
            self._cache[f"conv{idx}/dims"] = (n, h, w, cin)
        return out.reshape(n, h, w, cout)

    def _conv_backward(self, dy: np.ndarray, idx: int, grads: dict, need_dx: bool):
        n, h, w, cin = self._cache[f"conv{idx}/dims"]
        kernel = self.params[f"conv{idx}/kernel"]
        cout = kernel.shape[3]
        kmat = kernel.reshape(9 * cin, cout)
        act = self._cache[f"conv{idx}/act"]
        dy_flat = np.ascontiguousarray(dy.reshape(n * h * w, cout))
        if self._fast:
            kernels.relu_bwd_f32(dy_flat.ravel(), act.ravel())
        else:
            dy_flat *= act > 0
        grads[f"conv{idx}/kernel"] = (self._cache[f"conv{idx}/col"].T @ dy_flat
                                      ).reshape(3, 3, cin, cout)
        grads[f"conv{idx}/bias"] = dy_flat.sum(axis=0)
        if not need_dx:
            return None
        dcol = self._buf(f"conv{idx}/dcol", (n * h * w, 9 * cin))
        np.dot(dy_flat, kmat.T, out=dcol)
        return self._col2im(dcol, n, h, w, cin, f"conv{idx}")

    # ------------------------------------------------------------------ pool

    def _pool_forward(self, x: np.ndarray, cache: bool) -> np.ndarray:
        n, h, w, c = x.shape
        h2, w2 = h // 2, w // 2
        pooled = self._buf("pool/out", (n, h2, w2, c))
        idx = self._buf("pool/idx", (n, h2, w2, c), dtype=np.int64)
        if self._fast:
            kernels.maxpool_f32(np.ascontiguousarray(x), pooled, idx)
        else:
            win = (x[:, :h2 * 2, :w2 * 2, :]
                   .reshape(n, h2, 2, w2, 2, c)
                   .transpose(0, 1, 3, 5, 2, 4)
                   .reshape(n, h2, w2, c, 4))
            arg = win.argmax(axis=-1)           # first max wins, (wy, wx) order
            np.max(win, axis=-1, out=pooled)
            wy, wx = arg // 2, arg % 2
            yy = 2 * np.arange(h2)[None, :, None, None] + wy
            xx = 2 * np.arange(w2)[None, None, :, None] + wx
            idx[...] = yy * w + xx
        if cache:
            self._cache["pool/in_shape"] = x.shape
        return pooled

    def _pool_backward(self, dy: np.ndarray) -> np.ndarray:
        n, h, w, c = self._cache["pool/in_shape"]
        idx = self._bufs[("pool/idx", dy.shape)]
        dx = self._buf("pool/dx", (n, h, w, c))
        if self._fast:
            kernels.maxpool_bwd_f32(np.ascontiguousarray(dy), idx, dx)
        else:
            dx.fill(0)
            flat = dx.reshape(n, h * w, c)
            ni = np.arange(n)[:, None, None, None]
            ci = np.arange(c)[None, None, None, :]
            np.add.at(flat, (np.broadcast_to(ni, idx.shape), idx,
                             np.broadcast_to(ci, idx.shape)), dy)
        return dx

    # ----------------------------------------------------------------- dense

    def _dense_forward(self, flat: np.ndarray, name: str, relu: bool, cache: bool):
        wt = self.params[f"{name}/kernel_t"]
        z = np.ascontiguousarray((wt @ flat.T).T)
        z += self.params[f"{name}/bias"]
        if relu:
            np.maximum(z, 0, out=z)
        if cache:
            self._cache[f"{name}/in"] = flat
            self._cache[f"{name}/act"] = z
        return z

    def _dense_backward(self, dz: np.ndarray, name: str, grads: dict, need_dx: bool):
        wt = self.params[f"{name}/kernel_t"]
        x = self._cache[f"{name}/in"]
        dz = np.ascontiguousarray(dz)
        big = dz.shape[1] * x.shape[1] > 1 << 21
        if self._fast and big:
            dwt = self._buf(f"{name}/dwt", wt.shape)
            kernels.dense_grad_t_f32(dz, x, dwt)
        else:
            dwt = dz.T @ x
        grads[f"{name}/kernel_t"] = dwt
        grads[f"{name}/bias"] = dz.sum(axis=0)
        if not need_dx:
            return None
        if self._fast and big:
            dx = self._buf(f"{name}/dxin", x.shape)
            kernels.dense_dx_f32(dz, wt, dx)
            return dx
        return np.ascontiguousarray((wt.T @ dz.T).T)

    # ------------------------------------------------------------- full pass

    def _trunk_forward(self, x: np.ndarray, cache: bool) -> np.ndarray:
        a = x[..., None] if x.ndim == 3 else x
        a = a.astype(self.dtype, copy=False)
        for i in range(len(self.spec.conv_filters)):
            a = self._conv_forward(a, i, cache)
        a = self._pool_forward(a, cache)
        return a.reshape(a.shape[0], -1)

    def forward_train(self, x: np.ndarray, dropout_rng: np.random.Generator | None):
        """Training-mode logits; caches activations for backward()."""
        self._cache.clear()
        flat = self._trunk_forward(x, cache=True)
        h = self._dense_forward(flat, "dense", relu=True, cache=True)
        rate = self.spec.dropout_rate
        if rate > 0 and dropout_rng is not None:
            keep = (dropout_rng.random(h.shape) >= rate)
            mask = keep.astype(self.dtype) / self.dtype(1.0 - rate)
            self._cache["dropout/mask"] = mask
            h = h * mask
        else:
            self._cache["dropout/mask"] = None
        logits = self._dense_forward(h, "head", relu=False, cache=True)
        return logits

    def backward(self, dlogits: np.ndarray) -> dict[str, np.ndarray]:
        grads: dict[str, np.ndarray] = {}
        dh = self._dense_backward(dlogits, "head", grads, need_dx=True)
        mask = self._cache["dropout/mask"]
        if mask is not None:
            dh *= mask
        dh *= self._cache["dense/act"] > 0
        dflat = self._dense_backward(dh, "dense", grads, need_dx=True)
        n = dflat.shape[0]
        h2, w2 = self.spec.pooled_shape
        c = self.spec.conv_filters[-1] if self.spec.conv_filters else 1
        da = self._pool_backward(dflat.reshape(n, h2, w2, c))
        for i in reversed(range(len(self.spec.conv_filters))):
            da = self._conv_backward(da, i, grads, need_dx=i > 0)
        return grads

    def forward_eval(self, x: np.ndarray) -> np.ndarray:
        """Inference-mode logits: no dropout, no caching."""
        flat = self._trunk_forward(x, cache=False)
        h = self._dense_forward(flat, "dense", relu=True, cache=False)
        return self._dense_forward(h, "head", relu=False, cache=False)
