"""Random affine input augmentation (rotation, shift, shear).

The transform maps source to destination as

    p_dst = R(theta) . Sh(psi) . (p_src - c) + c + t

about the image center c, with theta/psi in degrees and t in pixels, all
drawn uniformly within the configured bounds.  Sampling uses the inverse
map with bilinear interpolation; out-of-frame reads take the fill value
(per-image median when unset).  Labels are never touched.
"""

from __future__ import annotations

import numpy as np

from ..rng import derive_rng
from .config import AugmentConfig
from .kernels import affine_batch_f32


def sample_transform(rng: np.random.Generator, config: AugmentConfig):
    """Draw (theta_deg, shear_deg, tx, ty) within the config bounds."""
    theta = rng.uniform(-config.max_rotation, config.max_rotation)
    shear = rng.uniform(-config.max_shear, config.max_shear)
    tx = rng.uniform(-config.max_shift, config.max_shift)
    ty = rng.uniform(-config.max_shift, config.max_shift)
    return theta, shear, tx, ty


def inverse_affine_coeffs(shape: tuple[int, int], theta_deg: float,
                          shear_deg: float, tx: float, ty: float) -> np.ndarray:
    """Six coefficients mapping output (x, y) to source coordinates."""
    h, w = shape
    cx, cy = (w - 1) / 2.0, (h - 1) / 2.0
    th = np.deg2rad(theta_deg)
    sh = np.deg2rad(shear_deg)
    rot = np.array([[np.cos(th), -np.sin(th)], [np.sin(th), np.cos(th)]])
    shear = np.array([[1.0, -np.sin(sh)], [0.0, np.cos(sh)]])
    m = rot @ shear
    minv = np.linalg.inv(m)
    # p_src = minv @ (p_dst - c - t) + c
    a0, a1 = minv[0]
    a3, a4 = minv[1]
    a2 = -a0 * (cx + tx) - a1 * (cy + ty) + cx
    a5 = -a3 * (cx + tx) - a4 * (cy + ty) + cy
    return np.array([a0, a1, a2, a3, a4, a5])


def augment_batch(images: np.ndarray, config: AugmentConfig,
                  rng: np.random.Generator, out: np.ndarray | None = None) -> np.ndarray:
    """Fresh random affine per image; float32 in, float32 out."""
    if config.is_identity:
        return images
    n, h, w = images.shape
    mats = np.empty((n, 6), dtype=np.float32)
    fills = np.empty(n, dtype=np.float32)
    for i in range(n):
        theta, shear, tx, ty = sample_transform(rng, config)
        mats[i] = inverse_affine_coeffs((h, w), theta, shear, tx, ty)
        fills[i] = config.fill if config.fill is not None else np.median(images[i])
    if out is None:
        out = np.empty_like(images)
    affine_batch_f32(np.ascontiguousarray(images, dtype=np.float32), out, mats, fills)
    return out


def augment(image: np.ndarray, config: AugmentConfig, seed: int) -> np.ndarray:
    """Single-image convenience wrapper; deterministic per seed."""
    rng = derive_rng(seed)
    img = np.asarray(image, dtype=np.float32)[None]
    return augment_batch(img, config, rng)[0]
