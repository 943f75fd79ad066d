"""Finite-difference verification of the analytic gradients."""

from __future__ import annotations

import numpy as np

from ..rng import derive_rng
from .config import ModelSpec
from .layers import Net
from .model import init_params
from .train import bce_with_logits


def _loss(net: Net, x: np.ndarray, y: np.ndarray) -> float:
    return bce_with_logits(net.forward_train(x, dropout_rng=None), y)


def gradient_check(spec: ModelSpec, eps: float = 1e-5, n_probes: int = 120,
                   seed: int = 0, batch: int = 4, dtype=np.float64) -> float:
    """Worst relative error between analytic and central-difference gradients.

    Probes `n_probes` randomly chosen parameters of a freshly initialized
    model under the BCE loss on a random batch.  Dropout is disabled (the
    mask is not differentiable state).  Runs in float64 by default so the
    difference quotient itself is trustworthy.
    """
    n_params = sum(v.size for v in init_params(spec, seed).values())
    if n_params > 200_000:
        raise ValueError(f"spec has {n_params} parameters; use a small spec "
                         "( <= 2e5 ) so finite differences stay affordable")
    rng = derive_rng(seed, 1)
    x = rng.random((batch, *spec.input_shape)).astype(dtype)
    y = rng.integers(0, 2, (batch, spec.n_outputs)).astype(dtype)
    net = Net(spec, init_params(spec, seed), dtype=dtype)

    logits = net.forward_train(x, dropout_rng=None)
    probs = 1.0 / (1.0 + np.exp(-logits.astype(np.float64)))
    dlogits = ((probs - y) / probs.size).astype(dtype)
    grads = net.backward(dlogits)

    names = sorted(net.params.keys())
    sizes = np.array([net.params[n].size for n in names])
    worst = 0.0
    for _ in range(n_probes):
        flat_idx = int(rng.integers(0, sizes.sum()))
        k = int(np.searchsorted(np.cumsum(sizes), flat_idx, side="right"))
        name = names[k]
        offset = flat_idx - int(np.sum(sizes[:k]))
        p = net.params[name].ravel()
        keep = p[offset]
        p[offset] = keep + eps
        up = _loss(net, x, y)
        p[offset] = keep - eps
        down = _loss(net, x, y)
        p[offset] = keep
        numeric = (up - down) / (2.0 * eps)
        analytic = float(grads[name].ravel()[offset])
        scale = max(abs(numeric), abs(analytic), 1e-8)
        worst = max(worst, abs(numeric - analytic) / scale)
    return worst
