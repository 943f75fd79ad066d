"""Parameter containers, initialization, and inference-mode forward pass."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..rng import TAG_INIT, derive_rng
from .config import ModelSpec

# Dense kernels are stored transposed, (out, in) row-major: with batch-8
# training the BLAS shapes (out, in) @ (in, batch) run several times faster
# than (batch, in) @ (in, out) on small cores.


def param_names(spec: ModelSpec) -> list[str]:
    names = []
    for i in range(len(spec.conv_filters)):
        names += [f"conv{i}/kernel", f"conv{i}/bias"]
    names += ["dense/kernel_t", "dense/bias", "head/kernel_t", "head/bias"]
    return names


def init_params(spec: ModelSpec, seed: int) -> dict[str, np.ndarray]:
    """He-uniform fan-in weights (limit sqrt(6/fan_in)), zero biases."""

    def he_uniform(rng, shape, fan_in):
        limit = np.sqrt(6.0 / fan_in)
        return rng.uniform(-limit, limit, size=shape).astype(np.float32)

    params: dict[str, np.ndarray] = {}
    cin = 1
    for i, cout in enumerate(spec.conv_filters):
        rng = derive_rng(seed, TAG_INIT, i)
        params[f"conv{i}/kernel"] = he_uniform(rng, (3, 3, cin, cout), 9 * cin)
        params[f"conv{i}/bias"] = np.zeros(cout, dtype=np.float32)
        cin = cout
    rng = derive_rng(seed, TAG_INIT, 100)
    params["dense/kernel_t"] = he_uniform(rng, (spec.dense_units, spec.flat_units),
                                          spec.flat_units)
    params["dense/bias"] = np.zeros(spec.dense_units, dtype=np.float32)
    rng = derive_rng(seed, TAG_INIT, 101)
    params["head/kernel_t"] = he_uniform(rng, (spec.n_outputs, spec.dense_units),
                                         spec.dense_units)
    params["head/bias"] = np.zeros(spec.n_outputs, dtype=np.float32)
    return params


@dataclass
class TrainedModel:
    """Model spec plus parameters; training history once trained."""

    spec: ModelSpec
    params: dict[str, np.ndarray]
    history: list[dict] = field(default_factory=list)
    test_accuracy: np.ndarray | None = None   # per output bit
    seed: int | None = None
    meta: dict = field(default_factory=dict)

    def copy_params(self) -> dict[str, np.ndarray]:
        return {k: v.copy() for k, v in self.params.items()}


def init_model(spec: ModelSpec, seed: int) -> TrainedModel:
    return TrainedModel(spec=spec, params=init_params(spec, seed), seed=seed)


def normalize_images(images: np.ndarray, dtype=np.float32) -> np.ndarray:
    """Global intensity normalization: divide the 16-bit range down to [0, 1]."""
    if images.dtype == np.uint16 or np.issubdtype(images.dtype, np.integer):
        return images.astype(dtype) / dtype(65535.0)
    return images.astype(dtype, copy=False)


def forward(model: TrainedModel, batch: np.ndarray, chunk: int = 64) -> np.ndarray:
    """Per-bit probabilities, shape (n, n_outputs); dropout disabled."""
    from .layers import Net
    x = normalize_images(np.asarray(batch))
    if x.ndim == 2:
        x = x[None]
    if x.shape[1:] != model.spec.input_shape:
        raise ValueError(f"batch shape {x.shape[1:]} does not match "
                         f"model input {model.spec.input_shape}")
    net = Net(model.spec, model.params, dtype=x.dtype.type)
    out = np.empty((x.shape[0], model.spec.n_outputs), dtype=np.float64)
    for i in range(0, x.shape[0], chunk):
        logits = net.forward_eval(x[i:i + chunk])
        out[i:i + chunk] = 1.0 / (1.0 + np.exp(-logits.astype(np.float64)))
    return out


def evaluate(model: TrainedModel, images: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """Per-bit accuracy at threshold 0.5."""
    labels = np.asarray(labels)
    if labels.ndim == 1:
        labels = labels[:, None]
    if labels.shape[0] != len(images) or labels.shape[1] != model.spec.n_outputs:
        raise ValueError("labels do not match images / model outputs")
    probs = forward(model, images)
    pred = probs > 0.5
    return (pred == labels.astype(bool)).mean(axis=0)
