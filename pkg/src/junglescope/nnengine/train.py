"""Adam / binary-cross-entropy training loop with per-step augmentation."""

from __future__ import annotations

import numpy as np

from ..rng import (TAG_AUGMENT, TAG_DROPOUT, TAG_EPOCH, TAG_SPLIT, derive_rng)
from .augment import augment_batch
from .config import ModelSpec, TrainConfig
from .kernels import adam_update_f32
from .layers import Net
from .model import TrainedModel, init_model, normalize_images


class TrainingDiverged(RuntimeError):
    pass


def split_indices(n: int, split: tuple[float, float, float], seed: int):
    """Deterministic shuffled train/val/test index partition."""
    perm = derive_rng(seed, TAG_SPLIT).permutation(n)
    n_train = int(np.floor(split[0] * n))
    n_val = int(np.floor(split[1] * n))
    train, val, test = perm[:n_train], perm[n_train:n_train + n_val], perm[n_train + n_val:]
    if len(train) == 0 or len(val) == 0 or len(test) == 0:
        raise ValueError(f"split of {n} samples leaves an empty partition")
    return train, val, test


def bce_with_logits(logits: np.ndarray, labels: np.ndarray) -> float:
    """Mean binary cross-entropy over all samples and outputs."""
    z = logits.astype(np.float64)
    y = labels.astype(np.float64)
    per = np.maximum(z, 0) - z * y + np.log1p(np.exp(-np.abs(z)))
    return float(per.mean())


class _Adam:
    def __init__(self, params: dict[str, np.ndarray], config: TrainConfig):
        self.config = config
        self.t = 0
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]):
        c = self.config
        self.t += 1
        alpha = c.learning_rate * np.sqrt(1.0 - c.beta2 ** self.t) / (1.0 - c.beta1 ** self.t)
        for k, p in params.items():
            g, m, v = grads[k], self.m[k], self.v[k]
            if p.dtype == np.float32:
                adam_update_f32(p.ravel(), np.ascontiguousarray(g, dtype=np.float32).ravel(),
                                m.ravel(), v.ravel(),
                                np.float32(alpha), np.float32(c.beta1),
                                np.float32(c.beta2), np.float32(c.epsilon))
            else:
                np.multiply(m, c.beta1, out=m)
                m += (1.0 - c.beta1) * g
                np.multiply(v, c.beta2, out=v)
                v += (1.0 - c.beta2) * (g * g)
                p -= alpha * m / (np.sqrt(v) + c.epsilon)


def _accuracy(logits: np.ndarray, labels: np.ndarray) -> float:
    return float(((logits > 0) == labels.astype(bool)).mean())


def _eval_logits(net: Net, x: np.ndarray, chunk: int = 64) -> np.ndarray:
    outs = [net.forward_eval(x[i:i + chunk]) for i in range(0, len(x), chunk)]
    return np.concatenate(outs, axis=0)


def train(model: TrainedModel, images: np.ndarray, labels: np.ndarray,
          config: TrainConfig) -> TrainedModel:
    """Train on a 70/15/15 split; returns a new TrainedModel with history.

    `images`: (n, H, W) uint16 or float; `labels`: (n,) or (n, B) 0/1.
    The input model only provides the initial parameters.
    """
    spec = model.spec
    labels = np.asarray(labels)
    if labels.ndim == 1:
        labels = labels[:, None]
    if labels.shape[1] != spec.n_outputs:
        raise ValueError(f"labels have {labels.shape[1]} bits, model wants {spec.n_outputs}")
    if images.shape[0] != labels.shape[0]:
        raise ValueError("images and labels disagree on the sample count")
    if images.shape[1:] != spec.input_shape:
        raise ValueError(f"images are {images.shape[1:]}, model wants {spec.input_shape}")

    x = normalize_images(images)
    y = labels.astype(np.float32)
    idx_train, idx_val, idx_test = split_indices(len(x), config.split, config.seed)
    steps = config.steps_per_epoch(len(idx_train))
    if steps < 1:
        raise ValueError(f"{len(idx_train)} training images cannot fill one "
                         f"batch of {config.batch_size}")

    net = Net(spec, model.copy_params(), dtype=np.float32)
    opt = _Adam(net.params, config)
    x_val, y_val = x[idx_val], y[idx_val]
    history: list[dict] = []
    best = (-1.0, None)

    for epoch in range(config.epochs):
        order = idx_train[derive_rng(config.seed, TAG_EPOCH, epoch).permutation(len(idx_train))]
        ep_loss, ep_acc = 0.0, 0.0
        for step in range(steps):
            batch = order[step * config.batch_size:(step + 1) * config.batch_size]
            xb = x[batch]
            if not config.augment.is_identity:
                xb = augment_batch(xb, config.augment,
                                   derive_rng(config.seed, TAG_AUGMENT, epoch, step))
            logits = net.forward_train(
                xb, derive_rng(config.seed, TAG_DROPOUT, epoch, step))
            yb = y[batch]
            loss = bce_with_logits(logits, yb)
            if not np.isfinite(loss):
                raise TrainingDiverged(
                    f"non-finite loss {loss} at epoch {epoch + 1} step {step + 1} "
                    f"(seed {config.seed})")
            ep_loss += loss
            ep_acc += _accuracy(logits, yb)
            probs = 1.0 / (1.0 + np.exp(-logits.astype(np.float64)))
            dlogits = ((probs - yb) / probs.size).astype(np.float32)
            grads = net.backward(dlogits)
            opt.step(net.params, grads)
        val_logits = _eval_logits(net, x_val)
        val_acc = _accuracy(val_logits, y_val)
        history.append({
            "epoch": epoch + 1,
            "train_accuracy": ep_acc / steps,
            "val_accuracy": val_acc,
            "loss": ep_loss / steps,
        })
        if config.select_best_val and val_acc > best[0]:
            best = (val_acc, {k: v.copy() for k, v in net.params.items()})

    params = best[1] if (config.select_best_val and best[1] is not None) else net.params
    trained = TrainedModel(spec=spec, params=params, history=history, seed=config.seed,
                           meta=dict(model.meta))
    x_test, y_test = x[idx_test], y[idx_test]
    eval_net = Net(spec, params, dtype=np.float32)
    test_logits = _eval_logits(eval_net, x_test)
    trained.test_accuracy = ((test_logits > 0) == y_test.astype(bool)).mean(axis=0)
    return trained


def fit(spec: ModelSpec, images: np.ndarray, labels: np.ndarray,
        config: TrainConfig) -> TrainedModel:
    """init_model + train under one seed."""
    return train(init_model(spec, config.seed), images, labels, config)
