"""Model and training configuration for the classifier family.

The architecture is fixed by design: a stack of 3x3 same-padded
convolutions (rectifier), one 2x2 max-pool, one hidden dense layer with
dropout, and a sigmoid output per learned bit.  Only the knobs below vary.
"""

from __future__ import annotations

from dataclasses import dataclass, field


class ModelConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ModelSpec:
    """Shape of the classifier: input raster, conv widths, head size."""

    input_shape: tuple[int, int]                  # (height, width), 1 channel
    conv_filters: tuple[int, ...] = (32, 32)
    dense_units: int = 512
    dropout_rate: float = 0.2
    n_outputs: int = 1

    def __post_init__(self):
        h, w = self.input_shape
        if h < 2 or w < 2:
            raise ModelConfigError("input must be at least 2x2 so pooling keeps >= 1 px")
        if self.n_outputs < 1:
            raise ModelConfigError("need at least one output bit")
        if not 0 <= self.dropout_rate < 1:
            raise ModelConfigError("dropout_rate must lie in [0, 1)")
        if any(f < 1 for f in self.conv_filters):
            raise ModelConfigError("conv filter counts must be positive")
        if self.dense_units < 1:
            raise ModelConfigError("dense_units must be positive")

    @property
    def pooled_shape(self) -> tuple[int, int]:
        h, w = self.input_shape
        return (h // 2, w // 2)

    @property
    def flat_units(self) -> int:
        h2, w2 = self.pooled_shape
        channels = self.conv_filters[-1] if self.conv_filters else 1
        return h2 * w2 * channels

    def to_json_dict(self) -> dict:
        return {
            "input_shape": list(self.input_shape),
            "conv_filters": list(self.conv_filters),
            "dense_units": self.dense_units,
            "dropout_rate": self.dropout_rate,
            "n_outputs": self.n_outputs,
        }

    @staticmethod
    def from_json_dict(d: dict) -> "ModelSpec":
        return ModelSpec(
            input_shape=tuple(d["input_shape"]),
            conv_filters=tuple(d["conv_filters"]),
            dense_units=d["dense_units"],
            dropout_rate=d["dropout_rate"],
            n_outputs=d["n_outputs"],
        )


@dataclass(frozen=True)
class AugmentConfig:
    """Bounds of the per-step random affine transform (inputs only)."""

    max_rotation: float = 2.0      # degrees
    max_shift: float = 1.0         # pixels per axis
    max_shear: float = 2.0         # degrees
    fill: float | None = None      # None: per-image median

    def __post_init__(self):
        if min(self.max_rotation, self.max_shift, self.max_shear) < 0:
            raise ModelConfigError("augmentation bounds must be >= 0")

    @property
    def is_identity(self) -> bool:
        return self.max_rotation == 0 and self.max_shift == 0 and self.max_shear == 0


@dataclass(frozen=True)
class TrainConfig:
    """Adam + binary-cross-entropy training protocol."""

    learning_rate: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-7
    batch_size: int = 8
    epochs: int = 40
    split: tuple[float, float, float] = (0.70, 0.15, 0.15)
    augment: AugmentConfig = field(default_factory=AugmentConfig)
    seed: int = 0
    select_best_val: bool = False   # default: keep final-epoch weights

    def __post_init__(self):
        if abs(sum(self.split) - 1.0) > 1e-9:
            raise ModelConfigError("split fractions must sum to 1")
        if min(self.split) < 0:
            raise ModelConfigError("split fractions must be >= 0")
        if self.batch_size < 1 or self.epochs < 1:
            raise ModelConfigError("batch_size and epochs must be >= 1")

    def steps_per_epoch(self, n_train: int) -> int:
        return n_train // self.batch_size

    def to_json_dict(self) -> dict:
        return {
            "learning_rate": self.learning_rate,
            "beta1": self.beta1,
            "beta2": self.beta2,
            "epsilon": self.epsilon,
            "batch_size": self.batch_size,
            "epochs": self.epochs,
            "split": list(self.split),
            "augment": {
                "max_rotation": self.augment.max_rotation,
                "max_shift": self.augment.max_shift,
                "max_shear": self.augment.max_shear,
                "fill": self.augment.fill,
            },
            "seed": self.seed,
            "select_best_val": self.select_best_val,
        }

    @staticmethod
    def from_json_dict(d: dict) -> "TrainConfig":
        aug = d.get("augment", {})
        return TrainConfig(
            learning_rate=d.get("learning_rate", 0.001),
            beta1=d.get("beta1", 0.9),
            beta2=d.get("beta2", 0.999),
            epsilon=d.get("epsilon", 1e-7),
            batch_size=d.get("batch_size", 8),
            epochs=d.get("epochs", 40),
            split=tuple(d.get("split", (0.70, 0.15, 0.15))),
            augment=AugmentConfig(
                max_rotation=aug.get("max_rotation", 2.0),
                max_shift=aug.get("max_shift", 1.0),
                max_shear=aug.get("max_shear", 2.0),
                fill=aug.get("fill"),
            ),
            seed=d.get("seed", 0),
            select_best_val=d.get("select_best_val", False),
        )
