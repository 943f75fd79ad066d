from .augment import augment, augment_batch
from .config import AugmentConfig, ModelConfigError, ModelSpec, TrainConfig
from .gradcheck import gradient_check
from .io import load_model, save_model, write_history_csv
from .model import TrainedModel, evaluate, forward, init_model, normalize_images
from .train import TrainingDiverged, fit, split_indices, train

__all__ = [
    "AugmentConfig", "ModelConfigError", "ModelSpec", "TrainConfig",
    "TrainedModel", "TrainingDiverged",
    "augment", "augment_batch", "evaluate", "fit", "forward",
    "gradient_check", "init_model", "load_model", "normalize_images",
    "save_model", "split_indices", "train",
]
