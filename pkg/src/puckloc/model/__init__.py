from .checkpoint import CheckpointMismatch, load_checkpoint, read_checkpoint, save_checkpoint
from .config import ModelConfig
from .network import FeatureBundle, Prediction, PuckNet, frames_to_tensor, heatmap_to_tensor

__all__ = [
    "CheckpointMismatch",
    "FeatureBundle",
    "ModelConfig",
    "Prediction",
    "PuckNet",
    "frames_to_tensor",
    "heatmap_to_tensor",
    "load_checkpoint",
    "read_checkpoint",
    "save_checkpoint",
]
