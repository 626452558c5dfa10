from .data import SHAPE_KINDS, SyntheticClipSpec, generate_clip, random_training_example
from .model import BackboneConfig, ToyDenoiser, init_params
from .train import TrainResult, heldout_loss, train
from . import checkpoint

__all__ = [
    "SHAPE_KINDS",
    "SyntheticClipSpec",
    "generate_clip",
    "random_training_example",
    "BackboneConfig",
    "ToyDenoiser",
    "init_params",
    "TrainResult",
    "heldout_loss",
    "train",
    "checkpoint",
]
