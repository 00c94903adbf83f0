from . import functional
from .checkpoint import load_checkpoint, save_checkpoint
from .functional import infer_r34, infer_vmax, soft_r34
from .losses import DegenerateLoss, LossWeights, composite_loss
from .net import NetConfig, ProfilerNet
from .optim import Adam
from .tensor import Tensor

__all__ = [
    "Adam",
    "DegenerateLoss",
    "LossWeights",
    "NetConfig",
    "ProfilerNet",
    "Tensor",
    "composite_loss",
    "functional",
    "infer_r34",
    "infer_vmax",
    "load_checkpoint",
    "save_checkpoint",
    "soft_r34",
]
