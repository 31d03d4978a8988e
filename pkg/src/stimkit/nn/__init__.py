from .checkpoint import ModelCheckpoint, load_checkpoint, save_checkpoint
from .gradcheck import grad_check, micro_config
from .model import ConvBlock, ModelConfig, forward, init_params
from .optim import TrainConfig, adam_init, adam_step, bce_loss
from .train import classify, predict, train

__all__ = [
    "ModelCheckpoint",
    "load_checkpoint",
    "save_checkpoint",
    "grad_check",
    "micro_config",
    "ConvBlock",
    "ModelConfig",
    "forward",
    "init_params",
    "TrainConfig",
    "adam_init",
    "adam_step",
    "bce_loss",
    "classify",
    "predict",
    "train",
]
