"""Window classifier: model, objectives and training loop."""
from .model import EchoClassifier, ModelConfig, build_model, init_weights
from .optim import (Adam, AdamState, adam_step, cosine_lr, focal_loss, focal_loss_grad,
                    focal_loss_torch, inverse_frequency_alpha, softmax)
from .train import (EpochLog, Prediction, TrainConfig, TrainResult, batches, forward,
                    load_checkpoint, predict, save_checkpoint, train)

__all__ = [
    "Adam", "AdamState", "EchoClassifier", "EpochLog", "ModelConfig", "Prediction",
    "TrainConfig", "TrainResult", "adam_step", "batches", "build_model", "cosine_lr",
    "focal_loss", "focal_loss_grad", "focal_loss_torch", "forward", "init_weights",
    "inverse_frequency_alpha", "load_checkpoint", "predict", "save_checkpoint", "softmax",
    "train",
]
