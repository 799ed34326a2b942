"""Convolutional encoder plus feed-forward head over differential echo windows."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import torch
from torch import nn

from ..errors import ConfigError
from ..labels import N_CLASSES


@dataclass
class ModelConfig:
    input_shape: tuple = (4, 150, 166)
    stage_channels: tuple = (16, 32, 64, 128)
    kernel_size: int = 3
    embedding_dim: int = 256
    head_widths: tuple = (128, 64, N_CLASSES)
    dropout_p: float = 0.25
    leaky_slope: float = 0.01

    def __post_init__(self):
        self.input_shape = tuple(int(x) for x in self.input_shape)
        self.stage_channels = tuple(int(x) for x in self.stage_channels)
        self.head_widths = tuple(int(x) for x in self.head_widths)
        if len(self.input_shape) != 3:
            raise ConfigError("input shape must be (channels, range bins, frames)")
        if not self.head_widths or self.head_widths[-1] != N_CLASSES:
            raise ConfigError(f"the last head layer must have {N_CLASSES} outputs")
        if not 0 <= self.dropout_p < 1:
            raise ConfigError("dropout probability must lie in [0, 1)")

    def to_dict(self):
        return asdict(self)


class EchoClassifier(nn.Module):
    """Returns class logits; apply a softmax for probabilities.

    Inputs are first compressed with ``asinh(x / input_scale)``, where
    ``input_scale`` is fitted to the training data, because echo amplitudes
    span several orders of magnitude with range.
    """

    def __init__(self, config: ModelConfig | None = None):
        super().__init__()
        self.config = config or ModelConfig()
        cfg = self.config
        layers = []
        c_in = cfg.input_shape[0]
        for c_out in cfg.stage_channels:
            layers += [
                nn.Conv2d(c_in, c_out, cfg.kernel_size, stride=2, padding=cfg.kernel_size // 2),
                nn.BatchNorm2d(c_out),
                nn.LeakyReLU(cfg.leaky_slope),
            ]
            c_in = c_out
        self.encoder = nn.Sequential(*layers, nn.AdaptiveAvgPool2d(1), nn.Flatten(),
                                     nn.Linear(c_in, cfg.embedding_dim))
        head = []
        width = cfg.embedding_dim
        for i, w in enumerate(cfg.head_widths):
            head.append(nn.Linear(width, w))
            if i < len(cfg.head_widths) - 1:
                head += [nn.BatchNorm1d(w), nn.LeakyReLU(cfg.leaky_slope), nn.Dropout(cfg.dropout_p)]
            width = w
        self.head = nn.Sequential(*head)
        self.register_buffer("input_scale", torch.ones(()))

    def compress(self, x: torch.Tensor) -> torch.Tensor:
        return torch.asinh(x / self.input_scale)

    def classify(self, z: torch.Tensor) -> torch.Tensor:
        """Logits for inputs that already went through :meth:`compress`."""
        return self.head(self.encoder(z))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.classify(self.compress(x))

    @property
    def final_layer(self) -> nn.Linear:
        return self.head[-1]


def init_weights(model: nn.Module, seed: int) -> None:
    """Uniform fan-in initialisation from a dedicated seeded generator."""
    gen = torch.Generator().manual_seed(int(seed))
    with torch.no_grad():
        for mod in model.modules():
            if isinstance(mod, (nn.Conv2d, nn.Linear)):
                fan_in = mod.weight[0].numel()
                bound = math.sqrt(6.0 / fan_in)
                mod.weight.copy_(torch.rand(mod.weight.shape, generator=gen) * 2 * bound - bound)
                if mod.bias is not None:
                    b = 1.0 / math.sqrt(fan_in)
                    mod.bias.copy_(torch.rand(mod.bias.shape, generator=gen) * 2 * b - b)
            elif isinstance(mod, (nn.BatchNorm1d, nn.BatchNorm2d)):
                mod.reset_parameters()


def build_model(config: ModelConfig | None = None, seed: int = 0) -> EchoClassifier:
    model = EchoClassifier(config)
    init_weights(model, seed)
    return model
