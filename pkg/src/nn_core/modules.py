"""
Слои с параметрами поверх функциональных операций nn-core.

Имена параметров уникальны в пределах модели (пути вида
"trunk.0.dense.2.conv.weight"), что используется форматом SRWT.
"""

from typing import Optional

import torch
from torch import nn

from src.nn_core import layers

LRELU_SLOPE = 0.2


def kaiming_uniform_fan_in(weight: torch.Tensor, scale: float = 1.0) -> None:
    """Инициализация Kaiming-uniform по fan-in с масштабом (0.1 внутри плотных блоков RRDB)."""
    nn.init.kaiming_uniform_(weight, a=LRELU_SLOPE, mode="fan_in", nonlinearity="leaky_relu")
    if scale != 1.0:
        with torch.no_grad():
            weight.mul_(scale)


class Conv2d(nn.Module):
    def __init__(self, in_channels: int, out_channels: int, kernel_size: int,
                 stride: int = 1, padding: Optional[int] = None, init_scale: float = 1.0):
        super().__init__()
        self.stride = stride
        self.padding = kernel_size // 2 if padding is None else padding
        self.weight = nn.Parameter(torch.empty(out_channels, in_channels, kernel_size, kernel_size))
        self.bias = nn.Parameter(torch.zeros(out_channels))
        kaiming_uniform_fan_in(self.weight, init_scale)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return layers.conv2d(x, self.weight, self.bias, self.stride, self.padding)


class SNConv2d(Conv2d):
    """Свертка со спектральной нормализацией веса (1 итерация на прямой проход)."""

    def __init__(self, *args, n_power_iterations: int = 1, **kwargs):
        super().__init__(*args, **kwargs)
        self.n_power_iterations = n_power_iterations
        u = torch.randn(self.weight.shape[0])
        self.register_buffer("u", u / (u.norm() + layers.SN_EPS))

    def normalized_weight(self) -> torch.Tensor:
        weight, u_new, _ = layers.spectral_normalize(
            self.weight, self.u, self.n_power_iterations, update=self.training)
        if self.training:
            self.u.copy_(u_new)
        return weight

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return layers.conv2d(x, self.normalized_weight(), self.bias, self.stride, self.padding)


class Dense(nn.Module):
    def __init__(self, in_features: int, out_features: int):
        super().__init__()
        self.weight = nn.Parameter(torch.empty(out_features, in_features))
        self.bias = nn.Parameter(torch.zeros(out_features))
        kaiming_uniform_fan_in(self.weight)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return layers.dense(x, self.weight, self.bias)


class LeakyReLU(nn.Module):
    def __init__(self, slope: float = LRELU_SLOPE):
        super().__init__()
        self.slope = slope

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return layers.leaky_relu(x, self.slope)


class PReLU(nn.Module):
    def __init__(self, channels: int, init: float = 0.25):
        super().__init__()
        self.weight = nn.Parameter(torch.full((channels,), init))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return layers.prelu(x, self.weight)


class BatchNorm2d(nn.Module):
    def __init__(self, channels: int, momentum: float = 0.1, eps: float = 1e-5):
        super().__init__()
        self.momentum = momentum
        self.eps = eps
        self.weight = nn.Parameter(torch.ones(channels))
        self.bias = nn.Parameter(torch.zeros(channels))
        self.register_buffer("running_mean", torch.zeros(channels))
        self.register_buffer("running_var", torch.ones(channels))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return layers.batch_norm(x, self.weight, self.bias, self.running_mean, self.running_var,
                                 self.training, self.momentum, self.eps)


class PixelShuffle(nn.Module):
    def __init__(self, r: int):
        super().__init__()
        self.r = r

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return layers.pixel_shuffle(x, self.r)


class Upsample(nn.Module):
    def __init__(self, scale: int = 2, mode: str = "bilinear"):
        super().__init__()
        if mode not in ("nearest", "bilinear"):
            raise ValueError(f"Неизвестный режим увеличения: {mode}")
        self.scale = scale
        self.mode = mode

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if self.mode == "nearest":
            return layers.interpolate_nearest(x, self.scale)
        return layers.interpolate_bilinear(x, self.scale)


class ReLU(nn.Module):
    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return layers.relu(x)


class MaxPool2d(nn.Module):
    def __init__(self, k: int = 2):
        super().__init__()
        self.k = k

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return layers.max_pool2d(x, self.k)
