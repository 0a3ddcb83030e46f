"""
Генераторы ×2: SRCNN, SRResNet и генератор ESRGAN на блоках RRDB.
"""

from typing import List

import torch
from torch import nn

from src.errors import ShapeMismatchError
from src.nn_core.modules import (BatchNorm2d, Conv2d, LeakyReLU, PixelShuffle, PReLU, ReLU)

IMAGE_BANDS = 3


class Generator(nn.Module):
    """
    Общий контракт генераторов: вход (N, 3, H, W), выход с 3 каналами.

    В режиме оценки выход ограничивается диапазоном [0, 1]; при обучении
    выход не ограничивается.
    """

    scale: int = 2
    min_size: int = 1

    def check_input(self, x: torch.Tensor) -> None:
        if x.dim() != 4 or x.shape[1] != IMAGE_BANDS:
            raise ShapeMismatchError(
                f"{type(self).__name__}: ожидается вход (N, {IMAGE_BANDS}, H, W), получено {tuple(x.shape)}")
        if x.shape[2] < self.min_size or x.shape[3] < self.min_size:
            raise ShapeMismatchError(
                f"{type(self).__name__}: минимальный размер входа {self.min_size}, получено {tuple(x.shape[2:])}")

    def finish(self, out: torch.Tensor) -> torch.Tensor:
        return out if self.training else out.clamp(0.0, 1.0)


class SRCNN(Generator):
    """Три свертки над входом, заранее увеличенным бикубически до размера HR."""

    scale = 1

    def __init__(self):
        super().__init__()
        self.body = nn.Sequential(
            Conv2d(IMAGE_BANDS, 64, 9), ReLU(),
            Conv2d(64, 32, 1), ReLU(),
            Conv2d(32, IMAGE_BANDS, 5),
        )

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        self.check_input(x)
        return self.finish(self.body(x))


class ResidualBlock(nn.Module):
    def __init__(self, channels: int):
        super().__init__()
        self.body = nn.Sequential(
            Conv2d(channels, channels, 3), BatchNorm2d(channels), PReLU(channels),
            Conv2d(channels, channels, 3), BatchNorm2d(channels),
        )

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return x + self.body(x)


class SRResNet(Generator):
    min_size = 16

    def __init__(self, channels: int = 64, n_resblocks: int = 16):
        super().__init__()
        self.head = nn.Sequential(Conv2d(IMAGE_BANDS, channels, 9), PReLU(channels))
        self.blocks = nn.Sequential(*[ResidualBlock(channels) for _ in range(n_resblocks)])
        self.trunk_tail = nn.Sequential(Conv2d(channels, channels, 3), BatchNorm2d(channels))
        self.upsample = nn.Sequential(Conv2d(channels, channels * 4, 3), PixelShuffle(2), PReLU(channels))
        self.tail = Conv2d(channels, IMAGE_BANDS, 9)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        self.check_input(x)
        feat = self.head(x)
        feat = feat + self.trunk_tail(self.blocks(feat))
        return self.finish(self.tail(self.upsample(feat)))


class DenseBlock(nn.Module):
    """
    Пять сверток 3x3 с плотной конкатенацией; последняя без активации.

    Вход i-й свертки: channels + i * growth каналов.
    """

    def __init__(self, channels: int = 64, growth: int = 32, beta: float = 0.2, depth: int = 5):
        super().__init__()
        self.beta = beta
        self.convs = nn.ModuleList()
        for i in range(depth):
            out_channels = channels if i == depth - 1 else growth
            self.convs.append(Conv2d(channels + growth * i, out_channels, 3, init_scale=0.1))
        self.act = LeakyReLU()

    @property
    def input_channels(self) -> List[int]:
        return [conv.weight.shape[1] for conv in self.convs]

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        features = [x]
        for i, conv in enumerate(self.convs):
            out = conv(torch.cat(features, dim=1))
            if i < len(self.convs) - 1:
                out = self.act(out)
                features.append(out)
        return x + self.beta * out


class RRDB(nn.Module):
    def __init__(self, channels: int = 64, growth: int = 32, beta: float = 0.2, n_dense: int = 3):
        super().__init__()
        self.beta = beta
        self.dense = nn.Sequential(*[DenseBlock(channels, growth, beta) for _ in range(n_dense)])

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return x + self.beta * self.dense(x)


class RRDBGenerator(Generator):
    """Генератор ESRGAN: голова, n_rrdb блоков RRDB, глобальный пропуск, n_ub ступеней ×2."""

    def __init__(self, channels: int = 64, n_rrdb: int = 4, n_ub: int = 1,
                 growth: int = 32, beta: float = 0.2):
        super().__init__()
        self.scale = 2 ** n_ub
        self.head = Conv2d(IMAGE_BANDS, channels, 3)
        self.trunk = nn.Sequential(*[RRDB(channels, growth, beta) for _ in range(n_rrdb)])
        self.trunk_conv = Conv2d(channels, channels, 3)
        stages = []
        for _ in range(n_ub):
            stages += [Conv2d(channels, channels * 4, 3), PixelShuffle(2), LeakyReLU()]
        self.upsample = nn.Sequential(*stages)
        self.tail = nn.Sequential(Conv2d(channels, channels, 3), LeakyReLU(),
                                  Conv2d(channels, IMAGE_BANDS, 3))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        self.check_input(x)
        feat = self.head(x)
        feat = feat + self.trunk_conv(self.trunk(feat))
        return self.finish(self.tail(self.upsample(feat)))
