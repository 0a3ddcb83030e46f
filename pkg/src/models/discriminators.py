"""
Дискриминаторы: классический (глобальный логит) и U-Net со спектральной
нормализацией (логит на каждый пиксель).
"""

from typing import List

import torch
from torch import nn

from src.errors import ShapeMismatchError
from src.nn_core.modules import BatchNorm2d, Conv2d, Dense, LeakyReLU, SNConv2d, Upsample

CLASSIC_CHANNELS = (64, 64, 128, 128, 256, 256, 512, 512)
DENSE_FEATURES = 1024


class ClassicDiscriminator(nn.Module):
    """
    Восемь блоков conv-BN-LReLU (первый без BN), шаг чередуется 1, 2.

    Четыре блока с шагом 2 уменьшают сторону в 16 раз: 192 -> 12.
    """

    def __init__(self, channels: int = 64, input_size: int = 192):
        super().__init__()
        if input_size % 16 != 0:
            raise ShapeMismatchError(f"Размер входа дискриминатора {input_size} не кратен 16")
        self.input_size = input_size
        widths = [c * channels // 64 for c in CLASSIC_CHANNELS]
        blocks: List[nn.Module] = []
        in_channels = 3
        for i, width in enumerate(widths):
            stride = 1 if i % 2 == 0 else 2
            blocks.append(Conv2d(in_channels, width, 3, stride=stride, padding=1))
            if i > 0:
                blocks.append(BatchNorm2d(width))
            blocks.append(LeakyReLU())
            in_channels = width
        self.features = nn.Sequential(*blocks)
        self.feature_size = input_size // 16
        self.classifier = nn.Sequential(
            Dense(in_channels * self.feature_size ** 2, DENSE_FEATURES), LeakyReLU(),
            Dense(DENSE_FEATURES, 1),
        )

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if x.dim() != 4 or tuple(x.shape[1:]) != (3, self.input_size, self.input_size):
            raise ShapeMismatchError(
                f"Дискриминатор ожидает вход (N, 3, {self.input_size}, {self.input_size}), "
                f"получено {tuple(x.shape)}")
        feat = self.features(x)
        return self.classifier(feat.flatten(1))


class UNetDiscriminator(nn.Module):
    """
    U-Net: три понижающие свертки с шагом 2, зеркальный путь вверх с
    билинейным ×2 и сложением пропусков, карта логитов того же размера.
    """

    def __init__(self, channels: int = 64):
        super().__init__()
        c = channels
        self.act = LeakyReLU()
        self.up = Upsample(2, "bilinear")
        self.conv0 = SNConv2d(3, c, 3)
        self.down1 = SNConv2d(c, 2 * c, 4, stride=2, padding=1)
        self.down2 = SNConv2d(2 * c, 4 * c, 4, stride=2, padding=1)
        self.down3 = SNConv2d(4 * c, 4 * c, 4, stride=2, padding=1)
        self.up1 = SNConv2d(4 * c, 4 * c, 3)
        self.up2 = SNConv2d(4 * c, 2 * c, 3)
        self.up3 = SNConv2d(2 * c, c, 3)
        self.tail = nn.Sequential(SNConv2d(c, c, 3), LeakyReLU(), SNConv2d(c, 1, 3))

    def sn_convs(self) -> List[SNConv2d]:
        return [m for m in self.modules() if isinstance(m, SNConv2d)]

    def head(self, x: torch.Tensor) -> torch.Tensor:
        return self.act(self.conv0(x))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if x.dim() != 4 or x.shape[1] != 3:
            raise ShapeMismatchError(f"U-Net дискриминатор ожидает (N, 3, H, W), получено {tuple(x.shape)}")
        if x.shape[2] % 8 != 0 or x.shape[3] % 8 != 0:
            raise ShapeMismatchError(f"Размер входа {tuple(x.shape[2:])} не кратен 8")
        x0 = self.head(x)
        x1 = self.act(self.down1(x0))
        x2 = self.act(self.down2(x1))
        x3 = self.act(self.down3(x2))
        y = self.act(self.up1(self.up(x3))) + x2
        y = self.act(self.up2(self.up(y))) + x1
        y = self.act(self.up3(self.up(y))) + x0
        return self.tail(y)
