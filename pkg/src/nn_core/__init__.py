"""
Примитивы нейросетей поверх автодифференцирования torch
"""

from src.nn_core.modules import (BatchNorm2d, Conv2d, Dense, LeakyReLU, MaxPool2d, PixelShuffle, PReLU,
                                 ReLU, SNConv2d, Upsample)
from src.nn_core.optim import GuardedAdam, adam_step

__all__ = ["BatchNorm2d", "Conv2d", "Dense", "LeakyReLU", "MaxPool2d", "PixelShuffle", "PReLU",
           "ReLU", "SNConv2d", "Upsample", "GuardedAdam", "adam_step"]
