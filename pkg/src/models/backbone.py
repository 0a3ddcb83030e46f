"""
Сверточные экстракторы признаков: VGG-подобная сеть для перцептивной
потери и компактная сеть для метрики LPIPS.

Веса не скачиваются: сеть инициализируется детерминированно от seed или
загружается из SRWT.
"""

import logging
from typing import Dict, List, Optional, Sequence, Tuple

import torch
from torch import nn

from src.nn_core.modules import Conv2d, MaxPool2d, ReLU
from src.nn_core.weights_io import load_srwt

VGG_STAGE_CONVS = (2, 2, 4, 4, 4)
VGG_STAGE_CHANNELS = (64, 128, 256, 512, 512)
PERCEPTUAL_LAYER_WEIGHTS = (0.1, 0.1, 1.0, 1.0, 1.0)

LPIPS_STAGE_CHANNELS = (16, 32, 64, 128, 128)
LPIPS_SEED = 1234


class FeatureBackbone(nn.Module):
    """
    Стек этапов свертка+ReLU; каждый этап после первого уменьшает размер вдвое.

    Уменьшение выполняет max-pooling перед этапом (downsample="pool", как у VGG)
    или первая свертка этапа с шагом 2 (downsample="stride").

    Отвод этапа - активация его последней свертки, до следующего pooling.
    Отвод пятого этапа ("relu5_4" у VGG) совпадает с активацией четвертой
    свертки этапа перед пятым pooling. Параметры заморожены.
    """

    def __init__(self, stage_convs: Sequence[int], stage_channels: Sequence[int],
                 layer_weights: Sequence[float], in_channels: int = 3, downsample: str = "pool"):
        super().__init__()
        if downsample not in ("pool", "stride"):
            raise ValueError(f"Неизвестный способ уменьшения: {downsample}")
        if not (len(stage_convs) == len(stage_channels) == len(layer_weights)):
            raise ValueError("Число этапов, ширин и весов отводов должно совпадать")
        self.stages = nn.ModuleList()
        self._tap_names: List[str] = []
        for s, (n_convs, width) in enumerate(zip(stage_convs, stage_channels), start=1):
            pooled = s > 1 and downsample == "pool"
            modules: List[nn.Module] = [MaxPool2d(2)] if pooled else []
            for i in range(n_convs):
                stride = 2 if s > 1 and downsample == "stride" and i == 0 else 1
                modules += [Conv2d(in_channels, width, 3, stride=stride), ReLU()]
                in_channels = width
            self.stages.append(nn.Sequential(*modules))
            self._tap_names.append(f"relu{s}_{n_convs}")
        self._layer_weights = [float(w) for w in layer_weights]
        self.freeze()

    @property
    def tap_names(self) -> List[str]:
        return list(self._tap_names)

    @property
    def layer_weights(self) -> List[float]:
        return list(self._layer_weights)

    def freeze(self) -> None:
        for p in self.parameters():
            p.requires_grad_(False)
        self.eval()

    def extract(self, x: torch.Tensor, taps: Optional[Sequence[str]] = None) -> Dict[str, torch.Tensor]:
        """Активации на отводах; неизвестное имя отвода - ошибка."""
        wanted = list(self._tap_names) if taps is None else list(taps)
        unknown = [t for t in wanted if t not in self._tap_names]
        if unknown:
            raise KeyError(f"Неизвестные отводы: {unknown}; доступны {self._tap_names}")
        last = max(self._tap_names.index(t) for t in wanted) if wanted else -1
        out: Dict[str, torch.Tensor] = {}
        h = x.to(next(self.parameters()).dtype)
        for i, stage in enumerate(self.stages[:last + 1]):
            h = stage(h)
            if self._tap_names[i] in wanted:
                out[self._tap_names[i]] = h
        return out

    def forward(self, x: torch.Tensor) -> Tuple[torch.Tensor, ...]:
        feats = self.extract(x)
        return tuple(feats[name] for name in self._tap_names)


def build_vgg_backbone(channels: int = 64, seed: int = 0,
                       weights_path: Optional[str] = None) -> FeatureBackbone:
    """VGG19-подобный стек (2, 2, 4, 4, 4) с шириной, масштабированной channels/64."""
    widths = [max(1, c * channels // 64) for c in VGG_STAGE_CHANNELS]
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(seed)
        backbone = FeatureBackbone(VGG_STAGE_CONVS, widths, PERCEPTUAL_LAYER_WEIGHTS)
    if weights_path:
        state = load_srwt(weights_path)
        backbone.load_state_dict(state)
        backbone.freeze()
        logging.info(f"Веса экстрактора признаков загружены из {weights_path}")
    return backbone


def build_lpips_extractor(seed: int = LPIPS_SEED) -> FeatureBackbone:
    """Компактная сеть из пяти этапов по одной свертке с шагом 2, веса отводов равны 1."""
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(seed)
        return FeatureBackbone((1,) * 5, LPIPS_STAGE_CHANNELS, (1.0,) * 5, downsample="stride")
