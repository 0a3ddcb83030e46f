"""
Метрики качества изображения: PSNR, SSIM с гауссовым окном и LPIPS.

PSNR и SSIM считаются на numpy в double precision, LPIPS - в torch поверх
детерминированного экстрактора признаков.
"""

import math
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence

import numpy as np
import torch
from scipy import ndimage
from typing_extensions import Protocol

from src.errors import ShapeMismatchError
from src.raster.raster_core import Raster

PSNR_INF = float("inf")


@dataclass(frozen=True)
class SsimParams:
    """
    Параметры SSIM.

    Args:
        window: Сторона окна N (нечетная)
        sigma: СКО гауссова весового окна
        k1: Константа стабилизации яркости
        k2: Константа стабилизации контраста
        dynamic_range: Максимальное значение сигнала MAX
    """

    window: int = 11
    sigma: float = 1.5
    k1: float = 0.01
    k2: float = 0.03
    dynamic_range: float = 1.0

    def __post_init__(self):
        if self.window < 1 or self.window % 2 == 0:
            raise ValueError(f"Окно SSIM должно быть нечетным, получено {self.window}")
        if self.k1 <= 0 or self.k2 <= 0:
            raise ValueError("Константы k1, k2 должны быть положительными")

    def weights_1d(self) -> np.ndarray:
        radius = self.window // 2
        x = np.arange(-radius, radius + 1, dtype=np.float64)
        w = np.exp(-(x * x) / (2.0 * self.sigma * self.sigma))
        return w / w.sum()


class FeatureExtractor(Protocol):
    """Детерминированная сеть с именованными отводами признаков."""

    tap_names: List[str]
    layer_weights: List[float]

    def extract(self, x: torch.Tensor) -> Dict[str, torch.Tensor]:
        ...


def _check_same_shape(a: Raster, b: Raster) -> None:
    if a.data.shape != b.data.shape:
        raise ShapeMismatchError(f"Размеры изображений не совпадают: {a.data.shape} и {b.data.shape}")


def psnr(a: Raster, b: Raster, max_value: float = 1.0) -> float:
    """
    PSNR = 10 * log10(MAX^2 / MSE), MSE по всем пикселям и каналам.

    Для идентичных изображений возвращается float('inf').
    """
    _check_same_shape(a, b)
    if max_value <= 0:
        raise ValueError(f"MAX должен быть положительным, получено {max_value}")
    mse = float(np.mean((a.data - b.data) ** 2))
    if mse == 0.0:
        return PSNR_INF
    return 10.0 * math.log10(max_value * max_value / mse)


def _filter_valid(x: np.ndarray, w: np.ndarray) -> np.ndarray:
    # сепарабельная свертка с последующей обрезкой до окон, целиком лежащих в изображении
    r = len(w) // 2
    out = ndimage.correlate1d(x, w, axis=0, mode="constant")
    out = ndimage.correlate1d(out, w, axis=1, mode="constant")
    return out[r:x.shape[0] - r, r:x.shape[1] - r]


def ssim_map(a: np.ndarray, b: np.ndarray, p: SsimParams) -> np.ndarray:
    """Карта SSIM для одного канала по всем допустимым положениям окна."""
    w = p.weights_1d()
    c1 = (p.k1 * p.dynamic_range) ** 2
    c2 = (p.k2 * p.dynamic_range) ** 2
    mu_a = _filter_valid(a, w)
    mu_b = _filter_valid(b, w)
    var_a = _filter_valid(a * a, w) - mu_a * mu_a
    var_b = _filter_valid(b * b, w) - mu_b * mu_b
    cov = _filter_valid(a * b, w) - mu_a * mu_b
    num = (2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2)
    den = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2)
    return num / den


def ssim(a: Raster, b: Raster, p: Optional[SsimParams] = None) -> float:
    """
    Средний SSIM по скользящим окнам, усредненный по каналам.

    Args:
        a: Первое изображение, значения в [0, 1]
        b: Второе изображение той же формы
        p: Параметры окна и констант (по умолчанию N=11, sigma=1.5)
    """
    p = p or SsimParams()
    _check_same_shape(a, b)
    if a.width < p.window or a.height < p.window:
        raise ShapeMismatchError(
            f"Изображение {a.width}x{a.height} меньше окна SSIM {p.window}x{p.window}")
    values = [float(np.mean(ssim_map(a.data[c], b.data[c], p))) for c in range(a.bands)]
    return float(np.mean(values))


def _unit_normalize(x: torch.Tensor, eps: float = 1e-10) -> torch.Tensor:
    norm = torch.sqrt(torch.sum(x * x, dim=1, keepdim=True))
    return x / (norm + eps)


def lpips_distance(xa: torch.Tensor, xb: torch.Tensor, extractor: FeatureExtractor) -> torch.Tensor:
    """
    LPIPS для батча пар (N, C, H, W); возвращает тензор расстояний формы (N,).

    Для каждого отвода признаки нормируются по каналам, берется среднее
    квадрата разности по каналам и пространству, затем взвешенная сумма.
    """
    if not extractor.tap_names:
        raise ValueError("У экстрактора признаков нет ни одного отвода")
    if xa.shape != xb.shape:
        raise ShapeMismatchError(f"Размеры батчей не совпадают: {tuple(xa.shape)} и {tuple(xb.shape)}")
    with torch.no_grad():
        fa = extractor.extract(xa)
        fb = extractor.extract(xb)
        total = torch.zeros(xa.shape[0], dtype=xa.dtype)
        for name, weight in zip(extractor.tap_names, extractor.layer_weights):
            diff = _unit_normalize(fa[name]) - _unit_normalize(fb[name])
            total = total + weight * torch.mean(diff * diff, dim=(1, 2, 3)).to(total.dtype)
    return total


def raster_to_tensor(r: Raster, dtype: torch.dtype = torch.float32) -> torch.Tensor:
    """Растр (C, H, W) -> тензор (1, C, H, W)."""
    return torch.from_numpy(np.ascontiguousarray(r.data)).to(dtype).unsqueeze(0)


def lpips(a: Raster, b: Raster, extractor: Optional[FeatureExtractor] = None) -> float:
    """LPIPS между двумя растрами; экстрактор по умолчанию - компактная сеть с фиксированным seed."""
    _check_same_shape(a, b)
    extractor = extractor or default_extractor()
    return float(lpips_distance(raster_to_tensor(a), raster_to_tensor(b), extractor)[0])


_DEFAULT_EXTRACTOR: Optional[FeatureExtractor] = None


def default_extractor() -> FeatureExtractor:
    """Ленивая инициализация компактного экстрактора LPIPS."""
    global _DEFAULT_EXTRACTOR
    if _DEFAULT_EXTRACTOR is None:
        from src.models.backbone import build_lpips_extractor
        _DEFAULT_EXTRACTOR = build_lpips_extractor()
    return _DEFAULT_EXTRACTOR


def score_pairs(outputs: Sequence[Raster], targets: Sequence[Raster],
                extractor: Optional[FeatureExtractor] = None,
                ssim_params: Optional[SsimParams] = None,
                with_lpips: bool = True) -> List[Dict[str, float]]:
    """
    Считает PSNR/SSIM/LPIPS для последовательности пар (результат, эталон).

    Без LPIPS соответствующее значение равно NaN.
    """
    if with_lpips:
        extractor = extractor or default_extractor()
    scores = []
    for out, ref in zip(outputs, targets):
        scores.append({
            "psnr": psnr(out, ref),
            "ssim": ssim(out, ref, ssim_params),
            "lpips": lpips(out, ref, extractor) if with_lpips else float("nan"),
        })
    return scores
