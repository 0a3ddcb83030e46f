"""
Базовые растровые типы и примитивы предобработки.

Все операции - чистые функции: входные растры не изменяются, результат
всегда новый объект. Вычисления ведутся в double precision, хранение на
диске - float32 (см. raster_io).
"""

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Any, Callable, Dict, List, Optional, Tuple

import numpy as np
from scipy import ndimage
from typing_extensions import Literal, Self

from src.errors import ShapeMismatchError

NormalizeMode = Literal["fixed-range", "per-image-minmax"]
ResampleMethod = Literal["nearest", "bilinear", "bicubic"]

SUPPORTED_BIT_DEPTHS = (8, 12)
KEYS_A = -0.5


@dataclass(frozen=True, eq=False)
class Raster:
    """
    Многоканальный растр с опциональным шагом дискретизации на местности.

    Args:
        data: Массив формы (bands, height, width), порядок каналов RGB
        gsd: Размер пикселя на местности, м/пиксель
        nominal_bit_depth: Разрядность источника (8 или 12 бит)
        metadata: Служебные флаги (например, константные каналы после нормализации)
    """

    data: np.ndarray
    gsd: Optional[float] = None
    nominal_bit_depth: int = 8
    metadata: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        array = np.asarray(self.data, dtype=np.float64)
        if array.ndim == 2:
            array = array[np.newaxis]
        if array.ndim != 3:
            raise ShapeMismatchError(
                f"Растр должен иметь форму (bands, height, width), получено {array.shape}")
        if min(array.shape) < 1:
            raise ShapeMismatchError(f"Пустой растр: {array.shape}")
        if self.gsd is not None and not self.gsd > 0:
            raise ValueError(f"GSD должен быть положительным, получено {self.gsd}")
        array.setflags(write=False)
        object.__setattr__(self, "data", array)

    @property
    def bands(self) -> int:
        return self.data.shape[0]

    @property
    def height(self) -> int:
        return self.data.shape[1]

    @property
    def width(self) -> int:
        return self.data.shape[2]

    def with_data(self, data: np.ndarray, **changes) -> Self:
        """Возвращает копию растра с новыми данными и теми же атрибутами."""
        return replace(self, data=data, **changes)


@dataclass(frozen=True)
class BoxKernelSpec:
    """Квадратное ядро усреднения n x n (n нечетное)."""

    n: int

    @classmethod
    def from_gsd(cls, source_gsd: float, target_gsd: float) -> "BoxKernelSpec":
        """Ядро по отношению разрешений: 0.2 м -> 5 м дает n = 25."""
        return cls(n=int(round(target_gsd / source_gsd)))


@dataclass(frozen=True, eq=False)
class Histogram:
    """Гистограмма канала на отрезке [0, 1] с нормированной CDF."""

    bin_edges: np.ndarray
    counts: np.ndarray
    cdf: np.ndarray

    @property
    def bin_count(self) -> int:
        return len(self.counts)

    @property
    def bin_centers(self) -> np.ndarray:
        return 0.5 * (self.bin_edges[:-1] + self.bin_edges[1:])

    @classmethod
    def of(cls, values: np.ndarray, bins: int) -> "Histogram":
        counts, edges = np.histogram(np.clip(values, 0.0, 1.0), bins=bins, range=(0.0, 1.0))
        cdf = np.cumsum(counts).astype(np.float64)
        cdf /= cdf[-1]
        return cls(bin_edges=edges, counts=counts, cdf=cdf)


def normalize(r: Raster, mode: NormalizeMode = "fixed-range") -> Raster:
    """
    Приводит значения растра к отрезку [0, 1].

    В режиме fixed-range значения делятся на 2^depth - 1, что сохраняет
    сопоставимость между снимками. В режиме per-image-minmax каждый канал
    растягивается по своим min/max; константный канал дает 0.0 и
    попадает в metadata['constant_bands'].

    Args:
        r: Исходный растр в отсчетах датчика
        mode: Режим нормализации

    Returns:
        Нормализованный растр
    """
    if mode == "fixed-range":
        if r.nominal_bit_depth not in SUPPORTED_BIT_DEPTHS:
            raise ValueError(
                f"Неподдерживаемая разрядность {r.nominal_bit_depth}, "
                f"ожидается одна из {SUPPORTED_BIT_DEPTHS}")
        scale = float(2 ** r.nominal_bit_depth - 1)
        out = r.data / scale
        if out.min() < 0.0 or out.max() > 1.0:
            logging.warning(
                f"Значения вне номинального диапазона {r.nominal_bit_depth} бит, выполняется обрезка")
            out = np.clip(out, 0.0, 1.0)
        return r.with_data(out)

    if mode == "per-image-minmax":
        out = np.zeros_like(r.data)
        constant_bands = []
        for b in range(r.bands):
            band = r.data[b]
            lo, hi = band.min(), band.max()
            if hi == lo:
                constant_bands.append(b)
                continue
            out[b] = (band - lo) / (hi - lo)
        metadata = dict(r.metadata)
        if constant_bands:
            logging.warning(f"Константные каналы при min-max нормализации: {constant_bands}")
            metadata["constant_bands"] = constant_bands
        return r.with_data(out, metadata=metadata)

    raise ValueError(f"Неизвестный режим нормализации: {mode}")


def box_filter(r: Raster, k: BoxKernelSpec) -> Raster:
    """
    Арифметическое усреднение в окне n x n с повторением краевых пикселей.

    Args:
        r: Исходный растр
        k: Спецификация ядра

    Returns:
        Растр тех же размеров
    """
    if k.n < 1 or k.n % 2 == 0:
        raise ValueError(f"Размер ядра должен быть нечетным положительным, получено n={k.n}")
    if k.n > min(r.width, r.height):
        raise ValueError(
            f"Ядро {k.n}x{k.n} больше изображения {r.width}x{r.height}")
    out = ndimage.uniform_filter(r.data, size=(1, k.n, k.n), mode="nearest")
    return r.with_data(out)


def keys_kernel(t: np.ndarray, a: float = KEYS_A) -> np.ndarray:
    """Кубическое ядро свертки Keys с параметром a."""
    x = np.abs(np.asarray(t, dtype=np.float64))
    x2, x3 = x * x, x * x * x
    near = (a + 2.0) * x3 - (a + 3.0) * x2 + 1.0
    far = a * x3 - 5.0 * a * x2 + 8.0 * a * x - 4.0 * a
    return np.where(x <= 1.0, near, np.where(x < 2.0, far, 0.0))


def _linear_kernel(t: np.ndarray) -> np.ndarray:
    return np.clip(1.0 - np.abs(t), 0.0, None)


_KERNELS: Dict[str, Tuple[Callable[[np.ndarray], np.ndarray], int]] = {
    # ядро и радиус опоры в пикселях источника
    "bilinear": (_linear_kernel, 1),
    "bicubic": (keys_kernel, 2),
}


def resample_weight_matrix(src_n: int, dst_n: int, method: ResampleMethod = "bicubic") -> np.ndarray:
    """
    Матрица весов одномерной передискретизации формы (dst_n, src_n).

    Центры пикселей совмещены: x_src = (x_dst + 0.5) * src_n / dst_n - 0.5,
    индексы за границей зажимаются к краю (суммирование весов в крайний пиксель).
    """
    scale = src_n / dst_n
    centers = (np.arange(dst_n, dtype=np.float64) + 0.5) * scale - 0.5
    weights = np.zeros((dst_n, src_n), dtype=np.float64)
    rows = np.arange(dst_n)

    if method == "nearest":
        idx = np.clip(np.floor(centers + 0.5).astype(int), 0, src_n - 1)
        weights[rows, idx] = 1.0
        return weights

    kernel, radius = _KERNELS[method]
    base = np.floor(centers).astype(int)
    for offset in range(1 - radius, radius + 1):
        taps = base + offset
        w = kernel(centers - taps)
        np.add.at(weights, (rows, np.clip(taps, 0, src_n - 1)), w)
    return weights


def bicubic_resample(r: Raster, target_w: int, target_h: int,
                     method: ResampleMethod = "bicubic") -> Raster:
    """
    Передискретизация растра к размеру target_w x target_h.

    По умолчанию используется ядро Keys (a = -0.5); при совпадении сеток
    исходные отсчеты воспроизводятся точно.

    Args:
        r: Исходный растр
        target_w: Ширина результата, пиксели
        target_h: Высота результата, пиксели
        method: Ядро интерполяции (nearest, bilinear, bicubic)

    Returns:
        Передискретизированный растр; gsd пересчитывается, если был задан
    """
    if target_w < 1 or target_h < 1:
        raise ValueError(f"Недопустимый целевой размер {target_w}x{target_h}")
    wy = resample_weight_matrix(r.height, target_h, method)
    wx = resample_weight_matrix(r.width, target_w, method)
    out = np.einsum("ij,bjk,lk->bil", wy, r.data, wx, optimize=True)
    gsd = r.gsd * r.width / target_w if r.gsd is not None else None
    return r.with_data(out, gsd=gsd)


def sample_points(band: np.ndarray, xs: np.ndarray, ys: np.ndarray, a: float = KEYS_A) -> np.ndarray:
    """
    Бикубическая выборка канала в произвольных точках (координаты центров пикселей).

    Индексы за пределами изображения зажимаются к краю.
    """
    h, w = band.shape
    x0 = np.floor(xs).astype(int)
    y0 = np.floor(ys).astype(int)
    result = np.zeros(np.broadcast(xs, ys).shape, dtype=np.float64)
    for dy in range(-1, 3):
        wy = keys_kernel(ys - (y0 + dy), a)
        yi = np.clip(y0 + dy, 0, h - 1)
        for dx in range(-1, 3):
            wx = keys_kernel(xs - (x0 + dx), a)
            xi = np.clip(x0 + dx, 0, w - 1)
            result += wy * wx * band[yi, xi]
    return result


def _inverse_cdf(q: np.ndarray, reference: Histogram) -> np.ndarray:
    # кусочно-линейная обратная CDF по центрам непустых бинов
    nonempty = reference.counts > 0
    return np.interp(q, reference.cdf[nonempty], reference.bin_centers[nonempty])


def histogram_match(source: Raster, reference: Raster, bins: int = 256) -> Raster:
    """
    Поканальное сопоставление гистограмм: T(v) = CDF_ref^-1(CDF_src(v)).

    CDF источника берется ступенчатой (доля пикселей в бинах до бина v
    включительно), обратная CDF эталона - кусочно-линейная по центрам
    непустых бинов. Отображение монотонно неубывает в каждом канале.

    Args:
        source: Корректируемый растр, значения в [0, 1]
        reference: Эталонный растр, значения в [0, 1]
        bins: Число бинов гистограммы (>= 2)

    Returns:
        Скорректированный растр со значениями в [0, 1]
    """
    if bins < 2:
        raise ValueError(f"Число бинов должно быть >= 2, получено {bins}")
    if source.bands != reference.bands:
        raise ShapeMismatchError(
            f"Разное число каналов: {source.bands} и {reference.bands}")

    out = np.empty_like(source.data)
    for b in range(source.bands):
        ref_band = reference.data[b]
        if ref_band.max() == ref_band.min():
            out[b] = ref_band.flat[0]
            continue
        src_hist = Histogram.of(source.data[b], bins)
        ref_hist = Histogram.of(ref_band, bins)
        idx = np.clip(np.searchsorted(src_hist.bin_edges, source.data[b], side="right") - 1, 0, bins - 1)
        out[b] = _inverse_cdf(src_hist.cdf[idx], ref_hist)
    return source.with_data(np.clip(out, 0.0, 1.0))


def extract_patch_grid(r: Raster, patch: int, stride: int) -> List[Tuple[int, int, Raster]]:
    """
    Нарезка растра на квадратные фрагменты по регулярной сетке.

    Неполные фрагменты у правого и нижнего краев отбрасываются,
    порядок обхода - построчный.

    Returns:
        Список кортежей (row, col, фрагмент)
    """
    if patch < 1 or patch > min(r.width, r.height):
        raise ValueError(f"Размер фрагмента {patch} не помещается в {r.width}x{r.height}")
    if stride < 1:
        raise ValueError(f"Шаг сетки должен быть >= 1, получено {stride}")
    patches = []
    for row in range(0, r.height - patch + 1, stride):
        for col in range(0, r.width - patch + 1, stride):
            tile = r.data[:, row:row + patch, col:col + patch]
            patches.append((row, col, r.with_data(tile.copy(), metadata={})))
    return patches


def patch_count(width: int, height: int, patch: int, stride: int) -> int:
    """Число фрагментов сетки без построения самих фрагментов."""
    return math.floor((width - patch) / stride + 1) * math.floor((height - patch) / stride + 1)
