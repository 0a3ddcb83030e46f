"""
Покадровый вывод для растров больше обучающего фрагмента: перекрывающиеся
окна, линейное растушевывание в зонах перекрытия, нормировка на сумму весов.
"""

import logging
from typing import List, Optional

import numpy as np
import torch
from torch import nn

from src.config import InferConfig
from src.errors import ShapeMismatchError
from src.geo.geo_register import GeoAnchor
from src.models.model_zoo import ModelSpec, super_resolve
from src.raster.raster_core import Raster


def tile_starts(size: int, tile: int, overlap: int) -> List[int]:
    """Начала окон вдоль оси: шаг tile - overlap, последнее окно прижато к краю."""
    if size <= tile:
        return [0]
    step = tile - overlap
    starts = list(range(0, size - tile, step))
    starts.append(size - tile)
    return starts


def feather_weights(length: int, ramp: int, ramp_start: bool, ramp_end: bool) -> np.ndarray:
    """Одномерные веса окна: линейный подъем длины ramp у внутренних краев."""
    w = np.ones(length, dtype=np.float64)
    if ramp <= 0:
        return w
    pos = np.arange(length, dtype=np.float64) + 0.5
    if ramp_start:
        w = np.minimum(w, pos / ramp)
    if ramp_end:
        w = np.minimum(w, (length - pos) / ramp)
    return w


@torch.no_grad()
def infer_raster(model: Optional[nn.Module], spec: Optional[ModelSpec], raster: Raster,
                 cfg: Optional[InferConfig] = None, scale: int = 2) -> Raster:
    """
    Увеличение растра моделью окнами tile x tile с перекрытием overlap.

    Без модели выполняется бикубическое увеличение.
    """
    cfg = cfg or InferConfig()
    if raster.bands != 3:
        raise ShapeMismatchError(f"Ожидается 3 канала, получено {raster.bands}")
    if model is not None:
        model.eval()
        scale = spec.scale
    x = torch.from_numpy(raster.data.astype(np.float32)).unsqueeze(0)
    h, w = raster.height, raster.width
    out = np.zeros((3, h * scale, w * scale), dtype=np.float64)
    weight_sum = np.zeros((h * scale, w * scale), dtype=np.float64)
    ys, xs = tile_starts(h, cfg.tile, cfg.overlap), tile_starts(w, cfg.tile, cfg.overlap)

    for y0 in ys:
        th = min(cfg.tile, h)
        wy = feather_weights(th * scale, cfg.overlap * scale, y0 > 0, y0 + th < h)
        for x0 in xs:
            tw = min(cfg.tile, w)
            wx = feather_weights(tw * scale, cfg.overlap * scale, x0 > 0, x0 + tw < w)
            pred = super_resolve(model, spec, x[:, :, y0:y0 + th, x0:x0 + tw])[0].double().numpy()
            weights = np.outer(wy, wx)
            ry, rx = slice(y0 * scale, (y0 + th) * scale), slice(x0 * scale, (x0 + tw) * scale)
            out[:, ry, rx] += pred * weights
            weight_sum[ry, rx] += weights
    logging.debug(f"Вывод окнами: {len(ys) * len(xs)} окон для {w}x{h}")
    gsd = raster.gsd / scale if raster.gsd is not None else None
    return raster.with_data(out / weight_sum, gsd=gsd, metadata={})


def output_anchor(anchor: Optional[GeoAnchor], scale: int) -> Optional[GeoAnchor]:
    if anchor is None:
        return None
    return GeoAnchor(anchor.origin_x, anchor.origin_y, anchor.pixel_size_x / scale,
                     anchor.pixel_size_y / scale, anchor.crs_id)
