"""
Синтетический корпус: процедурные текстуры на HR-сетке и LR, полученный
собственной цепочкой деградации (сглаживание, бикубическое уменьшение,
шум, квантование).
"""

import logging
from datetime import date, timedelta
from pathlib import Path
from typing import List, Optional, Tuple

import numpy as np
from scipy import ndimage

from src.dataset.pairing import TilePairingEntry, write_pairing_file
from src.geo.geo_register import GeoAnchor
from src.raster.raster_core import BoxKernelSpec, Raster, bicubic_resample, box_filter
from src.raster.raster_io import write_srras

SYNTHETIC_CRS = "EPSG:32633"
PAIRING_FILE = "pairing.json"


def procedural_texture(height: int, width: int, rng: np.random.Generator) -> np.ndarray:
    """
    RGB-текстура (3, H, W) в [0, 1]: наклонные синусоиды, сглаженный
    шум значений и размытые прямоугольные "поля".
    """
    yy, xx = np.mgrid[0:height, 0:width].astype(np.float64)
    out = np.empty((3, height, width))
    base = rng.uniform(0.3, 0.6, size=3)
    for b in range(3):
        out[b] = base[b]

    for _ in range(3):
        theta = rng.uniform(0.0, np.pi)
        period = rng.uniform(12.0, 48.0)
        phase = rng.uniform(0.0, 2 * np.pi)
        wave = np.sin(2 * np.pi * (xx * np.cos(theta) + yy * np.sin(theta)) / period + phase)
        out += rng.uniform(0.02, 0.08, size=(3, 1, 1)) * wave

    coarse = Raster(rng.uniform(-1.0, 1.0, size=(3, max(2, height // 16), max(2, width // 16))))
    out += 0.12 * bicubic_resample(coarse, width, height).data

    fields = np.zeros_like(out)
    for _ in range(int(rng.integers(3, 7))):
        h = int(rng.integers(height // 8, height // 2))
        w = int(rng.integers(width // 8, width // 2))
        r0 = int(rng.integers(0, height - h))
        c0 = int(rng.integers(0, width - w))
        fields[:, r0:r0 + h, c0:c0 + w] += rng.uniform(-0.15, 0.15, size=(3, 1, 1))
    out += ndimage.gaussian_filter(fields, sigma=(0, 1.5, 1.5), mode="nearest")
    return np.clip(out, 0.02, 0.98)


def quantize(data: np.ndarray, bit_depth: int) -> np.ndarray:
    levels = float(2 ** bit_depth - 1)
    return np.round(np.clip(data, 0.0, 1.0) * levels) / levels


def degrade(hr: Raster, scale: int = 2, noise_sigma: float = 0.0, bit_depth: int = 12,
            rng: Optional[np.random.Generator] = None) -> Raster:
    """
    LR из HR: ядро (2*scale-1)x(2*scale-1), бикубическое уменьшение в scale
    раз, гауссов шум и квантование до bit_depth бит.
    """
    if hr.width % scale or hr.height % scale:
        raise ValueError(f"Размер HR {hr.width}x{hr.height} не кратен масштабу {scale}")
    smoothed = box_filter(hr, BoxKernelSpec(2 * scale - 1))
    lr = bicubic_resample(smoothed, hr.width // scale, hr.height // scale)
    data = lr.data
    if noise_sigma > 0:
        rng = rng or np.random.default_rng(0)
        data = data + rng.normal(0.0, noise_sigma, size=data.shape)
    gsd = hr.gsd * scale if hr.gsd is not None else None
    return Raster(quantize(data, bit_depth), gsd=gsd, nominal_bit_depth=bit_depth)


def synthetic_pair(lr_size: int, rng: np.random.Generator, scale: int = 2,
                   noise_sigma: float = 0.005, hr_gsd: float = 5.0) -> Tuple[Raster, Raster]:
    """Одна пара (LR, HR) в [0, 1]; HR квантован до 8 бит, LR до 12 бит."""
    hr_size = lr_size * scale
    hr = Raster(quantize(procedural_texture(hr_size, hr_size, rng), 8), gsd=hr_gsd)
    return degrade(hr, scale, noise_sigma, 12, rng), hr


def synthetic_patch_pairs(n: int, lr_size: int = 24, seed: int = 42,
                          scale: int = 2, noise_sigma: float = 0.005) -> List[Tuple[Raster, Raster]]:
    """n пар фрагментов в памяти для обучения и тестов в малом масштабе."""
    rng = np.random.default_rng(seed)
    return [synthetic_pair(lr_size, rng, scale, noise_sigma) for _ in range(n)]


def write_synthetic_corpus(out_dir: str, n_tiles: int, lr_size: int = 192, seed: int = 42,
                           scale: int = 2, noise_sigma: float = 0.005) -> str:
    """
    Записывает n_tiles пар тайлов SRRAS с геопривязкой и файл сопоставления.

    HR хранится в 8-битных отсчетах при 5 м, LR в 12-битных при 10 м.

    Returns:
        Путь к файлу сопоставления
    """
    if n_tiles < 1:
        raise ValueError(f"n_tiles должно быть >= 1, получено {n_tiles}")
    out = Path(out_dir)
    rng = np.random.default_rng(seed)
    hr_gsd = 5.0
    lr_gsd = hr_gsd * scale
    entries = []
    start = date(2020, 7, 1)
    for i in range(n_tiles):
        lr, hr = synthetic_pair(lr_size, rng, scale, noise_sigma, hr_gsd)
        x0, y0 = 500000.0 + i * 10 * lr_size * lr_gsd, 5200000.0
        hr_anchor = GeoAnchor(x0, y0, hr_gsd, -hr_gsd, SYNTHETIC_CRS)
        lr_anchor = GeoAnchor(x0, y0, lr_gsd, -lr_gsd, SYNTHETIC_CRS)
        aoi = f"syn{i:03d}"
        write_srras(str(out / f"{aoi}_hr.json"), hr.with_data(np.round(hr.data * 255.0), nominal_bit_depth=8), hr_anchor)
        write_srras(str(out / f"{aoi}_lr.json"), lr.with_data(np.round(lr.data * 4095.0), nominal_bit_depth=12), lr_anchor)
        entries.append(TilePairingEntry(
            aoi_id=aoi, hr_path=f"{aoi}_hr.json", lr_path=f"{aoi}_lr.json",
            hr_capture_date=start.isoformat(),
            lr_capture_date=(start + timedelta(days=i % 5)).isoformat(),
            notes="синтетическая пара", cloud_note="облачность < 5 %"))
    path = out / PAIRING_FILE
    write_pairing_file(str(path), entries)
    logging.info(f"Синтетический корпус: {n_tiles} пар тайлов в {out_dir}")
    return str(path)
