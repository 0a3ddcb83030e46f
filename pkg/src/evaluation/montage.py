"""
Сравнительная сетка фрагментов: строки - фрагменты, столбцы - эталон (GT)
и результаты методов с подписями "PSNR / SSIM / LPIPS".
"""

import logging
from pathlib import Path
from typing import List, Mapping, Sequence

import numpy as np
from PIL import Image, ImageDraw, ImageFont

from src.metrics.metric_report import MetricReport
from src.models.model_zoo import METHODS
from src.raster.raster_core import Raster
from src.raster.raster_io import to_uint8

CAPTION_H = 14
HEADER_H = 16
MIN_CELL_W = 150
MARGIN = 4


def select_patches(n_items: int, n_patches: int, seed: int) -> List[int]:
    """Детерминированный выбор n_patches индексов из n_items по seed."""
    if n_patches < 1 or n_patches > n_items:
        raise ValueError(f"Нельзя выбрать {n_patches} фрагментов из {n_items}")
    rng = np.random.default_rng(seed)
    return sorted(int(i) for i in rng.choice(n_items, size=n_patches, replace=False))


def caption(report: MetricReport, index: int) -> str:
    item = report.per_item[index]
    return f"{item.psnr_db:.2f} / {item.ssim:.3f} / {item.lpips:.3f}"


def caption_font() -> ImageFont.ImageFont:
    """Встроенный растровый шрифт; отрисовка не зависит от наличия FreeType."""
    # Pillow 10.0: load_default всегда растровый, начиная с 10.1 - предпочитает FreeType
    loader = getattr(ImageFont, "load_default_imagefont", ImageFont.load_default)
    return loader()


def render_montage(targets: Sequence[Raster], outputs: Mapping[str, Sequence[Raster]],
                   reports: Mapping[str, MetricReport], indices: Sequence[int]) -> Image.Image:
    """
    Собирает сетку len(indices) x (1 + число методов).

    Подписи берутся из отчетов метрик, т.е. совпадают со значениями оценки.
    """
    methods = list(outputs)
    cell_h = max(targets[i].height for i in indices)
    cell_w = max(MIN_CELL_W, max(targets[i].width for i in indices))
    n_cols = 1 + len(methods)
    width = MARGIN + n_cols * (cell_w + MARGIN)
    height = HEADER_H + len(indices) * (cell_h + CAPTION_H + MARGIN) + MARGIN

    canvas = Image.new("RGB", (width, height), (255, 255, 255))
    draw = ImageDraw.Draw(canvas)
    font = caption_font()
    titles = ["GT"] + [METHODS[m].title for m in methods]
    for c, title in enumerate(titles):
        draw.text((MARGIN + c * (cell_w + MARGIN), 2), title, fill=(0, 0, 0), font=font)

    for r, index in enumerate(indices):
        y = HEADER_H + r * (cell_h + CAPTION_H + MARGIN)
        cells = [(targets[index], "PSNR / SSIM / LPIPS")]
        cells += [(outputs[m][index], caption(reports[m], index)) for m in methods]
        for c, (raster, text) in enumerate(cells):
            x = MARGIN + c * (cell_w + MARGIN)
            canvas.paste(Image.fromarray(to_uint8(raster)), (x, y))
            draw.text((x, y + cell_h + 1), text, fill=(0, 0, 0), font=font)
    return canvas


def write_montage(path: str, image: Image.Image) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    image.save(path, format="PNG")
    logging.info(f"Сравнительная сетка сохранена: {path} ({image.width}x{image.height})")
