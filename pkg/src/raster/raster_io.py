"""
Чтение и запись растров: контейнер SRRAS v1 и 8-битный PNG.

SRRAS v1 - это пара файлов: JSON sidecar с описанием сетки и сырой
little-endian float32 payload в порядке band-sequential row-major.
PNG поддерживается только для визуализации (с потерей до 8 бит).
"""

import hashlib
import json
import logging
import os
from pathlib import Path
from typing import Any, Dict, Optional, Tuple

import numpy as np
from PIL import Image

from src.errors import RasterFormatError
from src.geo.geo_register import GeoAnchor
from src.raster.raster_core import Raster

SRRAS_FORMAT = "SRRAS"
SRRAS_VERSION = 1
SRRAS_LAYOUT = "band-sequential row-major"
PAYLOAD_SUFFIX = ".bin"


def _payload_path(sidecar: Path) -> Path:
    return sidecar.with_suffix(PAYLOAD_SUFFIX)


def sha256_file(path: str) -> str:
    """Контрольная сумма файла для манифестов."""
    digest = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def write_srras(path: str, raster: Raster, anchor: Optional[GeoAnchor] = None) -> str:
    """
    Сохраняет растр в формате SRRAS v1.

    Args:
        path: Путь к sidecar-файлу (.json); payload пишется рядом с суффиксом .bin
        raster: Растр для сохранения
        anchor: Географическая привязка (ключ "geo" в sidecar)

    Returns:
        Контрольная сумма payload
    """
    sidecar = Path(path)
    sidecar.parent.mkdir(parents=True, exist_ok=True)
    payload = _payload_path(sidecar)

    header: Dict[str, Any] = {
        "format": SRRAS_FORMAT,
        "version": SRRAS_VERSION,
        "width": raster.width,
        "height": raster.height,
        "bands": raster.bands,
        "gsd_m": raster.gsd,
        "bit_depth": raster.nominal_bit_depth,
        "dtype": "f32",
        "byte_order": "LE",
        "layout": SRRAS_LAYOUT,
        "payload": payload.name,
    }
    if anchor is not None:
        header["geo"] = anchor.to_dict()

    payload.write_bytes(raster.data.astype("<f4").tobytes())
    with open(sidecar, "w", encoding="utf-8") as f:
        json.dump(header, f, indent=2, sort_keys=True)
    return sha256_file(str(payload))


def _anchor_from(meta: Dict[str, Any], path: str) -> Optional[GeoAnchor]:
    if "geo" not in meta:
        return None
    if not isinstance(meta["geo"], dict):
        raise RasterFormatError(f"Ключ \"geo\" в {path} должен быть объектом")
    try:
        return GeoAnchor.from_dict(meta["geo"])
    except ValueError as e:
        raise RasterFormatError(f"{path}: {e}")


def read_srras(path: str) -> Tuple[Raster, Optional[GeoAnchor], str]:
    """
    Загружает растр SRRAS v1 с проверкой sidecar и размера payload.

    Returns:
        Кортеж (растр, привязка или None, контрольная сумма payload)
    """
    sidecar = Path(path)
    try:
        with open(sidecar, "r", encoding="utf-8") as f:
            header = json.load(f)
    except json.JSONDecodeError as e:
        raise RasterFormatError(f"Некорректный sidecar {path}: строка {e.lineno}: {e.msg}")
    except OSError as e:
        raise RasterFormatError(f"Не удалось прочитать sidecar {path}: {e}")
    if not isinstance(header, dict):
        raise RasterFormatError(f"Sidecar {path} должен быть JSON-объектом")

    if header.get("format") != SRRAS_FORMAT or header.get("version") != SRRAS_VERSION:
        raise RasterFormatError(f"Неподдерживаемый формат в {path}: "
                                f"{header.get('format')} v{header.get('version')}")
    for key in ("width", "height", "bands"):
        if not isinstance(header.get(key), int) or header[key] < 1:
            raise RasterFormatError(f"Некорректное поле '{key}' в {path}: {header.get(key)}")
    if header.get("dtype") != "f32" or header.get("byte_order") != "LE":
        raise RasterFormatError(
            f"Поддерживается только f32/LE, получено {header.get('dtype')}/{header.get('byte_order')}")
    if header.get("layout", SRRAS_LAYOUT) != SRRAS_LAYOUT:
        raise RasterFormatError(f"Неподдерживаемая раскладка: {header.get('layout')}")

    payload = sidecar.parent / header.get("payload", _payload_path(sidecar).name)
    if not payload.exists():
        raise RasterFormatError(f"Не найден payload: {payload}")
    raw = payload.read_bytes()
    shape = (header["bands"], header["height"], header["width"])
    expected = int(np.prod(shape)) * 4
    if len(raw) != expected:
        raise RasterFormatError(
            f"Размер payload {len(raw)} байт не соответствует {shape} (ожидается {expected})")

    data = np.frombuffer(raw, dtype="<f4").reshape(shape)
    raster = Raster(data=data.astype(np.float64),
                    gsd=header.get("gsd_m"),
                    nominal_bit_depth=header.get("bit_depth", 8))
    anchor = _anchor_from(header, path)
    return raster, anchor, hashlib.sha256(raw).hexdigest()


def read_png(path: str, sidecar: Optional[str] = None) -> Tuple[Raster, Optional[GeoAnchor], str]:
    """
    Импорт 8-битного PNG; значения приводятся к k/255.

    Необязательный JSON sidecar может задать gsd_m и ключ "geo".
    """
    try:
        with Image.open(path) as img:
            array = np.asarray(img.convert("RGB"), dtype=np.float64)
    except OSError as e:
        raise RasterFormatError(f"Не удалось прочитать PNG {path}: {e}")

    gsd, anchor = None, None
    if sidecar and os.path.exists(sidecar):
        try:
            with open(sidecar, "r", encoding="utf-8") as f:
                meta = json.load(f)
        except json.JSONDecodeError as e:
            raise RasterFormatError(f"Некорректный sidecar {sidecar}: строка {e.lineno}: {e.msg}")
        if not isinstance(meta, dict):
            raise RasterFormatError(f"Sidecar {sidecar} должен быть JSON-объектом")
        gsd = meta.get("gsd_m")
        anchor = _anchor_from(meta, sidecar)

    raster = Raster(data=np.transpose(array, (2, 0, 1)) / 255.0, gsd=gsd, nominal_bit_depth=8)
    return raster, anchor, sha256_file(path)


def to_uint8(raster: Raster) -> np.ndarray:
    """Перевод растра [0, 1] в массив (H, W, 3) uint8 для визуализации."""
    data = raster.data
    if raster.bands == 1:
        data = np.repeat(data, 3, axis=0)
    clipped = np.clip(data[:3], 0.0, 1.0)
    return np.round(np.transpose(clipped, (1, 2, 0)) * 255.0).astype(np.uint8)


def write_png(path: str, raster: Raster) -> None:
    """Экспорт растра в 8-битный PNG (только для визуализации)."""
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(to_uint8(raster)).save(path, format="PNG")
    logging.debug(f"PNG сохранен: {path}")


def read_raster(path: str, fmt: Optional[str] = None) -> Tuple[Raster, Optional[GeoAnchor], str]:
    """
    Универсальная загрузка растра по формату или расширению файла.

    Args:
        path: Путь к sidecar SRRAS (.json) или PNG
        fmt: Явный формат ("srras" или "png")
    """
    fmt = (fmt or ("png" if path.lower().endswith(".png") else "srras")).lower()
    if fmt == "srras":
        return read_srras(path)
    if fmt == "png":
        return read_png(path, sidecar=str(Path(path).with_suffix(".json")))
    raise RasterFormatError(f"Неизвестный формат растра: {fmt}")
