"""
Формат весов SRWT v1.

Структура: магические байты "SRWT", версия u32, число записей u32, далее
для каждой записи: длина имени u32 + имя в UTF-8, код типа u8, ранг u32,
размерности u32 и сырые little-endian значения. Все целые - little-endian.
"""

import logging
import struct
from collections import OrderedDict
from pathlib import Path
from typing import BinaryIO, Dict, Mapping

import numpy as np
import torch

from src.errors import RasterFormatError

MAGIC = b"SRWT"
VERSION = 1

DTYPE_CODES = {
    0: ("<f4", torch.float32),
    1: ("<f8", torch.float64),
    2: ("<i8", torch.int64),
}
_CODE_BY_TORCH = {torch_dtype: code for code, (_, torch_dtype) in DTYPE_CODES.items()}


class WeightsFormatError(RasterFormatError):
    stage = "weights"


def _read_exact(f: BinaryIO, n: int) -> bytes:
    data = f.read(n)
    if len(data) != n:
        raise WeightsFormatError(f"Файл весов обрывается: ожидалось {n} байт, прочитано {len(data)}")
    return data


def save_srwt(path: str, tensors: Mapping[str, torch.Tensor]) -> None:
    """Сохраняет именованные тензоры (например, state_dict модели)."""
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<II", VERSION, len(tensors)))
        for name, tensor in tensors.items():
            tensor = tensor.detach().cpu()
            if tensor.dtype not in _CODE_BY_TORCH:
                raise WeightsFormatError(f"Неподдерживаемый тип {tensor.dtype} у '{name}'")
            code = _CODE_BY_TORCH[tensor.dtype]
            encoded = name.encode("utf-8")
            f.write(struct.pack("<I", len(encoded)))
            f.write(encoded)
            f.write(struct.pack("<BI", code, tensor.dim()))
            f.write(struct.pack(f"<{tensor.dim()}I", *tensor.shape))
            f.write(tensor.numpy().astype(DTYPE_CODES[code][0], copy=False).tobytes())
    logging.debug(f"Сохранено {len(tensors)} тензоров в {path}")


def load_srwt(path: str) -> Dict[str, torch.Tensor]:
    """Загружает именованные тензоры из файла SRWT v1."""
    tensors: Dict[str, torch.Tensor] = OrderedDict()
    with open(path, "rb") as f:
        if _read_exact(f, 4) != MAGIC:
            raise WeightsFormatError(f"{path}: не файл SRWT")
        version, count = struct.unpack("<II", _read_exact(f, 8))
        if version != VERSION:
            raise WeightsFormatError(f"{path}: неподдерживаемая версия SRWT {version}")
        for _ in range(count):
            (name_len,) = struct.unpack("<I", _read_exact(f, 4))
            name = _read_exact(f, name_len).decode("utf-8")
            code, rank = struct.unpack("<BI", _read_exact(f, 5))
            if code not in DTYPE_CODES:
                raise WeightsFormatError(f"{path}: неизвестный код типа {code} у '{name}'")
            dims = struct.unpack(f"<{rank}I", _read_exact(f, 4 * rank))
            np_dtype, _ = DTYPE_CODES[code]
            n_bytes = int(np.prod(dims, dtype=np.int64)) * np.dtype(np_dtype).itemsize
            array = np.frombuffer(_read_exact(f, n_bytes), dtype=np_dtype).reshape(dims)
            tensors[name] = torch.from_numpy(array.copy())
        if f.read(1):
            raise WeightsFormatError(f"{path}: лишние данные после {count} записей")
    return tensors
