"""
Иерархия исключений srforge.

Каждое исключение знает стадию конвейера, на которой оно возникло,
чтобы CLI мог вывести однострочную диагностику вида
``srforge: error: stage=<стадия>: <сообщение>``.
"""

from typing import Optional


class SrForgeError(Exception):
    """Базовое исключение проекта."""

    stage = "general"

    def __init__(self, message: str, stage: Optional[str] = None):
        super().__init__(message)
        if stage is not None:
            self.stage = stage


class RasterFormatError(SrForgeError, ValueError):
    """Некорректный растр, sidecar-файл или полезная нагрузка."""

    stage = "ingest"


class ShapeMismatchError(SrForgeError, ValueError):
    """Несовместимые размеры растров или тензоров."""

    stage = "shape"


class EmptyOverlapError(SrForgeError, ValueError):
    """Пустое пересечение охватов двух растров."""

    stage = "register"


class ConfigError(SrForgeError, ValueError):
    """Ошибка конфигурации с указанием поля и строки JSON."""

    stage = "config"

    def __init__(self, message: str, field: Optional[str] = None, line: Optional[int] = None):
        location = ""
        if field is not None:
            location += f"поле '{field}'"
        if line is not None:
            location += f" (строка {line})"
        super().__init__(f"{location.strip()}: {message}" if location else message)
        self.detail = message
        self.field = field
        self.line = line


class DatasetError(SrForgeError, ValueError):
    """Ошибка сборки или чтения набора данных."""

    stage = "dataset"


class DivergenceError(SrForgeError, RuntimeError):
    """Нечисловое значение потерь или градиента во время обучения."""

    stage = "train"

    def __init__(self, message: str, name: Optional[str] = None):
        super().__init__(message)
        self.name = name
