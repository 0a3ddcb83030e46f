"""
Конфигурация запусков srforge.

JSON-файл конфигурации состоит из разделов "dataset", "schedule", "loss",
"model", "eval", "infer" и ключа "seed". Значения по умолчанию соответствуют
полномасштабному обучению; флаги CLI имеют приоритет над файлом.
"""

import hashlib
import json
import logging
import os
from dataclasses import asdict, dataclass, field, fields, replace
from typing import Any, Dict, Optional, Tuple

import torch
from typing_extensions import Literal

from src.errors import ConfigError
from src.training.losses import LossWeights
from src.training.schedule import ScheduleSpec

THREADS_ENV = "SRFORGE_THREADS"
DEFAULT_SEED = 42

__all__ = ["DatasetConfig", "ModelConfig", "EvalConfig", "InferConfig", "RunConfig",
           "ScheduleSpec", "LossWeights", "load_config", "config_hash", "configure_threads"]


@dataclass(frozen=True)
class DatasetConfig:
    """
    Параметры сборки набора пар.

    Args:
        lr_patch: Сторона LR-фрагмента, пиксели (96 при 10 м)
        scale: Масштаб увеличения; HR-фрагмент имеет сторону lr_patch * scale
        stride: Шаг сетки фрагментов в пикселях LR (равен lr_patch - без перекрытия)
        lr_gsd: GSD LR-снимков, м
        hr_gsd: Целевой GSD HR после предобработки, м
        normalize_mode: Режим нормализации тайлов
        histogram_bins: Число бинов для сопоставления гистограмм
        ssim_min: Порог SSIM фильтра качества (значение на пороге сохраняется)
        psnr_min: Порог PSNR фильтра качества, дБ
        fractions: Доли train/validation/test
        export_png: Число пар для экспорта в PNG для визуального контроля
    """

    lr_patch: int = 96
    scale: int = 2
    stride: int = 96
    lr_gsd: float = 10.0
    hr_gsd: float = 5.0
    normalize_mode: Literal["fixed-range", "per-image-minmax"] = "fixed-range"
    histogram_bins: int = 256
    ssim_min: float = 0.45
    psnr_min: float = 21.0
    fractions: Tuple[float, float, float] = (0.72, 0.18, 0.10)
    export_png: int = 0

    def __post_init__(self):
        object.__setattr__(self, "fractions", tuple(float(f) for f in self.fractions))
        for name in ("lr_patch", "scale", "stride", "histogram_bins"):
            if getattr(self, name) < 1:
                raise ConfigError(f"значение должно быть >= 1, получено {getattr(self, name)}", field=name)
        if self.lr_gsd <= 0 or self.hr_gsd <= 0:
            raise ConfigError("GSD должен быть положительным", field="lr_gsd" if self.lr_gsd <= 0 else "hr_gsd")
        if self.normalize_mode not in ("fixed-range", "per-image-minmax"):
            raise ConfigError(f"неизвестный режим {self.normalize_mode}", field="normalize_mode")
        if len(self.fractions) != 3 or any(f < 0 for f in self.fractions):
            raise ConfigError(f"ожидаются три неотрицательные доли, получено {self.fractions}",
                              field="fractions")
        if abs(sum(self.fractions) - 1.0) > 1e-9:
            raise ConfigError(f"сумма долей {sum(self.fractions)} не равна 1", field="fractions")
        if self.export_png < 0:
            raise ConfigError("export_png < 0", field="export_png")

    @property
    def hr_patch(self) -> int:
        return self.lr_patch * self.scale

    @property
    def hr_stride(self) -> int:
        return self.stride * self.scale


@dataclass(frozen=True)
class ModelConfig:
    """Размеры архитектур; уменьшаются для обучения в масштабе рабочей станции."""

    channels: int = 64
    n_rrdb: int = 4
    n_ub: int = 1
    n_resblocks: int = 16
    disc_channels: int = 64

    def __post_init__(self):
        for f in fields(self):
            if getattr(self, f.name) < 1:
                raise ConfigError(f"значение должно быть >= 1, получено {getattr(self, f.name)}", field=f.name)


@dataclass(frozen=True)
class EvalConfig:
    ssim_window: int = 11
    ssim_sigma: float = 1.5
    with_lpips: bool = True
    batch_size: int = 8


@dataclass(frozen=True)
class InferConfig:
    tile: int = 96
    overlap: int = 8

    def __post_init__(self):
        if self.tile < 1:
            raise ConfigError(f"tile < 1: {self.tile}", field="tile")
        if self.overlap < 0 or 2 * self.overlap >= self.tile:
            raise ConfigError(f"overlap {self.overlap} несовместим с tile {self.tile}", field="overlap")


@dataclass(frozen=True)
class RunConfig:
    dataset: DatasetConfig = field(default_factory=DatasetConfig)
    schedule: ScheduleSpec = field(default_factory=ScheduleSpec)
    loss: LossWeights = field(default_factory=LossWeights)
    model: ModelConfig = field(default_factory=ModelConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)
    infer: InferConfig = field(default_factory=InferConfig)
    seed: int = DEFAULT_SEED

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    def with_overrides(self, section: str, **values: Any) -> "RunConfig":
        """Копия конфигурации с замененными полями раздела (значения None игнорируются)."""
        values = {k: v for k, v in values.items() if v is not None}
        if not values:
            return self
        return replace(self, **{section: replace(getattr(self, section), **values)})


_SECTIONS = {
    "dataset": DatasetConfig,
    "schedule": ScheduleSpec,
    "loss": LossWeights,
    "model": ModelConfig,
    "eval": EvalConfig,
    "infer": InferConfig,
}


def _find_line(text: str, key: str) -> Optional[int]:
    needle = f'"{key}"'
    for number, line in enumerate(text.splitlines(), start=1):
        if needle in line:
            return number
    return None


def _coerce(value: Any, default: Any, name: str, line: Optional[int]) -> Any:
    """Приводит значение JSON к типу значения по умолчанию."""
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"ожидается логическое значение, получено {value!r}", field=name, line=line)
        return value
    if isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"ожидается целое число, получено {value!r}", field=name, line=line)
        return value
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"ожидается число, получено {value!r}", field=name, line=line)
        return float(value)
    if isinstance(default, str):
        if not isinstance(value, str):
            raise ConfigError(f"ожидается строка, получено {value!r}", field=name, line=line)
        return value
    if isinstance(default, tuple):
        if not isinstance(value, list) or not all(
                isinstance(v, (int, float)) and not isinstance(v, bool) for v in value):
            raise ConfigError(f"ожидается список чисел, получено {value!r}", field=name, line=line)
        return tuple(float(v) for v in value)
    return value


def _build_section(cls, data: Any, section: str, text: str):
    if not isinstance(data, dict):
        raise ConfigError("раздел должен быть объектом JSON", field=section, line=_find_line(text, section))
    defaults = cls()
    known = {f.name for f in fields(cls)}
    values = {}
    for key, value in data.items():
        line = _find_line(text, key)
        if key not in known:
            raise ConfigError(f"неизвестный ключ раздела '{section}'", field=f"{section}.{key}", line=line)
        values[key] = _coerce(value, getattr(defaults, key), f"{section}.{key}", line)
    try:
        return cls(**values)
    except ConfigError as e:
        name = f"{section}.{e.field}" if e.field else section
        raise ConfigError(e.detail, field=name, line=_find_line(text, e.field or section))


def parse_config(text: str) -> RunConfig:
    """Разбирает текст JSON-конфигурации с диагностикой по полю и строке."""
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"некорректный JSON: {e.msg}", line=e.lineno)
    if not isinstance(data, dict):
        raise ConfigError("корень конфигурации должен быть объектом JSON", line=1)

    sections: Dict[str, Any] = {}
    seed = DEFAULT_SEED
    for key, value in data.items():
        if key == "seed":
            seed = _coerce(value, DEFAULT_SEED, "seed", _find_line(text, "seed"))
        elif key in _SECTIONS:
            sections[key] = _build_section(_SECTIONS[key], value, key, text)
        else:
            raise ConfigError("неизвестный раздел конфигурации", field=key, line=_find_line(text, key))
    return RunConfig(seed=seed, **sections)


def load_config(path: Optional[str]) -> RunConfig:
    """Загружает конфигурацию из файла; без пути возвращает значения по умолчанию."""
    if not path:
        return RunConfig()
    try:
        with open(path, "r", encoding="utf-8") as f:
            text = f.read()
    except OSError as e:
        raise ConfigError(f"не удалось прочитать {path}: {e}")
    config = parse_config(text)
    logging.info(f"Конфигурация загружена из {path}")
    return config


def config_hash(data: Dict[str, Any]) -> str:
    """SHA-256 канонического JSON (ключи отсортированы, без пробелов)."""
    canonical = json.dumps(data, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def configure_threads() -> int:
    """Ограничивает число потоков torch и пулов значением SRFORGE_THREADS."""
    raw = os.environ.get(THREADS_ENV)
    if raw is None:
        return max(1, os.cpu_count() or 1)
    try:
        threads = int(raw)
    except ValueError:
        raise ConfigError(f"ожидается целое число, получено {raw!r}", field=THREADS_ENV)
    if threads < 1:
        raise ConfigError(f"значение должно быть >= 1, получено {threads}", field=THREADS_ENV)
    torch.set_num_threads(threads)
    logging.debug(f"Число потоков ограничено: {threads}")
    return threads
