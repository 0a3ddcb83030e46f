"""
Файл сопоставления тайлов: JSON-список пар (HR-ортофото, LR-снимок) по
участкам интереса с датами съемки и ручными примечаниями.
"""

import json
from dataclasses import asdict, dataclass
from datetime import date
from pathlib import Path
from typing import Any, Dict, List, Optional

from src.errors import ConfigError, DatasetError

REQUIRED_FIELDS = ("aoi_id", "hr_path", "lr_path", "hr_capture_date", "lr_capture_date")


@dataclass(frozen=True)
class TilePairingEntry:
    """
    Пара тайлов одного участка.

    Args:
        aoi_id: Идентификатор участка интереса
        hr_path: Путь к HR-ортофото (sidecar SRRAS или PNG)
        lr_path: Путь к LR-снимку
        hr_capture_date: Дата съемки HR, ISO YYYY-MM-DD
        lr_capture_date: Дата съемки LR, ISO YYYY-MM-DD
        notes: Ручные замечания о временном согласовании
        cloud_note: Примечание об облачности (отбор облачности выполняется до пайплайна)
        format: Формат файлов ("srras" или "png"); по умолчанию по расширению
        transform: Описание преобразования СК HR -> СК LR, если они различаются
    """

    aoi_id: str
    hr_path: str
    lr_path: str
    hr_capture_date: str
    lr_capture_date: str
    notes: str = ""
    cloud_note: str = ""
    format: Optional[str] = None
    transform: Optional[Dict[str, Any]] = None

    def __post_init__(self):
        for name in ("hr_capture_date", "lr_capture_date"):
            try:
                date.fromisoformat(getattr(self, name))
            except (TypeError, ValueError):
                raise ConfigError(f"дата не в формате YYYY-MM-DD: {getattr(self, name)!r}",
                                  field=f"{self.aoi_id}.{name}")

    @property
    def date_difference_days(self) -> int:
        """Модуль разницы дат съемки, дни."""
        return abs((date.fromisoformat(self.hr_capture_date)
                    - date.fromisoformat(self.lr_capture_date)).days)

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


def load_pairing_file(path: str) -> List[TilePairingEntry]:
    """
    Читает файл сопоставления; относительные пути тайлов разрешаются от
    каталога файла. Пустой список - ошибка.
    """
    base = Path(path).parent
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = json.load(f)
    except json.JSONDecodeError as e:
        raise ConfigError(f"некорректный JSON: {e.msg}", field="pairing", line=e.lineno)
    except OSError as e:
        raise DatasetError(f"Не удалось прочитать файл сопоставления {path}: {e}")

    if not isinstance(data, list):
        raise DatasetError(f"Файл сопоставления {path} должен содержать JSON-список")
    if not data:
        raise DatasetError(f"Файл сопоставления {path} пуст")

    entries = []
    seen = set()
    for i, item in enumerate(data):
        missing = [k for k in REQUIRED_FIELDS if k not in item]
        if missing:
            raise DatasetError(f"Запись {i} файла сопоставления: нет полей {missing}")
        if item["aoi_id"] in seen:
            raise DatasetError(f"Повторный aoi_id: {item['aoi_id']}")
        seen.add(item["aoi_id"])
        item = dict(item)
        for key in ("hr_path", "lr_path"):
            p = Path(item[key])
            item[key] = str(p if p.is_absolute() else base / p)
        try:
            entries.append(TilePairingEntry(**item))
        except TypeError as e:
            raise DatasetError(f"Запись {i} файла сопоставления: {e}")
    return entries


def write_pairing_file(path: str, entries: List[TilePairingEntry]) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        json.dump([e.to_dict() for e in entries], f, indent=2, sort_keys=True)
