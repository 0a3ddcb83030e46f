"""
Отчет по метрикам: значения по элементам и агрегаты (среднее, медиана).
"""

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Sequence

import numpy as np

METRIC_NAMES = ("psnr", "ssim", "lpips")


@dataclass(frozen=True)
class ItemMetrics:
    item_id: str
    psnr_db: float
    ssim: float
    lpips: float

    def value(self, metric: str) -> float:
        return {"psnr": self.psnr_db, "ssim": self.ssim, "lpips": self.lpips}[metric]


@dataclass
class MetricReport:
    """
    Метрики по элементам тестовой выборки и их агрегаты.

    aggregates[metric] = {"mean": ..., "median": ..., "count": ...};
    для PSNR дополнительно "inf_count" - число исключенных бесконечных значений.
    """

    per_item: List[ItemMetrics]
    aggregates: Dict[str, Dict[str, float]] = field(default_factory=dict)
    method: str = ""

    def aggregates_json(self) -> Dict[str, Dict[str, Any]]:
        """Агрегаты в виде, допустимом для строгого JSON."""
        return {metric: {k: _json_float(v) for k, v in entry.items()}
                for metric, entry in self.aggregates.items()}

    def to_dict(self) -> Dict[str, Any]:
        items = [{k: _json_float(v) for k, v in asdict(item).items()} for item in self.per_item]
        return {"method": self.method, "aggregates": self.aggregates_json(), "per_item": items}

    def write_json(self, path: str) -> None:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8") as f:
            json.dump(self.to_dict(), f, indent=2, sort_keys=True, allow_nan=False)

    def write_csv(self, path: str) -> None:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(["item_id", "psnr", "ssim", "lpips"])
            for item in self.per_item:
                writer.writerow([item.item_id, _json_float(item.psnr_db),
                                 repr(item.ssim), repr(item.lpips)])


def _json_float(value: Any) -> Any:
    # бесконечность сериализуется строкой "inf", NaN (метрика не вычислялась) - null
    if not isinstance(value, float):
        return value
    if math.isnan(value):
        return None
    if math.isinf(value):
        return "inf" if value > 0 else "-inf"
    return value


def aggregate(items: Sequence[ItemMetrics], method: str = "") -> MetricReport:
    """
    Среднее и медиана по каждой метрике.

    Элементы с бесконечным PSNR исключаются из агрегатов PSNR (и среднего,
    и медианы), их число сохраняется в "inf_count". Медиана при четном
    числе элементов - среднее двух центральных значений.
    """
    if not items:
        raise ValueError("Пустой список метрик для агрегации")

    aggregates: Dict[str, Dict[str, float]] = {}
    for metric in METRIC_NAMES:
        values = np.array([item.value(metric) for item in items], dtype=np.float64)
        entry: Dict[str, float] = {}
        if metric == "psnr":
            finite = values[np.isfinite(values)]
            entry["inf_count"] = int(len(values) - len(finite))
            values = finite
        if len(values) == 0:
            entry.update(mean=float("inf"), median=float("inf"), count=0)
        else:
            entry.update(mean=float(np.mean(values)), median=float(np.median(values)),
                         count=int(len(values)))
        aggregates[metric] = entry
    return MetricReport(per_item=list(items), aggregates=aggregates, method=method)
