"""
Сравнение методов на тестовой части: SR-результаты, метрики по элементам,
агрегаты и таблица со столбцами среднего и медианы для каждого метода.
"""

import json
import logging
from collections import OrderedDict
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Tuple

import numpy as np
import torch
from torch import nn

from src.config import EvalConfig
from src.dataset.patch_dataset import PatchPairDataset
from src.errors import DatasetError
from src.metrics.iq_metrics import FeatureExtractor, SsimParams, score_pairs
from src.metrics.metric_report import METRIC_NAMES, ItemMetrics, MetricReport, aggregate
from src.models.model_zoo import METHODS, ModelSpec, load_model, super_resolve
from src.raster.raster_core import Raster, bicubic_resample

METRIC_TITLES = {"psnr": "PSNR, дБ", "ssim": "SSIM", "lpips": "LPIPS"}
TABLE_FILE = "table.txt"


def method_order(names) -> List[str]:
    """Методы в порядке таблицы: Bicubic, SRCNN, SRResNet, ESRGAN, Real-ESRGAN."""
    order = list(METHODS)
    unknown = [n for n in names if n not in METHODS]
    if unknown:
        raise ValueError(f"Неизвестные методы: {unknown}; доступны {order}")
    return [n for n in order if n in names]


def bicubic_outputs(dataset: PatchPairDataset) -> List[Raster]:
    outputs = []
    for lr, hr in zip(dataset.lr_rasters, dataset.hr_rasters):
        up = bicubic_resample(lr, hr.width, hr.height)
        outputs.append(up.with_data(np.clip(up.data, 0.0, 1.0)))
    return outputs


@torch.no_grad()
def model_outputs(model: nn.Module, spec: ModelSpec, dataset: PatchPairDataset,
                  batch_size: int = 8) -> List[Raster]:
    """SR-результаты модели в режиме оценки (выход ограничен [0, 1])."""
    model.eval()
    outputs = []
    for start in range(0, len(dataset), batch_size):
        indices = range(start, min(start + batch_size, len(dataset)))
        batch = torch.stack([dataset[i][0] for i in indices])
        pred = super_resolve(model, spec, batch).double().numpy()
        for k, i in enumerate(indices):
            outputs.append(dataset.hr_rasters[i].with_data(pred[k], metadata={}))
    return outputs


def method_outputs(method: str, checkpoint: Optional[str], dataset: PatchPairDataset,
                   cfg: EvalConfig) -> List[Raster]:
    if method == "bicubic":
        return bicubic_outputs(dataset)
    if checkpoint is None:
        raise ValueError(f"Для метода {method} не указана контрольная точка")
    model, spec, _ = load_model(checkpoint)
    return model_outputs(model, spec, dataset, cfg.batch_size)


def report_for(method: str, outputs: List[Raster], dataset: PatchPairDataset, cfg: EvalConfig,
               extractor: Optional[FeatureExtractor] = None) -> MetricReport:
    params = SsimParams(window=cfg.ssim_window, sigma=cfg.ssim_sigma)
    scores = score_pairs(outputs, dataset.hr_rasters, extractor, params, with_lpips=cfg.with_lpips)
    items = [ItemMetrics(item_id, s["psnr"], s["ssim"], s["lpips"])
             for item_id, s in zip(dataset.item_ids, scores)]
    return aggregate(items, method=METHODS[method].title)


def evaluate_methods(dataset: PatchPairDataset, checkpoints: Mapping[str, str],
                     cfg: Optional[EvalConfig] = None,
                     extractor: Optional[FeatureExtractor] = None
                     ) -> Tuple["OrderedDict[str, MetricReport]", Dict[str, List[Raster]]]:
    """
    Метрики всех методов; Bicubic включается всегда.

    Returns:
        (отчеты по методам в порядке таблицы, SR-результаты по методам)
    """
    cfg = cfg or EvalConfig()
    if len(dataset) == 0:
        raise DatasetError("Пустая тестовая выборка")
    names = method_order(set(checkpoints) | {"bicubic"})
    reports: "OrderedDict[str, MetricReport]" = OrderedDict()
    outputs: Dict[str, List[Raster]] = {}
    logging.info("=" * 50)
    for name in names:
        outputs[name] = method_outputs(name, checkpoints.get(name), dataset, cfg)
        reports[name] = report_for(name, outputs[name], dataset, cfg, extractor)
        psnr_agg = reports[name].aggregates["psnr"]
        logging.info(f"{METHODS[name].title}: PSNR mean={psnr_agg['mean']:.3f}, median={psnr_agg['median']:.3f}")
    logging.info("=" * 50)
    return reports, outputs


def format_table(reports: Mapping[str, MetricReport]) -> str:
    """
    Текстовая таблица: строки - метрики, столбцы - методы с парами
    (среднее, медиана).
    """
    label_w, cell_w = 10, 9
    methods = list(reports)
    top = " " * label_w + "".join(f"{reports[m].method:^{2 * cell_w}}" for m in methods)
    sub = " " * label_w + "".join(f"{'mean':>{cell_w}}{'median':>{cell_w}}" for _ in methods)
    lines = [top.rstrip(), sub]
    for metric in METRIC_NAMES:
        row = f"{METRIC_TITLES[metric]:<{label_w}}"
        for m in methods:
            agg = reports[m].aggregates[metric]
            row += f"{agg['mean']:>{cell_w}.3f}{agg['median']:>{cell_w}.3f}"
        lines.append(row)
    return "\n".join(lines)


def write_reports(reports: Mapping[str, MetricReport], out_dir: str, seed: int) -> str:
    """Пишет CSV/JSON по каждому методу, сводный JSON и текстовую таблицу."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for name, report in reports.items():
        report.write_csv(str(out / f"{name}.csv"))
        report.write_json(str(out / f"{name}.json"))
    combined = {"seed": seed, "methods": list(reports),
                "aggregates": {name: r.aggregates_json() for name, r in reports.items()}}
    with open(out / "evaluation.json", "w", encoding="utf-8") as f:
        json.dump(combined, f, indent=2, sort_keys=True, allow_nan=False)
    table = format_table(reports)
    with open(out / TABLE_FILE, "w", encoding="utf-8") as f:
        f.write(table + "\n")
    return table
