"""
Команды srforge: сборка набора, обучение, оценка, вывод и сравнительная сетка.

Каждая команда принимает уже разобранные аргументы и RunConfig; разбор
командной строки и обработка ошибок находятся в src/main.py.
"""

import logging
from pathlib import Path
from typing import Dict, Mapping, Optional, Tuple

import numpy as np

from src.config import RunConfig, configure_threads
from src.dataset.dataset_forge import MANIFEST_TEMPLATE, BuildSummary, build_dataset
from src.dataset.pairing import load_pairing_file
from src.dataset.patch_dataset import PatchPairDataset
from src.dataset.synthetic import write_synthetic_corpus
from src.errors import DatasetError, DivergenceError, ShapeMismatchError, SrForgeError
from src.evaluation.evaluator import evaluate_methods, write_reports
from src.evaluation.inference import infer_raster, output_anchor
from src.evaluation.montage import render_montage, select_patches, write_montage
from src.metrics.metric_report import MetricReport
from src.models.model_zoo import METHODS, MODEL_JSON, ModelSpec, build_model, load_model
from src.raster.raster_core import normalize
from src.raster.raster_io import read_raster, write_png, write_srras
from src.training.run_record import TrainRunRecord
from src.training.trainer import adversarial_train, pretrain

PHASES = ("pretrain", "gan")
SYNTHETIC_SOURCE_DIR = "source"


def cmd_build_dataset(pairing_file: Optional[str], out_dir: str, cfg: RunConfig,
                      synthetic: Optional[int] = None, synthetic_size: int = 192) -> BuildSummary:
    """
    Сборка набора пар по файлу сопоставления тайлов.

    При synthetic = N сначала генерируется синтетический корпус из N пар
    тайлов в out_dir/source, и набор собирается по нему.
    """
    if synthetic is not None:
        pairing_file = write_synthetic_corpus(str(Path(out_dir) / SYNTHETIC_SOURCE_DIR), synthetic,
                                              lr_size=synthetic_size, seed=cfg.seed,
                                              scale=cfg.dataset.scale)
    if not pairing_file:
        raise DatasetError("Не указан файл сопоставления тайлов")
    entries = load_pairing_file(pairing_file)
    summary = build_dataset(entries, out_dir, cfg.dataset, seed=cfg.seed, workers=configure_threads())
    print(summary.format_table())
    return summary


def generator_spec(method: str, cfg: RunConfig) -> ModelSpec:
    m = cfg.model
    return ModelSpec(kind=METHODS[method].generator, scale=cfg.dataset.scale, n_rrdb=m.n_rrdb,
                     n_ub=m.n_ub, channels=m.channels, n_resblocks=m.n_resblocks, seed=cfg.seed)


def discriminator_spec(method: str, cfg: RunConfig) -> ModelSpec:
    return ModelSpec(kind=METHODS[method].discriminator, channels=cfg.model.disc_channels,
                     input_size=cfg.dataset.hr_patch, seed=cfg.seed)


def _load_split(manifest_dir: str, split: str) -> PatchPairDataset:
    path = Path(manifest_dir) / MANIFEST_TEMPLATE.format(split=split)
    if not path.exists():
        raise DatasetError(f"Не найден манифест {path}")
    return PatchPairDataset.from_manifest(str(path))


def cmd_train(manifest_dir: str, method: str, phase: str, out_dir: str, cfg: RunConfig,
              pretrain_checkpoint: Optional[str] = None) -> TrainRunRecord:
    """
    Обучение метода на манифестах train/validation.

    Фаза pretrain пишет в out_dir/<method>/pretrain, фаза gan - в
    out_dir/<method>/gan и требует контрольную точку предобучения
    (по умолчанию out_dir/<method>/pretrain/best).
    """
    if method not in METHODS or METHODS[method].generator is None:
        trainable = [name for name, m in METHODS.items() if m.generator]
        raise SrForgeError(f"Метод {method} не обучается; доступны {trainable}", stage="train")
    if phase not in PHASES:
        raise SrForgeError(f"Неизвестная фаза {phase}; ожидается одна из {PHASES}", stage="train")
    train_set = _load_split(manifest_dir, "train")
    val_set = _load_split(manifest_dir, "validation")
    run_dir = Path(out_dir) / method / phase

    if phase == "pretrain":
        spec = generator_spec(method, cfg)
        record = pretrain(build_model(spec), spec, train_set, val_set, cfg.schedule,
                          seed=cfg.seed, out_dir=str(run_dir), method=method)
    else:
        if METHODS[method].discriminator is None:
            raise SrForgeError(f"Для метода {method} не предусмотрена состязательная фаза", stage="train")
        ckpt = Path(pretrain_checkpoint or Path(out_dir) / method / "pretrain" / "best")
        if not (ckpt / MODEL_JSON).exists():
            raise SrForgeError(f"Фаза gan требует контрольную точку предобучения: {ckpt} не найдена",
                               stage="train")
        generator, spec, _ = load_model(str(ckpt))
        if spec.kind != METHODS[method].generator:
            raise SrForgeError(f"Контрольная точка {ckpt} содержит {spec.kind}, "
                               f"ожидается {METHODS[method].generator}", stage="train")
        d_spec = discriminator_spec(method, cfg)
        backbone = None
        if cfg.loss.uses_perceptual:
            backbone = build_model(ModelSpec(kind="feature_backbone", channels=cfg.model.channels,
                                             seed=cfg.seed))
            backbone.freeze()
        record = adversarial_train(generator, spec, build_model(d_spec), d_spec, backbone,
                                   train_set, val_set, cfg.loss, cfg.schedule,
                                   seed=cfg.seed, out_dir=str(run_dir), method=method)

    if record.status == "diverged":
        raise DivergenceError(f"Обучение {method} ({phase}) разошлось: {record.error}")
    logging.info(f"Итог обучения: {record.summary()}")
    return record


def cmd_evaluate(manifest: str, checkpoints: Mapping[str, str], out_dir: str,
                 cfg: RunConfig) -> Tuple[Dict[str, MetricReport], str]:
    """Оценка методов на тестовом манифесте; Bicubic включается всегда."""
    dataset = PatchPairDataset.from_manifest(manifest)
    reports, _ = evaluate_methods(dataset, checkpoints, cfg.eval)
    table = write_reports(reports, out_dir, cfg.seed)
    print(table)
    return reports, table


def cmd_infer(checkpoint: Optional[str], input_path: str, out_path: str, cfg: RunConfig) -> str:
    """
    Увеличение растра окнами с перекрытием.

    Без контрольной точки выполняется бикубическое увеличение. Результат
    пишется в PNG при расширении .png, иначе в SRRAS с пересчитанной привязкой.
    """
    raster, anchor, _ = read_raster(input_path)
    if raster.bands != 3:
        raise ShapeMismatchError(f"Ожидается 3 канала, получено {raster.bands}", stage="infer")
    if float(np.max(raster.data)) > 1.0:
        logging.info(f"Значения вне [0, 1], нормализация ({cfg.dataset.normalize_mode})")
        raster = normalize(raster, cfg.dataset.normalize_mode)

    model, spec = None, None
    if checkpoint:
        model, spec, _ = load_model(checkpoint)
    scale = spec.scale if spec is not None else cfg.dataset.scale
    result = infer_raster(model, spec, raster, cfg.infer, scale=scale)
    if out_path.lower().endswith(".png"):
        write_png(out_path, result)
    else:
        write_srras(out_path, result, output_anchor(anchor, scale))
    logging.info(f"Вывод: {raster.width}x{raster.height} -> {result.width}x{result.height}, {out_path}")
    return out_path


def cmd_compare_figure(manifest: str, checkpoints: Mapping[str, str], n_patches: int,
                       out_png: str, cfg: RunConfig) -> str:
    """Сравнительная сетка n_patches фрагментов, выбранных по seed."""
    dataset = PatchPairDataset.from_manifest(manifest)
    indices = select_patches(len(dataset), n_patches, cfg.seed)
    reports, outputs = evaluate_methods(dataset, checkpoints, cfg.eval)
    image = render_montage(dataset.hr_rasters, outputs, reports, indices)
    write_montage(out_png, image)
    return out_png
