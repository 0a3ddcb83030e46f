"""
Двухфазное обучение генераторов: предобучение по L1 с расписанием по
плато валидационного PSNR и состязательная фаза с попеременными шагами
дискриминатора и генератора.
"""

import copy
import logging
import math
from collections import defaultdict
from pathlib import Path
from typing import Dict, Optional, Tuple

import torch
from torch import nn
from torch.utils.data import DataLoader, Dataset

from src.errors import DatasetError, DivergenceError
from src.metrics.iq_metrics import FeatureExtractor
from src.models.model_zoo import ModelSpec, save_model, super_resolve
from src.nn_core.optim import GuardedAdam
from src.training.losses import (GeneratorLossParts, LossWeights, discriminator_adv_loss,
                                 generator_adv_loss, l1_loss, perceptual_loss,
                                 relativistic_logits, total_generator_loss)
from src.training.run_record import EpochRecord, TrainRunRecord
from src.training.schedule import HalvingSchedule, PlateauSchedule, ScheduleSpec

StateDict = Dict[str, torch.Tensor]


def make_loader(dataset: Dataset, batch_size: int, seed: int, shuffle: bool = True) -> DataLoader:
    """
    Загрузчик с детерминированным порядком батчей для заданного seed.

    Неполный последний батч отбрасывается, если набор не меньше батча;
    набор меньше батча подается одним батчем целиком.
    """
    size = len(dataset)
    if size == 0:
        raise DatasetError("Пустой набор данных")
    generator = torch.Generator().manual_seed(seed)
    return DataLoader(dataset, batch_size=min(batch_size, size), shuffle=shuffle,
                      drop_last=size >= batch_size, generator=generator, num_workers=0)


def _clone_state(model: nn.Module) -> StateDict:
    return copy.deepcopy(model.state_dict())


def _check_finite(value: torch.Tensor, name: str) -> None:
    if not torch.isfinite(value).all():
        raise DivergenceError(f"Нечисловое значение потери '{name}'", name=name)


@torch.no_grad()
def validate(generator: nn.Module, spec: ModelSpec, dataset: Dataset,
             batch_size: int = 8) -> Tuple[float, float]:
    """
    L1 и средний PSNR (по элементам) на валидационном наборе в режиме оценки.

    Элементы с нулевой ошибкой (бесконечный PSNR) в среднее PSNR не входят.
    """
    was_training = generator.training
    generator.eval()
    abs_sum, count = 0.0, 0
    psnrs = []
    for lr_batch, hr_batch in DataLoader(dataset, batch_size=batch_size, shuffle=False):
        sr = super_resolve(generator, spec, lr_batch)
        diff = sr.double() - hr_batch.double()
        abs_sum += float(diff.abs().sum())
        count += diff.numel()
        mse = diff.pow(2).mean(dim=(1, 2, 3))
        psnrs += [10.0 * math.log10(1.0 / m) for m in mse.tolist() if m > 0]
    generator.train(was_training)
    val_psnr = sum(psnrs) / len(psnrs) if psnrs else float("inf")
    return abs_sum / count, val_psnr


def _save_checkpoint(out_dir: Optional[str], name: str, model: nn.Module, spec: ModelSpec,
                     extra: Dict) -> Optional[str]:
    if out_dir is None:
        return None
    save_model(str(Path(out_dir) / name), model, spec, extra)
    return name


def pretrain(generator: nn.Module, spec: ModelSpec, train_set: Dataset, val_set: Dataset,
             sched: ScheduleSpec, seed: int = 42, out_dir: Optional[str] = None,
             method: str = "") -> TrainRunRecord:
    """
    Предобучение генератора по L1 оптимизатором Adam.

    lr делится пополам при отсутствии улучшения лучшего валидационного PSNR
    в течение plateau_patience эпох; обучение прекращается после
    stop_patience эпох без улучшения. По завершении в генератор загружаются
    веса лучшей по PSNR эпохи (каталог "best" в out_dir).
    """
    if len(train_set) == 0 or len(val_set) == 0:
        raise DatasetError("Для предобучения нужны непустые обучающий и валидационный наборы")
    method = method or spec.kind
    record = TrainRunRecord(phase="pretrain", method=method, seed=seed)
    optimizer = GuardedAdam(generator.named_parameters(), sched.pretrain_lr0)
    plateau = PlateauSchedule([optimizer.optimizer], sched.plateau_patience, sched.stop_patience)
    loader = make_loader(train_set, sched.batch_size, seed)

    logging.info("=" * 50)
    logging.info(f"Предобучение {method}: {len(train_set)} обучающих, {len(val_set)} валидационных пар")
    record.initial_val_l1, record.initial_val_psnr = validate(generator, spec, val_set, sched.batch_size)
    logging.info(f"Исходное качество: L1={record.initial_val_l1:.5f}, PSNR={record.initial_val_psnr:.3f} дБ")

    best_state = _clone_state(generator)
    last_good = best_state
    generator.train()
    try:
        for epoch in range(sched.pretrain_max_epochs):
            lr = optimizer.lr
            losses = []
            for lr_batch, hr_batch in loader:
                optimizer.zero_grad()
                loss = l1_loss(super_resolve(generator, spec, lr_batch), hr_batch)
                _check_finite(loss, "l1")
                loss.backward()
                optimizer.step()
                losses.append(loss.item())

            val_l1, val_psnr = validate(generator, spec, val_set, sched.batch_size)
            event = plateau.step(val_psnr)
            entry = EpochRecord(epoch, "pretrain", lr, {"l1": sum(losses) / len(losses)},
                                val_l1, val_psnr, improved=event.improved)
            if event.improved:
                best_state = _clone_state(generator)
                record.best_epoch, record.best_val_psnr = epoch, val_psnr
                entry.checkpoint = _save_checkpoint(out_dir, "best", generator, spec,
                                                    {"method": method, "seed": seed,
                                                     "phase": "pretrain", "epoch": epoch})
            record.add_epoch(entry)
            last_good = _clone_state(generator)
            logging.info(f"[pretrain {epoch}] L1={entry.losses['l1']:.5f} "
                         f"val L1={val_l1:.5f} PSNR={val_psnr:.3f} lr={lr:.2e}")
            if event.lr_halved:
                logging.info(f"Нет улучшения {event.epochs_without_improvement} эпох: lr -> {optimizer.lr:.2e}")
            if event.stop:
                logging.info(f"Ранняя остановка после {event.epochs_without_improvement} эпох без улучшения")
                record.status = "early_stopped"
                break
        else:
            record.status = "completed"
    except DivergenceError as e:
        logging.error(f"Расхождение на эпохе {len(record.epochs)}: {e}")
        record.status, record.error = "diverged", str(e)
        generator.load_state_dict(last_good)
        ckpt = _save_checkpoint(out_dir, "last_good", generator, spec,
                                {"method": method, "seed": seed, "phase": "pretrain"})
        if ckpt:
            record.checkpoints.append(ckpt)

    if record.status != "diverged":
        generator.load_state_dict(best_state)
    if record.best_epoch is not None and out_dir is not None:
        record.checkpoints.insert(0, "best")
    if out_dir is not None:
        record.write(out_dir)
    logging.info(f"Предобучение завершено: статус {record.status}, эпох {len(record.epochs)}, "
                 f"лучший PSNR {record.best_val_psnr}")
    logging.info("=" * 50)
    return record


def discriminator_step(discriminator: nn.Module, d_opt: GuardedAdam,
                       real: torch.Tensor, fake: torch.Tensor) -> float:
    """Шаг дискриминатора по L_D^Ra; генератор не затрагивается."""
    d_opt.zero_grad()
    logits = relativistic_logits(discriminator(real), discriminator(fake.detach()))
    loss = discriminator_adv_loss(logits.z_rf, logits.z_fr)
    _check_finite(loss, "d_adv")
    loss.backward()
    d_opt.step()
    return loss.item()


def generator_step(generator_opt: GuardedAdam, discriminator: nn.Module,
                   backbone: Optional[FeatureExtractor], real: torch.Tensor, fake: torch.Tensor,
                   w: LossWeights) -> Tuple[GeneratorLossParts, float]:
    """
    Шаг генератора по L_percep + lambda * L_G^Ra + eta * L_1.

    Параметры дискриминатора на время шага заморожены.
    """
    generator_opt.zero_grad()
    flags = [p.requires_grad for p in discriminator.parameters()]
    for p in discriminator.parameters():
        p.requires_grad_(False)
    try:
        c_real = discriminator(real).detach()
        logits = relativistic_logits(c_real, discriminator(fake))
        if w.uses_perceptual:
            if backbone is None:
                raise ValueError("Перцептивная потеря требует экстрактор признаков")
            percep = perceptual_loss(fake, real, backbone, w.percep_layer_weights)
        else:
            percep = torch.zeros((), dtype=fake.dtype)
        parts = GeneratorLossParts(percep, generator_adv_loss(logits.z_rf, logits.z_fr), l1_loss(fake, real))
        total = total_generator_loss(parts, w)
        total.backward()
    finally:
        for p, flag in zip(discriminator.parameters(), flags):
            p.requires_grad_(flag)
    generator_opt.step()
    return parts, total.item()


def adversarial_train(generator: nn.Module, g_spec: ModelSpec, discriminator: nn.Module,
                      d_spec: ModelSpec, backbone: Optional[FeatureExtractor],
                      train_set: Dataset, val_set: Dataset, w: LossWeights, sched: ScheduleSpec,
                      seed: int = 42, out_dir: Optional[str] = None,
                      method: str = "") -> TrainRunRecord:
    """
    Состязательная фаза: на каждом батче шаг дискриминатора, затем шаг
    генератора. lr обоих оптимизаторов делится пополам каждые
    gan_halve_every эпох; контрольные точки сохраняются каждые
    checkpoint_every эпох и в конце ("last").
    """
    if len(train_set) == 0 or len(val_set) == 0:
        raise DatasetError("Для состязательного обучения нужны непустые наборы")
    method = method or g_spec.kind
    record = TrainRunRecord(phase="gan", method=method, seed=seed)
    g_opt = GuardedAdam(generator.named_parameters(), sched.gan_lr0)
    d_opt = GuardedAdam(discriminator.named_parameters(), sched.gan_lr0)
    halving = HalvingSchedule([g_opt.optimizer, d_opt.optimizer], sched.gan_halve_every)
    loader = make_loader(train_set, sched.batch_size, seed)

    logging.info("=" * 50)
    logging.info(f"Состязательное обучение {method}: {sched.gan_total} эпох, "
                 f"lambda={w.lambda_adv}, eta={w.eta}")
    record.initial_val_l1, record.initial_val_psnr = validate(generator, g_spec, val_set, sched.batch_size)

    def save_pair(name: str, extra: Dict) -> Optional[str]:
        ckpt = _save_checkpoint(out_dir, f"{name}/generator", generator, g_spec, extra)
        _save_checkpoint(out_dir, f"{name}/discriminator", discriminator, d_spec, extra)
        return ckpt and name

    last_good = (_clone_state(generator), _clone_state(discriminator))
    generator.train()
    discriminator.train()
    try:
        for epoch in range(sched.gan_total):
            lr = g_opt.lr
            sums: Dict[str, float] = defaultdict(float)
            n_batches = 0
            for lr_batch, hr_batch in loader:
                fake = super_resolve(generator, g_spec, lr_batch)
                sums["d"] += discriminator_step(discriminator, d_opt, hr_batch, fake)
                parts, g_total = generator_step(g_opt, discriminator, backbone, hr_batch, fake, w)
                sums["g_total"] += g_total
                sums["l1"] += parts.l1.item()
                sums["adv"] += parts.adv.item()
                sums["percep"] += parts.percep.item()
                n_batches += 1

            val_l1, val_psnr = validate(generator, g_spec, val_set, sched.batch_size)
            losses = {k: v / n_batches for k, v in sorted(sums.items())}
            entry = EpochRecord(epoch, "gan", lr, losses, val_l1, val_psnr)
            if record.best_val_psnr is None or val_psnr > record.best_val_psnr:
                entry.improved = True
                record.best_epoch, record.best_val_psnr = epoch, val_psnr
            if (epoch + 1) % sched.checkpoint_every == 0:
                entry.checkpoint = save_pair(f"epoch_{epoch + 1:04d}",
                                             {"method": method, "seed": seed, "phase": "gan", "epoch": epoch})
                if entry.checkpoint:
                    record.checkpoints.append(entry.checkpoint)
            record.add_epoch(entry)
            last_good = (_clone_state(generator), _clone_state(discriminator))
            halving.step()
            logging.info(f"[gan {epoch}] G={losses['g_total']:.5f} D={losses['d']:.5f} "
                         f"L1={losses['l1']:.5f} val PSNR={val_psnr:.3f} lr={lr:.2e}")
        record.status = "completed"
        name = "last"
    except DivergenceError as e:
        logging.error(f"Расхождение на эпохе {len(record.epochs)}: {e}")
        record.status, record.error = "diverged", str(e)
        generator.load_state_dict(last_good[0])
        discriminator.load_state_dict(last_good[1])
        name = "last_good"

    ckpt = save_pair(name, {"method": method, "seed": seed, "phase": "gan", "epoch": len(record.epochs) - 1})
    if ckpt:
        record.checkpoints.append(ckpt)
    if out_dir is not None:
        record.write(out_dir)
    logging.info(f"Состязательное обучение завершено: статус {record.status}, эпох {len(record.epochs)}")
    logging.info("=" * 50)
    return record
