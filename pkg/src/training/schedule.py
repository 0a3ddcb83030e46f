"""
Расписания скорости обучения.

Предобучение: lr делится пополам, когда лучший PSNR на валидации не
улучшается plateau_patience эпох подряд; остановка после stop_patience
эпох без улучшения. Состязательная фаза: lr делится пополам каждые
gan_halve_every эпох.
"""

from dataclasses import dataclass
from typing import NamedTuple, Sequence

import torch
from torch.optim.lr_scheduler import ReduceLROnPlateau, StepLR

from src.errors import ConfigError


@dataclass(frozen=True)
class ScheduleSpec:
    pretrain_lr0: float = 2e-4
    plateau_patience: int = 10
    stop_patience: int = 25
    pretrain_max_epochs: int = 1000
    gan_lr0: float = 1e-4
    gan_halve_every: int = 500
    gan_total: int = 2000
    batch_size: int = 8
    checkpoint_every: int = 100

    def __post_init__(self):
        for name in ("plateau_patience", "stop_patience", "pretrain_max_epochs", "gan_halve_every",
                     "gan_total", "batch_size", "checkpoint_every"):
            if getattr(self, name) < 1:
                raise ConfigError(f"значение должно быть положительным, получено {getattr(self, name)}",
                                  field=name)
        if self.stop_patience <= self.plateau_patience:
            raise ConfigError(
                f"stop_patience ({self.stop_patience}) должно быть больше plateau_patience "
                f"({self.plateau_patience})", field="stop_patience")
        for name in ("pretrain_lr0", "gan_lr0"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"скорость обучения должна быть > 0, получено {getattr(self, name)}", field=name)


class PlateauEvent(NamedTuple):
    improved: bool
    lr_halved: bool
    stop: bool
    epochs_without_improvement: int


class PlateauSchedule:
    """
    Половинит lr на plateau_patience-й эпохе без строгого улучшения
    метрики (и затем каждые plateau_patience таких эпох), сигнализирует
    об остановке на stop_patience-й.
    """

    def __init__(self, optimizers: Sequence[torch.optim.Optimizer],
                 plateau_patience: int, stop_patience: int):
        self.stop_patience = stop_patience
        # torch снижает lr, когда число плохих эпох превышает patience
        self.schedulers = [
            ReduceLROnPlateau(opt, mode="max", factor=0.5, patience=plateau_patience - 1,
                              threshold=0.0, threshold_mode="abs", min_lr=0.0, eps=0.0)
            for opt in optimizers
        ]
        self.optimizers = list(optimizers)
        self.best = float("-inf")
        self.bad_epochs = 0

    def step(self, metric: float) -> PlateauEvent:
        lr_before = [opt.param_groups[0]["lr"] for opt in self.optimizers]
        for scheduler in self.schedulers:
            scheduler.step(metric)
        lr_after = [opt.param_groups[0]["lr"] for opt in self.optimizers]

        improved = metric > self.best
        if improved:
            self.best = metric
            self.bad_epochs = 0
        else:
            self.bad_epochs += 1
        return PlateauEvent(improved, lr_after != lr_before,
                            self.bad_epochs >= self.stop_patience, self.bad_epochs)


class HalvingSchedule:
    """lr(e) = lr0 * 0.5 ** (e // every) для всех переданных оптимизаторов."""

    def __init__(self, optimizers: Sequence[torch.optim.Optimizer], every: int):
        self.schedulers = [StepLR(opt, step_size=every, gamma=0.5) for opt in optimizers]

    def step(self) -> None:
        for scheduler in self.schedulers:
            scheduler.step()
