"""
Оптимизатор Adam с контролем расходимости.

Шаг выполняет torch.optim.Adam (стандартное обновление с коррекцией
смещения моментов); перед шагом все градиенты проверяются на конечность,
и при нарушении бросается DivergenceError с именем параметра.
"""

from dataclasses import dataclass, field
from typing import Dict, Iterable, Optional, Tuple

import torch
from torch import nn

from src.errors import DivergenceError

ADAM_BETAS = (0.90, 0.99)
ADAM_EPS = 1e-8


@dataclass
class AdamState:
    """Снимок состояния Adam: номер шага и моменты по именам параметров."""

    step: int
    m: Dict[str, torch.Tensor] = field(default_factory=dict)
    v: Dict[str, torch.Tensor] = field(default_factory=dict)
    beta1: float = ADAM_BETAS[0]
    beta2: float = ADAM_BETAS[1]
    epsilon: float = ADAM_EPS


class GuardedAdam:
    """
    Adam над именованными параметрами модели.

    Args:
        named_params: Пары (имя, параметр), обычно model.named_parameters()
        lr: Начальная скорость обучения
        betas: (beta1, beta2), по умолчанию (0.90, 0.99)
        eps: Стабилизирующая константа
    """

    def __init__(self, named_params: Iterable[Tuple[str, nn.Parameter]], lr: float,
                 betas: Tuple[float, float] = ADAM_BETAS, eps: float = ADAM_EPS):
        self.named_params = [(name, p) for name, p in named_params if p.requires_grad]
        self.optimizer = torch.optim.Adam([p for _, p in self.named_params],
                                          lr=lr, betas=betas, eps=eps)

    @property
    def lr(self) -> float:
        return self.optimizer.param_groups[0]["lr"]

    @lr.setter
    def lr(self, value: float) -> None:
        for group in self.optimizer.param_groups:
            group["lr"] = value

    def zero_grad(self) -> None:
        self.optimizer.zero_grad(set_to_none=True)

    def check_gradients(self) -> None:
        for name, p in self.named_params:
            if p.grad is not None and not torch.isfinite(p.grad).all():
                raise DivergenceError(f"Нечисловой градиент параметра '{name}'", name=name)

    def step(self) -> None:
        self.check_gradients()
        self.optimizer.step()

    def state(self) -> AdamState:
        betas = self.optimizer.param_groups[0]["betas"]
        snapshot = AdamState(step=0, beta1=betas[0], beta2=betas[1],
                             epsilon=self.optimizer.param_groups[0]["eps"])
        for name, p in self.named_params:
            st = self.optimizer.state.get(p)
            if not st:
                continue
            snapshot.step = int(st["step"])
            snapshot.m[name] = st["exp_avg"].detach().clone()
            snapshot.v[name] = st["exp_avg_sq"].detach().clone()
        return snapshot


def adam_step(optimizer: GuardedAdam, lr: Optional[float] = None) -> AdamState:
    """Один шаг Adam по накопленным градиентам; при необходимости меняет lr."""
    if lr is not None:
        optimizer.lr = lr
    optimizer.step()
    return optimizer.state()
