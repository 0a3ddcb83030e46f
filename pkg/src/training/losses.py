"""
Функции потерь: L1, перцептивная, релятивистские состязательные потери и
итоговая потеря генератора.

Состязательные потери вычисляются в пространстве логитов через softplus:
-log(sigmoid(z)) = softplus(-z), -log(1 - sigmoid(z)) = softplus(z).
"""

import math
from dataclasses import dataclass
from typing import NamedTuple, Tuple

import torch
import torch.nn.functional as F

from src.errors import ConfigError, DivergenceError, ShapeMismatchError
from src.metrics.iq_metrics import FeatureExtractor

DEFAULT_PERCEP_WEIGHTS = (0.1, 0.1, 1.0, 1.0, 1.0)


@dataclass(frozen=True)
class LossWeights:
    """
    Веса итоговой потери генератора: L_percep + lambda_adv * L_adv + eta * L_1.
    """

    lambda_adv: float = 5e-3
    eta: float = 1e-2
    percep_layer_weights: Tuple[float, ...] = DEFAULT_PERCEP_WEIGHTS

    def __post_init__(self):
        object.__setattr__(self, "percep_layer_weights", tuple(float(w) for w in self.percep_layer_weights))
        if self.lambda_adv < 0:
            raise ConfigError(f"lambda_adv < 0: {self.lambda_adv}", field="lambda_adv")
        if self.eta < 0:
            raise ConfigError(f"eta < 0: {self.eta}", field="eta")
        if any(w < 0 for w in self.percep_layer_weights):
            raise ConfigError(f"Отрицательный вес слоя: {self.percep_layer_weights}",
                              field="percep_layer_weights")

    @property
    def uses_perceptual(self) -> bool:
        return any(w > 0 for w in self.percep_layer_weights)


def l1_loss(gen_out: torch.Tensor, target: torch.Tensor) -> torch.Tensor:
    if gen_out.shape != target.shape:
        raise ShapeMismatchError(f"L1: размеры {tuple(gen_out.shape)} и {tuple(target.shape)} не совпадают")
    return torch.mean(torch.abs(gen_out - target))


def perceptual_loss(gen_out: torch.Tensor, target: torch.Tensor,
                    backbone: FeatureExtractor, weights: Tuple[float, ...]) -> torch.Tensor:
    """
    Сумма w_l * mean|phi_l(G(x)) - phi_l(y)| по отводам экстрактора.

    Параметры экстрактора градиент не получают; при нулевых весах
    экстрактор не вызывается.
    """
    if gen_out.shape != target.shape:
        raise ShapeMismatchError(
            f"Перцептивная потеря: размеры {tuple(gen_out.shape)} и {tuple(target.shape)} не совпадают")
    taps = backbone.tap_names
    if len(weights) != len(taps):
        raise ValueError(f"{len(weights)} весов для {len(taps)} отводов")
    total = torch.zeros((), dtype=gen_out.dtype)
    if not any(w > 0 for w in weights):
        return total
    gen_feats = backbone.extract(gen_out)
    with torch.no_grad():
        target_feats = backbone.extract(target)
    for name, w in zip(taps, weights):
        if w > 0:
            total = total + w * torch.mean(torch.abs(gen_feats[name] - target_feats[name])).to(gen_out.dtype)
    return total


class RelativisticLogits(NamedTuple):
    """Логиты релятивистского дискриминатора: z_rf = C(x_r) - E[C(x_f)], z_fr = C(x_f) - E[C(x_r)]."""

    z_rf: torch.Tensor
    z_fr: torch.Tensor

    @property
    def d_rf(self) -> torch.Tensor:
        return torch.sigmoid(self.z_rf)

    @property
    def d_fr(self) -> torch.Tensor:
        return torch.sigmoid(self.z_fr)


def relativistic_logits(c_real: torch.Tensor, c_fake: torch.Tensor) -> RelativisticLogits:
    """Средние берутся по батчу и (для карты логитов U-Net) по пространству совместно."""
    if c_real.shape != c_fake.shape:
        raise ShapeMismatchError(
            f"Выходы дискриминатора различаются по форме: {tuple(c_real.shape)} и {tuple(c_fake.shape)}")
    return RelativisticLogits(c_real - c_fake.mean(), c_fake - c_real.mean())


def generator_adv_loss(z_rf: torch.Tensor, z_fr: torch.Tensor) -> torch.Tensor:
    """-E[log(1 - D_rf)] - E[log(D_fr)] по логитам."""
    return torch.mean(F.softplus(z_rf)) + torch.mean(F.softplus(-z_fr))


def discriminator_adv_loss(z_rf: torch.Tensor, z_fr: torch.Tensor) -> torch.Tensor:
    """-E[log(D_rf)] - E[log(1 - D_fr)] по логитам."""
    return torch.mean(F.softplus(-z_rf)) + torch.mean(F.softplus(z_fr))


class GeneratorLossParts(NamedTuple):
    percep: torch.Tensor
    adv: torch.Tensor
    l1: torch.Tensor


def total_generator_loss(parts: GeneratorLossParts, w: LossWeights) -> torch.Tensor:
    for name, value in parts._asdict().items():
        if not math.isfinite(float(value)):
            raise DivergenceError(f"Нечисловое значение потери '{name}': {float(value)}", name=name)
    return parts.percep + w.lambda_adv * parts.adv + w.eta * parts.l1
