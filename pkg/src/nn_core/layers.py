"""
Функциональные операции nn-core поверх тензоров torch.

Обратный проход строится динамическим графом autograd; здесь закреплены
контракты операций: проверки форм, соглашение о субградиенте в нуле,
спектральная нормализация с сохраняемым вектором u.
"""

from typing import Optional, Tuple

import torch
import torch.nn.functional as F

from src.errors import ShapeMismatchError

SN_EPS = 1e-12


def conv2d(x: torch.Tensor, weight: torch.Tensor, bias: Optional[torch.Tensor] = None,
           stride: int = 1, padding: int = 0) -> torch.Tensor:
    """
    Свертка (кросс-корреляция) входа (N, C, H, W) с ядром (O, C, k, k).

    Выходной размер: floor((H + 2p - k) / s) + 1.
    """
    if x.dim() != 4 or weight.dim() != 4:
        raise ShapeMismatchError(
            f"conv2d ожидает 4-мерные вход и ядро, получено {tuple(x.shape)} и {tuple(weight.shape)}")
    if x.shape[1] != weight.shape[1]:
        raise ShapeMismatchError(
            f"conv2d: {x.shape[1]} входных каналов, ядро ожидает {weight.shape[1]}")
    if bias is not None and bias.shape != (weight.shape[0],):
        raise ShapeMismatchError(f"conv2d: смещение {tuple(bias.shape)} не согласовано с ядром")
    k = weight.shape[-1]
    if x.shape[2] + 2 * padding < k or x.shape[3] + 2 * padding < k:
        raise ShapeMismatchError(f"conv2d: ядро {k}x{k} больше входа {tuple(x.shape[2:])}")
    return F.conv2d(x, weight, bias, stride=stride, padding=padding)


def leaky_relu(x: torch.Tensor, slope: float = 0.2) -> torch.Tensor:
    """max(x, slope*x); производная в нуле равна 1."""
    return torch.where(x >= 0, x, x * slope)


def relu(x: torch.Tensor) -> torch.Tensor:
    """max(x, 0) с производной 1 в нуле, как у leaky_relu."""
    return torch.where(x >= 0, x, torch.zeros_like(x))


def prelu(x: torch.Tensor, a: torch.Tensor) -> torch.Tensor:
    """PReLU с обучаемым наклоном на канал; производная в нуле равна 1."""
    slope = a.view(1, -1, *([1] * (x.dim() - 2))) if a.numel() > 1 else a
    return torch.where(x >= 0, x, x * slope)


def batch_norm(x: torch.Tensor, gamma: torch.Tensor, beta: torch.Tensor,
               running_mean: torch.Tensor, running_var: torch.Tensor,
               training: bool, momentum: float = 0.1, eps: float = 1e-5) -> torch.Tensor:
    """
    Поканальная стандартизация с накоплением скользящих статистик.

    В режиме обучения батч должен содержать не меньше двух примеров.
    """
    if training and x.shape[0] < 2:
        raise ShapeMismatchError("batch_norm в режиме обучения требует батч >= 2")
    return F.batch_norm(x, running_mean, running_var, gamma, beta,
                        training=training, momentum=momentum, eps=eps)


def pixel_shuffle(x: torch.Tensor, r: int) -> torch.Tensor:
    """(N, C*r^2, H, W) -> (N, C, H*r, W*r); out[n,c,h*r+i,w*r+j] = in[n, c*r^2+i*r+j, h, w]."""
    if x.shape[1] % (r * r) != 0:
        raise ShapeMismatchError(f"pixel_shuffle: {x.shape[1]} каналов не делится на r^2={r * r}")
    return F.pixel_shuffle(x, r)


def pixel_unshuffle(x: torch.Tensor, r: int) -> torch.Tensor:
    """Обратная к pixel_shuffle перестановка."""
    if x.shape[2] % r != 0 or x.shape[3] % r != 0:
        raise ShapeMismatchError(f"pixel_unshuffle: размер {tuple(x.shape[2:])} не делится на {r}")
    return F.pixel_unshuffle(x, r)


def dense(x: torch.Tensor, weight: torch.Tensor, bias: Optional[torch.Tensor] = None) -> torch.Tensor:
    """Аффинное отображение x W^T + b для входа (N, features)."""
    if x.shape[-1] != weight.shape[1]:
        raise ShapeMismatchError(
            f"dense: вход {x.shape[-1]} признаков, веса ожидают {weight.shape[1]}")
    return F.linear(x, weight, bias)


def spectral_normalize(weight: torch.Tensor, u: torch.Tensor, n_iter: int = 1,
                       update: bool = True) -> Tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
    """
    Делит вес на оценку старшего сингулярного числа (степенной метод).

    Вес приводится к матрице (out, rest). Векторы u, v в граф не входят,
    sigma = u^T W v дифференцируема по W. Нулевая матрица дает sigma = eps.

    Args:
        weight: Тензор весов
        u: Сохраняемый между вызовами вектор размера out
        n_iter: Число итераций степенного метода
        update: Выполнять ли итерации (в режиме оценки u не меняется)

    Returns:
        (нормированный вес, новый вектор u, оценка sigma)
    """
    matrix = weight.reshape(weight.shape[0], -1)
    with torch.no_grad():
        u_new = u.clone()
        v = F.normalize(torch.mv(matrix.t(), u_new), dim=0, eps=SN_EPS)
        if update:
            for _ in range(n_iter):
                v = F.normalize(torch.mv(matrix.t(), u_new), dim=0, eps=SN_EPS)
                u_new = F.normalize(torch.mv(matrix, v), dim=0, eps=SN_EPS)
    sigma = torch.dot(u_new, torch.mv(matrix, v))
    sigma = torch.clamp(sigma, min=SN_EPS)
    return weight / sigma, u_new, sigma


def interpolate_nearest(x: torch.Tensor, scale: int) -> torch.Tensor:
    """Увеличение повторением пикселей."""
    return F.interpolate(x, scale_factor=scale, mode="nearest")


def interpolate_bilinear(x: torch.Tensor, scale: int) -> torch.Tensor:
    """Билинейное увеличение (центры пикселей совмещены)."""
    return F.interpolate(x, scale_factor=scale, mode="bilinear", align_corners=False)


def max_pool2d(x: torch.Tensor, k: int = 2) -> torch.Tensor:
    """Максимум по неперекрывающимся окнам k x k."""
    if x.shape[2] < k or x.shape[3] < k:
        raise ShapeMismatchError(f"max_pool2d: окно {k} больше входа {tuple(x.shape[2:])}")
    return F.max_pool2d(x, k)
