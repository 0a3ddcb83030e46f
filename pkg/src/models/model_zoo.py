"""
Реестр архитектур: спецификация модели, построение, сохранение и загрузка
пары (model.json, model.srwt), единый прямой проход LR -> SR.
"""

import json
import logging
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Any, Callable, Dict, NamedTuple, Optional, Tuple

import torch
from torch import nn
from typing_extensions import Literal, get_args

from src.errors import ConfigError
from src.models.backbone import FeatureBackbone, build_vgg_backbone
from src.models.discriminators import ClassicDiscriminator, UNetDiscriminator
from src.models.generators import SRCNN, RRDBGenerator, SRResNet
from src.nn_core.weights_io import load_srwt, save_srwt
from src.raster.raster_core import resample_weight_matrix

ModelKind = Literal["srcnn", "srresnet", "esrgan_gen", "disc_classic", "disc_unet", "feature_backbone"]
GENERATOR_KINDS = ("srcnn", "srresnet", "esrgan_gen")
MODEL_JSON = "model.json"
MODEL_WEIGHTS = "model.srwt"


@dataclass(frozen=True)
class ModelSpec:
    kind: ModelKind
    scale: int = 2
    n_rrdb: int = 4
    n_ub: int = 1
    channels: int = 64
    n_resblocks: int = 16
    input_size: int = 192
    growth: int = 32
    residual_beta: float = 0.2
    seed: int = 0

    def __post_init__(self):
        if self.kind not in get_args(ModelKind):
            raise ConfigError(f"Неизвестный тип модели: {self.kind}", field="kind")
        if self.n_rrdb < 1:
            raise ConfigError(f"n_rrdb должно быть >= 1, получено {self.n_rrdb}", field="n_rrdb")
        if self.channels < 1:
            raise ConfigError(f"channels должно быть >= 1, получено {self.channels}", field="channels")
        if self.kind in ("srresnet", "esrgan_gen") and self.scale != 2 ** self.n_ub:
            raise ConfigError(f"scale={self.scale} не равен 2^n_ub={2 ** self.n_ub}", field="scale")
        if self.kind == "srresnet" and self.n_ub != 1:
            raise ConfigError("SRResNet строится с одной ступенью увеличения", field="n_ub")

    @property
    def is_generator(self) -> bool:
        return self.kind in GENERATOR_KINDS

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "ModelSpec":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"Неизвестные поля спецификации модели: {unknown}", field=unknown[0])
        return cls(**data)


class MethodSpec(NamedTuple):
    """Метод сравнения: генератор и (опционально) дискриминатор."""

    name: str
    title: str
    generator: Optional[str]
    discriminator: Optional[str]


METHODS: Dict[str, MethodSpec] = {
    "bicubic": MethodSpec("bicubic", "Bicubic", None, None),
    "srcnn": MethodSpec("srcnn", "SRCNN", "srcnn", None),
    "srresnet": MethodSpec("srresnet", "SRResNet", "srresnet", None),
    "esrgan": MethodSpec("esrgan", "ESRGAN", "esrgan_gen", "disc_classic"),
    "real_esrgan": MethodSpec("real_esrgan", "Real-ESRGAN", "esrgan_gen", "disc_unet"),
}


def build_srcnn(spec: ModelSpec) -> SRCNN:
    return SRCNN()


def build_srresnet(spec: ModelSpec) -> SRResNet:
    return SRResNet(spec.channels, spec.n_resblocks)


def build_esrgan_generator(spec: ModelSpec) -> RRDBGenerator:
    return RRDBGenerator(spec.channels, spec.n_rrdb, spec.n_ub, spec.growth, spec.residual_beta)


def build_disc_classic(spec: ModelSpec) -> ClassicDiscriminator:
    return ClassicDiscriminator(spec.channels, spec.input_size)


def build_disc_unet(spec: ModelSpec) -> UNetDiscriminator:
    return UNetDiscriminator(spec.channels)


def build_feature_backbone(spec: ModelSpec) -> FeatureBackbone:
    return build_vgg_backbone(spec.channels, spec.seed)


_BUILDERS: Dict[str, Callable[[ModelSpec], nn.Module]] = {
    "srcnn": build_srcnn,
    "srresnet": build_srresnet,
    "esrgan_gen": build_esrgan_generator,
    "disc_classic": build_disc_classic,
    "disc_unet": build_disc_unet,
    "feature_backbone": build_feature_backbone,
}


def build_model(spec: ModelSpec) -> nn.Module:
    """Строит модель с детерминированной инициализацией от spec.seed."""
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(spec.seed)
        model = _BUILDERS[spec.kind](spec)
    n_params = sum(p.numel() for p in model.parameters())
    logging.debug(f"Построена модель {spec.kind}: {n_params} параметров")
    return model


def save_model(out_dir: str, model: nn.Module, spec: ModelSpec,
               extra: Optional[Dict[str, Any]] = None) -> Tuple[str, str]:
    """Сохраняет пару (model.json, model.srwt); возвращает пути к файлам."""
    path = Path(out_dir)
    path.mkdir(parents=True, exist_ok=True)
    meta = {"spec": spec.to_dict(), "weights": MODEL_WEIGHTS}
    meta.update(extra or {})
    json_path = path / MODEL_JSON
    weights_path = path / MODEL_WEIGHTS
    with open(json_path, "w", encoding="utf-8") as f:
        json.dump(meta, f, indent=2, sort_keys=True)
    save_srwt(str(weights_path), model.state_dict())
    return str(json_path), str(weights_path)


def load_model(model_dir: str) -> Tuple[nn.Module, ModelSpec, Dict[str, Any]]:
    """Загружает модель из каталога с model.json и model.srwt."""
    path = Path(model_dir)
    json_path = path / MODEL_JSON
    if not json_path.exists():
        raise FileNotFoundError(f"Не найден {json_path}")
    with open(json_path, encoding="utf-8") as f:
        meta = json.load(f)
    spec = ModelSpec.from_dict(meta["spec"])
    model = build_model(spec)
    model.load_state_dict(load_srwt(str(path / meta.get("weights", MODEL_WEIGHTS))))
    model.eval()
    return model, spec, meta


def bicubic_upscale(x: torch.Tensor, scale: int = 2) -> torch.Tensor:
    """Бикубическое (Keys) увеличение батча (N, C, H, W) теми же весами, что и для растров."""
    h, w = x.shape[-2:]
    wy = torch.from_numpy(resample_weight_matrix(h, h * scale)).to(x.dtype)
    wx = torch.from_numpy(resample_weight_matrix(w, w * scale)).to(x.dtype)
    return torch.einsum("ij,ncjk,lk->ncil", wy, x, wx)


def super_resolve(model: Optional[nn.Module], spec: Optional[ModelSpec], x: torch.Tensor) -> torch.Tensor:
    """
    Прямой проход LR -> SR для любого генератора.

    SRCNN получает вход, заранее увеличенный бикубически; без модели
    возвращается бикубическое увеличение, ограниченное [0, 1].
    """
    if model is None or spec is None:
        return bicubic_upscale(x).clamp(0.0, 1.0)
    if not spec.is_generator:
        raise ValueError(f"Модель {spec.kind} не является генератором")
    if spec.kind == "srcnn":
        x = bicubic_upscale(x, spec.scale)
    return model(x)
