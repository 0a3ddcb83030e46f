"""
Фабрика парного набора данных: загрузка тайлов, согласование сеток,
предобработка HR, спектральная коррекция LR, нарезка пар фрагментов,
фильтр качества и разбиение на train/validation/test с манифестами.
"""

import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from src.config import DatasetConfig, config_hash
from src.dataset.pairing import TilePairingEntry
from src.errors import DatasetError, RasterFormatError, ShapeMismatchError
from src.geo.geo_register import (GeoAnchor, CoordinateTransform, intersect_and_crop, reproject,
                                  transform_from_config)
from src.metrics.iq_metrics import psnr, ssim
from src.raster.raster_core import (BoxKernelSpec, Raster, bicubic_resample, box_filter,
                                    extract_patch_grid, histogram_match, normalize)
from src.raster.raster_io import read_raster, write_png, write_srras

SPLITS = ("train", "validation", "test")
MANIFEST_TEMPLATE = "manifest_{split}.json"
SUMMARY_FILE = "summary.json"
_VALID_MASK_TOL = 1e-6


@dataclass(frozen=True, eq=False)
class IngestedRaster:
    raster: Raster
    anchor: Optional[GeoAnchor]
    checksum: str
    path: str
    fmt: str


def ingest(path: str, fmt: Optional[str] = None) -> IngestedRaster:
    """
    Загружает и проверяет растр (SRRAS или PNG с sidecar).

    Контрольная сумма исходных данных попадает в манифест набора.
    """
    fmt = (fmt or ("png" if path.lower().endswith(".png") else "srras")).lower()
    raster, anchor, checksum = read_raster(path, fmt)
    if raster.bands != 3:
        raise RasterFormatError(f"{path}: ожидается 3 канала RGB, получено {raster.bands}")
    logging.debug(f"Загружен {path}: {raster.width}x{raster.height}, gsd={raster.gsd}")
    return IngestedRaster(raster, anchor, checksum, path, fmt)


def preprocess_hr(hr: Raster, target_gsd: float = 5.0) -> Raster:
    """
    Сглаживание HR квадратным ядром n x n и бикубическое уменьшение к target_gsd.

    n = round(target_gsd / gsd): 0.2 м -> 5 м дает n = 25. При нецелом или
    четном отношении берется ближайшее нечетное n с предупреждением.
    """
    if hr.gsd is None:
        raise DatasetError("У HR-растра не задан GSD")
    ratio = target_gsd / hr.gsd
    if ratio < 1.0 - 1e-9:
        raise DatasetError(f"Целевой GSD {target_gsd} м мельче исходного {hr.gsd} м")
    n = int(round(ratio))
    if abs(ratio - n) > 1e-6 or n % 2 == 0:
        n = 2 * math.floor((ratio - 1.0) / 2.0 + 0.5) + 1
        logging.warning(f"Отношение GSD {ratio:.4f} не является нечетным целым, ядро {n}x{n}")
    filtered = box_filter(hr, BoxKernelSpec(n)) if n > 1 else hr
    width = int(round(hr.width * hr.gsd / target_gsd))
    height = int(round(hr.height * hr.gsd / target_gsd))
    if width < 1 or height < 1:
        raise DatasetError(f"HR-растр {hr.width}x{hr.height} слишком мал для GSD {target_gsd} м")
    out = bicubic_resample(filtered, width, height)
    return out.with_data(out.data, gsd=target_gsd)


def spectral_adjust(lr: Raster, hr_ref: Raster, bins: int = 256) -> Raster:
    """Поканально приводит гистограмму LR к гистограмме HR-эталона."""
    if lr.bands != hr_ref.bands:
        raise ShapeMismatchError(f"Разное число каналов LR ({lr.bands}) и HR ({hr_ref.bands})")
    return histogram_match(lr, hr_ref, bins)


@dataclass(frozen=True, eq=False)
class RegisteredTile:
    """Согласованная пара тайлов: HR на целевом GSD и LR на общем участке."""

    entry: TilePairingEntry
    hr: Raster
    hr_anchor: GeoAnchor
    lr: Raster
    lr_anchor: GeoAnchor
    hr_valid: np.ndarray
    checksums: Dict[str, str] = field(default_factory=dict)


def _normalized(item: IngestedRaster, mode: str) -> Raster:
    # PNG импортируется уже в виде k/255
    raster = item.raster if item.fmt == "png" else normalize(item.raster, mode)
    if raster.gsd is None and item.anchor is not None:
        raster = raster.with_data(raster.data, gsd=abs(item.anchor.pixel_size_x))
    return raster


def _target_grid(r: Raster, anchor: GeoAnchor, t: CoordinateTransform) -> Tuple[GeoAnchor, int, int]:
    """Сетка в СК цели с тем же размером пикселя, покрывающая образ растра."""
    x0, y0, x1, y1 = anchor.bounds(r.width, r.height)
    xs, ys = t.forward(np.array([x0, x1, x0, x1]), np.array([y0, y0, y1, y1]))
    psx, psy = anchor.pixel_size_x, anchor.pixel_size_y
    ox = xs.min() if psx > 0 else xs.max()
    oy = ys.min() if psy > 0 else ys.max()
    width = int(math.ceil((xs.max() - xs.min()) / abs(psx) - 1e-9))
    height = int(math.ceil((ys.max() - ys.min()) / abs(psy) - 1e-9))
    return GeoAnchor(ox, oy, psx, psy, t.target_crs), width, height


def register_tile(entry: TilePairingEntry, cfg: DatasetConfig) -> RegisteredTile:
    """
    Загрузка, перепроецирование (при различии СК), вырезка общего участка,
    предобработка HR и спектральная коррекция LR для одной пары тайлов.
    """
    hr_in = ingest(entry.hr_path, entry.format)
    lr_in = ingest(entry.lr_path, entry.format)
    if hr_in.anchor is None or lr_in.anchor is None:
        raise DatasetError(f"{entry.aoi_id}: у тайлов нет геопривязки", stage="register")

    hr, hr_anchor = _normalized(hr_in, cfg.normalize_mode), hr_in.anchor
    lr, lr_anchor = _normalized(lr_in, cfg.normalize_mode), lr_in.anchor
    if lr.gsd is not None and abs(lr.gsd - cfg.lr_gsd) > 1e-6 * cfg.lr_gsd:
        logging.warning(f"{entry.aoi_id}: GSD LR {lr.gsd} м отличается от ожидаемого {cfg.lr_gsd} м")

    valid = np.ones((hr.height, hr.width))
    if entry.transform is not None or hr_anchor.crs_id != lr_anchor.crs_id:
        if entry.transform is None:
            raise DatasetError(f"{entry.aoi_id}: СК {hr_anchor.crs_id} и {lr_anchor.crs_id} различаются, "
                               f"а преобразование не задано", stage="register")
        t = transform_from_config(entry.transform)
        target_anchor, tw, th = _target_grid(hr, hr_anchor, t)
        result = reproject(hr, hr_anchor, t, target_anchor, tw, th)
        hr, hr_anchor, valid = result.raster, result.anchor, result.valid_mask.astype(np.float64)

    # маска действительных пикселей проходит вырезку и предобработку четвертым каналом
    stacked = hr.with_data(np.concatenate([hr.data, valid[np.newaxis]]))
    (hr_crop, hr_crop_anchor), (lr_crop, lr_crop_anchor) = intersect_and_crop(
        stacked, hr_anchor, lr, lr_anchor)
    hr_5 = preprocess_hr(hr_crop, cfg.hr_gsd)
    hr_valid = hr_5.data[3] >= 1.0 - _VALID_MASK_TOL
    hr_5 = hr_5.with_data(np.clip(hr_5.data[:3], 0.0, 1.0))
    hr_5_anchor = GeoAnchor(hr_crop_anchor.origin_x, hr_crop_anchor.origin_y,
                            math.copysign(cfg.hr_gsd, hr_crop_anchor.pixel_size_x),
                            math.copysign(cfg.hr_gsd, hr_crop_anchor.pixel_size_y),
                            hr_crop_anchor.crs_id)
    lr_adj = spectral_adjust(lr_crop, hr_5, cfg.histogram_bins)
    return RegisteredTile(entry, hr_5, hr_5_anchor, lr_adj, lr_crop_anchor, hr_valid,
                          {"hr": hr_in.checksum, "lr": lr_in.checksum})


@dataclass(eq=False)
class PatchPair:
    """Пара фрагментов LR/HR с положением в исходном тайле и оценками качества."""

    pair_id: str
    aoi_id: str
    row: int
    col: int
    lr: Raster
    hr: Raster
    lr_anchor: Optional[GeoAnchor] = None
    hr_anchor: Optional[GeoAnchor] = None
    ssim_score: Optional[float] = None
    psnr_score: Optional[float] = None

    def __post_init__(self):
        if (self.hr.height, self.hr.width) != (2 * self.lr.height, 2 * self.lr.width):
            raise ShapeMismatchError(
                f"{self.pair_id}: HR {self.hr.width}x{self.hr.height} не вдвое больше "
                f"LR {self.lr.width}x{self.lr.height}")


def pair_id_for(aoi_id: str, row: int, col: int) -> str:
    return f"{aoi_id}_r{row:04d}_c{col:04d}"


def score_pair(pair: PatchPair) -> PatchPair:
    """SSIM и PSNR между бикубически увеличенным LR и HR-фрагментом."""
    upscaled = bicubic_resample(pair.lr, pair.hr.width, pair.hr.height)
    pair.ssim_score = ssim(upscaled, pair.hr)
    pair.psnr_score = psnr(upscaled, pair.hr)
    return pair


def make_pairs(tile: RegisteredTile, cfg: DatasetConfig) -> List[PatchPair]:
    """
    Нарезает согласованные сетки фрагментов: LR lr_patch/stride, HR вдвое
    больше в той же точке местности. Фрагменты без полного покрытия HR
    пропускаются.
    """
    ratio_x = tile.lr_anchor.pixel_size_x / tile.hr_anchor.pixel_size_x
    ratio_y = tile.lr_anchor.pixel_size_y / tile.hr_anchor.pixel_size_y
    if abs(ratio_x - cfg.scale) > 1e-9 or abs(ratio_y - cfg.scale) > 1e-9:
        raise ShapeMismatchError(
            f"{tile.entry.aoi_id}: отношение пикселей LR/HR ({ratio_x}, {ratio_y}) не равно {cfg.scale}")

    size = cfg.hr_patch
    pairs, skipped = [], 0
    for row, col, lr_patch in extract_patch_grid(tile.lr, cfg.lr_patch, cfg.stride):
        lr_anchor = tile.lr_anchor.shifted(col, row)
        hc = (lr_anchor.origin_x - tile.hr_anchor.origin_x) / tile.hr_anchor.pixel_size_x
        hrow = (lr_anchor.origin_y - tile.hr_anchor.origin_y) / tile.hr_anchor.pixel_size_y
        hc_i, hr_i = int(round(hc)), int(round(hrow))
        if abs(hc - hc_i) > 1e-6 or abs(hrow - hr_i) > 1e-6:
            raise ShapeMismatchError(
                f"{tile.entry.aoi_id}: сетки LR и HR смещены на дробный пиксель ({hc:.4f}, {hrow:.4f})")
        if (hc_i < 0 or hr_i < 0 or hc_i + size > tile.hr.width or hr_i + size > tile.hr.height
                or not tile.hr_valid[hr_i:hr_i + size, hc_i:hc_i + size].all()):
            skipped += 1
            continue
        hr_patch = tile.hr.with_data(tile.hr.data[:, hr_i:hr_i + size, hc_i:hc_i + size].copy(), metadata={})
        pair = PatchPair(pair_id_for(tile.entry.aoi_id, row, col), tile.entry.aoi_id, row, col,
                         lr_patch, hr_patch, lr_anchor, tile.hr_anchor.shifted(hc_i, hr_i))
        pairs.append(score_pair(pair))
    if skipped:
        logging.info(f"{tile.entry.aoi_id}: пропущено {skipped} фрагментов без полного покрытия HR")
    return pairs


def quality_filter(pairs: Sequence[PatchPair], ssim_min: float = 0.45,
                   psnr_min: float = 21.0) -> Tuple[List[PatchPair], List[PatchPair]]:
    """
    Оставляет пары с ssim >= ssim_min и psnr >= psnr_min.

    Значения строго ниже порога удаляются, значения на пороге сохраняются.
    """
    kept, rejected = [], []
    for pair in pairs:
        if pair.ssim_score is None or pair.psnr_score is None:
            raise DatasetError(f"{pair.pair_id}: оценки качества не вычислены")
        if pair.ssim_score >= ssim_min and pair.psnr_score >= psnr_min:
            kept.append(pair)
        else:
            rejected.append(pair)
    return kept, rejected


@dataclass
class ManifestItem:
    pair_id: str
    aoi_id: str
    row: int
    col: int
    lr_path: str
    hr_path: str
    ssim: float
    psnr: Any
    lr_checksum: Optional[str] = None
    hr_checksum: Optional[str] = None


@dataclass
class DatasetManifest:
    """
    Манифест одной части разбиения.

    Пути фрагментов указаны относительно каталога манифеста.
    """

    split: str
    seed: int
    config_hash: str
    items: List[ManifestItem] = field(default_factory=list)
    lr_patch: int = 96
    hr_patch: int = 192
    sources: Dict[str, Dict[str, str]] = field(default_factory=dict)

    @property
    def pair_ids(self) -> List[str]:
        return [item.pair_id for item in self.items]

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def write(self, path: str) -> None:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8") as f:
            f.write(self.to_json())

    @classmethod
    def load(cls, path: str) -> "DatasetManifest":
        try:
            with open(path, "r", encoding="utf-8") as f:
                data = json.load(f)
            data["items"] = [ManifestItem(**item) for item in data["items"]]
            return cls(**data)
        except (OSError, json.JSONDecodeError, KeyError, TypeError) as e:
            raise DatasetError(f"Некорректный манифест {path}: {e}")


def split(pairs: Sequence[PatchPair], fractions: Sequence[float] = (0.72, 0.18, 0.10),
          seed: int = 42, chash: str = "", lr_patch: int = 96,
          hr_patch: int = 192) -> Dict[str, DatasetManifest]:
    """
    Детерминированное разбиение: пары упорядочиваются по pair_id и
    перемешиваются генератором numpy от seed.

    Размеры validation и test равны floor(f * N), остаток идет в train,
    так что 2082 пары при долях (0.72, 0.18, 0.10) дают 1500/374/208.
    """
    if not pairs:
        raise DatasetError("Нет пар для разбиения")
    if len(fractions) != 3 or any(f < 0 for f in fractions) or abs(sum(fractions) - 1.0) > 1e-9:
        raise DatasetError(f"Некорректные доли разбиения: {tuple(fractions)}")
    ordered = sorted(pairs, key=lambda p: p.pair_id)
    ids = [p.pair_id for p in ordered]
    if len(set(ids)) != len(ids):
        raise DatasetError("Повторяющиеся pair_id в наборе пар")

    n = len(ordered)
    n_val = int(math.floor(fractions[1] * n + 1e-9))
    n_test = int(math.floor(fractions[2] * n + 1e-9))
    n_train = n - n_val - n_test
    order = np.random.default_rng(seed).permutation(n)
    bounds = {"train": (0, n_train), "validation": (n_train, n_train + n_val),
              "test": (n_train + n_val, n)}

    manifests = {}
    for name in SPLITS:
        start, stop = bounds[name]
        chosen = sorted((ordered[i] for i in order[start:stop]), key=lambda p: p.pair_id)
        items = [ManifestItem(p.pair_id, p.aoi_id, p.row, p.col,
                              f"{name}/lr/{p.pair_id}.json", f"{name}/hr/{p.pair_id}.json",
                              p.ssim_score, p.psnr_score if math.isfinite(p.psnr_score or 0.0) else "inf")
                 for p in chosen]
        manifests[name] = DatasetManifest(name, seed, chash, items, lr_patch, hr_patch)
    return manifests


@dataclass
class TileSummary:
    aoi_id: str
    hr_capture_date: str
    lr_capture_date: str
    date_difference_days: int
    cloud_note: str
    notes: str
    n_pairs: int


@dataclass
class BuildSummary:
    tiles: List[TileSummary]
    total_pairs: int
    rejected: List[str]
    counts: Dict[str, int]
    lr_patch: int
    hr_patch: int
    seed: int
    config_hash: str

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    def format_table(self) -> str:
        """Сводка в виде таблиц: пары тайлов и разбиение набора."""
        lines = [f"{'AOI':<16} {'HR дата':<12} {'LR дата':<12} {'Δ, дн':>6} {'Пар':>6}  Облачность / примечания"]
        for t in self.tiles:
            note = "; ".join(x for x in (t.cloud_note, t.notes) if x)
            lines.append(f"{t.aoi_id:<16} {t.hr_capture_date:<12} {t.lr_capture_date:<12} "
                         f"{t.date_difference_days:>6} {t.n_pairs:>6}  {note}")
        lines.append("")
        lines.append(f"{'Часть':<12} {'Пар':>6}  LR {self.lr_patch}x{self.lr_patch} px, "
                     f"HR {self.hr_patch}x{self.hr_patch} px")
        for name in SPLITS:
            lines.append(f"{name:<12} {self.counts.get(name, 0):>6}")
        lines.append(f"{'отклонено':<12} {len(self.rejected):>6}")
        lines.append(f"{'всего':<12} {self.total_pairs:>6}")
        return "\n".join(lines)


def _process_entry(entry: TilePairingEntry, cfg: DatasetConfig) -> Tuple[RegisteredTile, List[PatchPair]]:
    tile = register_tile(entry, cfg)
    pairs = make_pairs(tile, cfg)
    logging.info(f"{entry.aoi_id}: {len(pairs)} пар фрагментов")
    return tile, pairs


def build_dataset(entries: Sequence[TilePairingEntry], out_dir: str, cfg: DatasetConfig,
                  seed: int = 42, workers: int = 1) -> BuildSummary:
    """
    Полный конвейер сборки набора; при одинаковых входах, конфигурации и
    seed манифесты совпадают побайтно.
    """
    if not entries:
        raise DatasetError("Пустой список пар тайлов")
    logging.info("=" * 50)
    logging.info(f"Сборка набора: {len(entries)} пар тайлов -> {out_dir}")
    chash = config_hash({"dataset": asdict(cfg), "seed": seed})

    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        results = list(pool.map(lambda e: _process_entry(e, cfg), entries))

    all_pairs = sorted((p for _, pairs in results for p in pairs), key=lambda p: p.pair_id)
    kept, rejected = quality_filter(all_pairs, cfg.ssim_min, cfg.psnr_min)
    logging.info(f"Фильтр качества: сохранено {len(kept)}, отклонено {len(rejected)} из {len(all_pairs)}")
    manifests = split(kept, cfg.fractions, seed, chash, cfg.lr_patch, cfg.hr_patch)

    out = Path(out_dir)
    by_id = {p.pair_id: p for p in kept}
    sources = {tile.entry.aoi_id: dict(tile.checksums) for tile, _ in results}
    for name, manifest in manifests.items():
        manifest.sources = sources
        for item in manifest.items:
            pair = by_id[item.pair_id]
            item.lr_checksum = write_srras(str(out / item.lr_path), pair.lr, pair.lr_anchor)
            item.hr_checksum = write_srras(str(out / item.hr_path), pair.hr, pair.hr_anchor)
        manifest.write(str(out / MANIFEST_TEMPLATE.format(split=name)))

    for pair in kept[:cfg.export_png]:
        write_png(str(out / "png" / f"{pair.pair_id}_lr.png"), pair.lr)
        write_png(str(out / "png" / f"{pair.pair_id}_hr.png"), pair.hr)

    summary = BuildSummary(
        tiles=[TileSummary(t.entry.aoi_id, t.entry.hr_capture_date, t.entry.lr_capture_date,
                           t.entry.date_difference_days, t.entry.cloud_note, t.entry.notes, len(p))
               for t, p in results],
        total_pairs=len(all_pairs),
        rejected=[p.pair_id for p in rejected],
        counts={name: len(m.items) for name, m in manifests.items()},
        lr_patch=cfg.lr_patch, hr_patch=cfg.hr_patch, seed=seed, config_hash=chash)
    with open(out / SUMMARY_FILE, "w", encoding="utf-8") as f:
        json.dump(summary.to_dict(), f, indent=2, sort_keys=True)
    logging.info(f"Разбиение: {summary.counts}")
    logging.info("=" * 50)
    return summary
