"""
Совмещение HR- и LR-снимков одного участка местности.

Преобразование систем координат подключаемое: в комплекте тождественное,
аффинное и составное (цепочка аффинных). Датумные пересчеты вне области
ответственности проекта.
"""

import logging
import math
from abc import ABC, abstractmethod
from dataclasses import asdict, dataclass
from typing import Any, Dict, List, NamedTuple, Sequence, Tuple

import numpy as np

from src.errors import EmptyOverlapError, ShapeMismatchError
from src.raster.raster_core import Raster, sample_points


@dataclass(frozen=True)
class GeoAnchor:
    """
    Аффинная привязка сетки пикселей к карте.

    origin - координаты левого верхнего угла пикселя (0, 0);
    центр пикселя (col, row) лежит в origin + (col + 0.5, row + 0.5) * pixel_size.
    """

    origin_x: float
    origin_y: float
    pixel_size_x: float
    pixel_size_y: float
    crs_id: str

    def __post_init__(self):
        if self.pixel_size_x == 0 or self.pixel_size_y == 0:
            raise ValueError("Размер пикселя привязки не может быть нулевым")

    def pixel_to_world(self, cols: np.ndarray, rows: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        xs = self.origin_x + (np.asarray(cols, dtype=np.float64) + 0.5) * self.pixel_size_x
        ys = self.origin_y + (np.asarray(rows, dtype=np.float64) + 0.5) * self.pixel_size_y
        return xs, ys

    def world_to_pixel(self, xs: np.ndarray, ys: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        cols = (np.asarray(xs, dtype=np.float64) - self.origin_x) / self.pixel_size_x - 0.5
        rows = (np.asarray(ys, dtype=np.float64) - self.origin_y) / self.pixel_size_y - 0.5
        return cols, rows

    def bounds(self, width: int, height: int) -> Tuple[float, float, float, float]:
        """Охват сетки (xmin, ymin, xmax, ymax) по краям пикселей."""
        x1 = self.origin_x + width * self.pixel_size_x
        y1 = self.origin_y + height * self.pixel_size_y
        return (min(self.origin_x, x1), min(self.origin_y, y1),
                max(self.origin_x, x1), max(self.origin_y, y1))

    def shifted(self, col_offset: int, row_offset: int) -> "GeoAnchor":
        """Привязка фрагмента, начинающегося в пикселе (col_offset, row_offset)."""
        return GeoAnchor(origin_x=self.origin_x + col_offset * self.pixel_size_x,
                         origin_y=self.origin_y + row_offset * self.pixel_size_y,
                         pixel_size_x=self.pixel_size_x,
                         pixel_size_y=self.pixel_size_y,
                         crs_id=self.crs_id)

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "GeoAnchor":
        try:
            return cls(origin_x=float(data["origin_x"]), origin_y=float(data["origin_y"]),
                       pixel_size_x=float(data["pixel_size_x"]),
                       pixel_size_y=float(data["pixel_size_y"]),
                       crs_id=str(data["crs_id"]))
        except KeyError as e:
            raise ValueError(f"В привязке отсутствует поле {e}")
        except (TypeError, ValueError) as e:
            raise ValueError(f"Некорректная привязка: {e}")


class CoordinateTransform(ABC):
    """Прямое и обратное отображение точек между двумя системами координат."""

    source_crs: str
    target_crs: str

    @abstractmethod
    def forward(self, xs: np.ndarray, ys: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        ...

    @abstractmethod
    def inverse(self, xs: np.ndarray, ys: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        ...


class IdentityTransform(CoordinateTransform):
    def __init__(self, crs_id: str = "local"):
        self.source_crs = crs_id
        self.target_crs = crs_id

    def forward(self, xs, ys):
        return np.asarray(xs, dtype=np.float64), np.asarray(ys, dtype=np.float64)

    def inverse(self, xs, ys):
        return self.forward(xs, ys)


class AffineTransform(CoordinateTransform):
    """
    p' = M p + t.

    Args:
        matrix: Матрица 2x2
        offset: Сдвиг (tx, ty)
        source_crs: Идентификатор исходной СК
        target_crs: Идентификатор целевой СК
    """

    def __init__(self, matrix: Sequence[Sequence[float]], offset: Sequence[float],
                 source_crs: str, target_crs: str):
        self.matrix = np.asarray(matrix, dtype=np.float64).reshape(2, 2)
        self.offset = np.asarray(offset, dtype=np.float64).reshape(2)
        if abs(np.linalg.det(self.matrix)) < 1e-15:
            raise ValueError("Аффинная матрица вырождена")
        self.inverse_matrix = np.linalg.inv(self.matrix)
        self.source_crs = source_crs
        self.target_crs = target_crs

    def forward(self, xs, ys):
        xs, ys = np.asarray(xs, dtype=np.float64), np.asarray(ys, dtype=np.float64)
        m, t = self.matrix, self.offset
        return m[0, 0] * xs + m[0, 1] * ys + t[0], m[1, 0] * xs + m[1, 1] * ys + t[1]

    def inverse(self, xs, ys):
        xs = np.asarray(xs, dtype=np.float64) - self.offset[0]
        ys = np.asarray(ys, dtype=np.float64) - self.offset[1]
        m = self.inverse_matrix
        return m[0, 0] * xs + m[0, 1] * ys, m[1, 0] * xs + m[1, 1] * ys

    def inverted(self) -> "AffineTransform":
        return AffineTransform(self.inverse_matrix, -self.inverse_matrix @ self.offset,
                               self.target_crs, self.source_crs)

    @classmethod
    def rotation(cls, degrees: float, center: Tuple[float, float], crs_id: str) -> "AffineTransform":
        """Поворот вокруг точки center в пределах одной СК."""
        theta = math.radians(degrees)
        c, s = round(math.cos(theta), 15), round(math.sin(theta), 15)
        matrix = np.array([[c, -s], [s, c]])
        cx, cy = center
        offset = np.array([cx, cy]) - matrix @ np.array([cx, cy])
        return cls(matrix, offset, crs_id, crs_id)

    @classmethod
    def translation(cls, dx: float, dy: float, crs_id: str) -> "AffineTransform":
        return cls(np.eye(2), (dx, dy), crs_id, crs_id)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "AffineTransform":
        return cls(data["matrix"], data["offset"], data["source_crs"], data["target_crs"])


class ComposedTransform(CoordinateTransform):
    """Цепочка преобразований, применяемых по порядку."""

    def __init__(self, steps: List[CoordinateTransform]):
        if not steps:
            raise ValueError("Пустая цепочка преобразований")
        for a, b in zip(steps, steps[1:]):
            if a.target_crs != b.source_crs:
                raise ValueError(f"Несогласованная цепочка СК: {a.target_crs} -> {b.source_crs}")
        self.steps = list(steps)
        self.source_crs = steps[0].source_crs
        self.target_crs = steps[-1].target_crs

    def forward(self, xs, ys):
        for step in self.steps:
            xs, ys = step.forward(xs, ys)
        return xs, ys

    def inverse(self, xs, ys):
        for step in reversed(self.steps):
            xs, ys = step.inverse(xs, ys)
        return xs, ys


class ReprojectResult(NamedTuple):
    raster: Raster
    anchor: GeoAnchor
    valid_mask: np.ndarray


def reproject(r: Raster, anchor: GeoAnchor, t: CoordinateTransform,
              target_anchor: GeoAnchor, target_w: int, target_h: int) -> ReprojectResult:
    """
    Перепроецирование обратным отображением с бикубической выборкой.

    Центр каждого целевого пикселя переводится через t^-1 в пиксельные
    координаты источника. Пиксели вне охвата источника помечаются в маске
    как недействительные и заполняются нулем.

    Args:
        r: Исходный растр
        anchor: Привязка исходного растра (в СК t.source_crs)
        t: Преобразование из СК источника в СК цели
        target_anchor: Привязка целевой сетки (в СК t.target_crs)
        target_w: Ширина целевой сетки
        target_h: Высота целевой сетки

    Returns:
        Растр, привязка и маска действительных пикселей
    """
    if anchor.crs_id != t.source_crs or target_anchor.crs_id != t.target_crs:
        raise ValueError(
            f"Преобразование {t.source_crs}->{t.target_crs} не соответствует "
            f"привязкам {anchor.crs_id}->{target_anchor.crs_id}")

    rows, cols = np.mgrid[0:target_h, 0:target_w]
    wx, wy = target_anchor.pixel_to_world(cols, rows)
    sx, sy = t.inverse(wx, wy)
    src_cols, src_rows = anchor.world_to_pixel(sx, sy)

    valid = ((src_cols >= -0.5) & (src_cols <= r.width - 0.5)
             & (src_rows >= -0.5) & (src_rows <= r.height - 0.5))
    if not valid.any():
        raise EmptyOverlapError("Охват источника не пересекается с целевой сеткой")

    out = np.zeros((r.bands, target_h, target_w), dtype=np.float64)
    for b in range(r.bands):
        out[b][valid] = sample_points(r.data[b], src_cols[valid], src_rows[valid])

    invalid_count = int((~valid).sum())
    if invalid_count:
        logging.info(f"Перепроецирование: {invalid_count} пикселей вне охвата источника")
    gsd = abs(target_anchor.pixel_size_x) if r.gsd is not None else None
    return ReprojectResult(r.with_data(out, gsd=gsd), target_anchor, valid)


def _snap(edge: float) -> int:
    # округление к ближайшей границе пикселя с допуском на погрешность
    return int(math.floor(edge + 0.5 + 1e-9))


def _inner_edges(a: float, b: float) -> Tuple[int, int]:
    # целые границы пикселей внутри отрезка [min(a, b), max(a, b)]
    lo, hi = min(a, b), max(a, b)
    return int(math.ceil(lo - 1e-9)), int(math.floor(hi + 1e-9))


def intersect_and_crop(hr: Raster, hr_anchor: GeoAnchor,
                       lr: Raster, lr_anchor: GeoAnchor
                       ) -> Tuple[Tuple[Raster, GeoAnchor], Tuple[Raster, GeoAnchor]]:
    """
    Вырезает из HR и LR общий участок местности.

    Окно LR состоит только из пикселей, целиком лежащих в пересечении
    охватов. Окно HR начинается у ближайшей к началу окна LR границы
    пикселя HR и имеет размер окна LR, умноженный на отношение GSD, так что при
    целом отношении охваты фрагментов расходятся не более чем на половину
    пикселя HR.

    Returns:
        ((hr_crop, hr_anchor), (lr_crop, lr_anchor))
    """
    if hr_anchor.crs_id != lr_anchor.crs_id:
        raise ShapeMismatchError(
            f"Растры в разных СК: {hr_anchor.crs_id} и {lr_anchor.crs_id}; требуется reproject")

    hx0, hy0, hx1, hy1 = hr_anchor.bounds(hr.width, hr.height)
    lx0, ly0, lx1, ly1 = lr_anchor.bounds(lr.width, lr.height)
    ix0, iy0, ix1, iy1 = max(hx0, lx0), max(hy0, ly0), min(hx1, lx1), min(hy1, ly1)
    if ix1 <= ix0 or iy1 <= iy0:
        raise EmptyOverlapError("Охваты HR и LR не пересекаются")

    # пересечение в координатах краев пикселей LR
    c0, c1 = _inner_edges((ix0 - lr_anchor.origin_x) / lr_anchor.pixel_size_x,
                          (ix1 - lr_anchor.origin_x) / lr_anchor.pixel_size_x)
    r0, r1 = _inner_edges((iy0 - lr_anchor.origin_y) / lr_anchor.pixel_size_y,
                          (iy1 - lr_anchor.origin_y) / lr_anchor.pixel_size_y)
    c0, c1 = max(c0, 0), min(c1, lr.width)
    r0, r1 = max(r0, 0), min(r1, lr.height)
    if c1 <= c0 or r1 <= r0:
        raise EmptyOverlapError("Пересечение охватов не содержит ни одного целого пикселя LR")

    lr_crop_anchor = lr_anchor.shifted(c0, r0)
    lr_crop = lr.with_data(lr.data[:, r0:r1, c0:c1].copy())

    # начало окна LR в координатах краев пикселей HR
    start_x, start_y = lr_crop_anchor.origin_x, lr_crop_anchor.origin_y
    if hr_anchor.pixel_size_x * lr_anchor.pixel_size_x < 0:
        start_x += (c1 - c0) * lr_anchor.pixel_size_x
    if hr_anchor.pixel_size_y * lr_anchor.pixel_size_y < 0:
        start_y += (r1 - r0) * lr_anchor.pixel_size_y
    hc0 = _snap((start_x - hr_anchor.origin_x) / hr_anchor.pixel_size_x)
    hr0 = _snap((start_y - hr_anchor.origin_y) / hr_anchor.pixel_size_y)
    # при нецелом отношении GSD окно HR округляется вниз
    hw = int(math.floor((c1 - c0) * abs(lr_anchor.pixel_size_x / hr_anchor.pixel_size_x) + 1e-6))
    hh = int(math.floor((r1 - r0) * abs(lr_anchor.pixel_size_y / hr_anchor.pixel_size_y) + 1e-6))
    if hc0 < 0 or hr0 < 0 or hc0 + hw > hr.width or hr0 + hh > hr.height:
        raise ShapeMismatchError(
            f"Окно HR ({hc0}, {hr0}, {hw}x{hh}) выходит за пределы снимка {hr.width}x{hr.height}")

    hr_crop_anchor = hr_anchor.shifted(hc0, hr0)
    hr_crop = hr.with_data(hr.data[:, hr0:hr0 + hh, hc0:hc0 + hw].copy())
    logging.info(f"Общий участок: LR {c1 - c0}x{r1 - r0} px, HR {hw}x{hh} px")
    return (hr_crop, hr_crop_anchor), (lr_crop, lr_crop_anchor)


def transform_from_config(data: Dict[str, Any]) -> CoordinateTransform:
    """
    Создает преобразование из JSON-описания.

    Поддерживаются {"kind": "identity", "crs_id": ...},
    {"kind": "affine", "matrix": ..., "offset": ..., "source_crs": ..., "target_crs": ...}
    и {"kind": "composed", "steps": [...]}.
    """
    kind = data.get("kind")
    if kind == "identity":
        return IdentityTransform(data.get("crs_id", "local"))
    if kind == "affine":
        return AffineTransform.from_dict(data)
    if kind == "composed":
        return ComposedTransform([transform_from_config(step) for step in data["steps"]])
    raise ValueError(f"Неизвестный тип преобразования: {kind}")
