import numpy as np
import pytest

from src.errors import EmptyOverlapError, ShapeMismatchError
from src.geo.geo_register import (AffineTransform, ComposedTransform, GeoAnchor, IdentityTransform,
                                  intersect_and_crop, reproject, transform_from_config)
from src.raster.raster_core import Raster


def test_anchor_pixel_world_round_trip():
    anchor = GeoAnchor(100.0, 200.0, 5.0, -5.0, "local")
    xs, ys = anchor.pixel_to_world(np.array([0, 3]), np.array([0, 2]))
    assert xs.tolist() == [102.5, 117.5]
    assert ys.tolist() == [197.5, 187.5]
    cols, rows = anchor.world_to_pixel(xs, ys)
    assert cols.tolist() == [0.0, 3.0]
    assert rows.tolist() == [0.0, 2.0]


def test_anchor_bounds_and_shift():
    anchor = GeoAnchor(0.0, 0.0, 10.0, -10.0, "local")
    assert anchor.bounds(4, 3) == (0.0, -30.0, 40.0, 0.0)
    shifted = anchor.shifted(2, 1)
    assert (shifted.origin_x, shifted.origin_y) == (20.0, -10.0)


def test_anchor_from_dict_missing_field():
    with pytest.raises(ValueError):
        GeoAnchor.from_dict({"origin_x": 0.0})


def test_identity_reproject_is_exact():
    data = np.random.default_rng(0).uniform(size=(3, 16, 16))
    anchor = GeoAnchor(0.0, 0.0, 1.0, 1.0, "local")
    result = reproject(Raster(data), anchor, IdentityTransform("local"), anchor, 16, 16)
    assert np.max(np.abs(result.raster.data - data)) < 1e-12
    assert result.valid_mask.all()


def test_rotation_90_matches_index_permutation():
    """Поворот на 90° тестового узора равен перестановке индексов."""
    data = np.random.default_rng(1).uniform(size=(3, 32, 32))
    anchor = GeoAnchor(0.0, 0.0, 1.0, 1.0, "local")
    t = AffineTransform.rotation(90.0, (16.0, 16.0), "local")
    result = reproject(Raster(data), anchor, t, anchor, 32, 32)
    expected = np.rot90(data, k=-1, axes=(1, 2))
    assert np.max(np.abs(result.raster.data - expected)) < 1e-6
    assert result.valid_mask.all()


def test_translation_marks_uncovered_pixels_invalid():
    data = np.ones((1, 8, 8))
    anchor = GeoAnchor(0.0, 0.0, 1.0, 1.0, "local")
    t = AffineTransform.translation(3.0, 0.0, "local")
    result = reproject(Raster(data), anchor, t, anchor, 8, 8)
    assert not result.valid_mask[:, :3].any()
    assert result.valid_mask[:, 3:].all()
    assert np.all(result.raster.data[0][~result.valid_mask] == 0.0)


def test_reproject_disjoint_raises():
    anchor = GeoAnchor(0.0, 0.0, 1.0, 1.0, "local")
    target = GeoAnchor(1000.0, 1000.0, 1.0, 1.0, "local")
    with pytest.raises(EmptyOverlapError):
        reproject(Raster(np.ones((1, 4, 4))), anchor, IdentityTransform("local"), target, 4, 4)


def test_reproject_crs_mismatch():
    anchor = GeoAnchor(0.0, 0.0, 1.0, 1.0, "A")
    with pytest.raises(ValueError):
        reproject(Raster(np.ones((1, 4, 4))), anchor, IdentityTransform("B"), anchor, 4, 4)


def test_composed_transform_inverts():
    t = ComposedTransform([
        AffineTransform([[2.0, 0.0], [0.0, 2.0]], (1.0, 1.0), "A", "B"),
        AffineTransform.translation(-5.0, 3.0, "B"),
    ])
    xs, ys = t.forward(np.array([1.0, 2.0]), np.array([3.0, 4.0]))
    bx, by = t.inverse(xs, ys)
    assert np.allclose(bx, [1.0, 2.0]) and np.allclose(by, [3.0, 4.0])
    assert (t.source_crs, t.target_crs) == ("A", "B")


def test_composed_transform_rejects_broken_chain():
    with pytest.raises(ValueError):
        ComposedTransform([AffineTransform.translation(1, 1, "A"), AffineTransform.translation(1, 1, "B")])


def test_transform_from_config():
    t = transform_from_config({"kind": "affine", "matrix": [[1, 0], [0, 1]], "offset": [2, 3],
                               "source_crs": "A", "target_crs": "B"})
    xs, ys = t.forward(np.array([0.0]), np.array([0.0]))
    assert (xs[0], ys[0]) == (2.0, 3.0)
    assert isinstance(transform_from_config({"kind": "identity"}), IdentityTransform)
    with pytest.raises(ValueError):
        transform_from_config({"kind": "utm"})


def test_intersect_and_crop_snaps_to_lr_grid():
    hr = Raster(np.zeros((3, 40, 40)), gsd=5.0)
    lr = Raster(np.zeros((3, 30, 30)), gsd=10.0)
    hr_anchor = GeoAnchor(0.0, 0.0, 5.0, -5.0, "EPSG:32633")
    lr_anchor = GeoAnchor(10.0, 0.0, 10.0, -10.0, "EPSG:32633")
    (hr_crop, hr_crop_anchor), (lr_crop, lr_crop_anchor) = intersect_and_crop(hr, hr_anchor, lr, lr_anchor)
    assert (lr_crop.width, lr_crop.height) == (19, 20)
    assert (hr_crop.width, hr_crop.height) == (38, 40)
    assert hr_crop_anchor.origin_x == lr_crop_anchor.origin_x == 10.0


def _footprint(anchor: GeoAnchor, r: Raster):
    return anchor.bounds(r.width, r.height)


def test_intersect_and_crop_hr_origin_off_lr_grid(caplog):
    hr = Raster(np.random.default_rng(3).uniform(size=(3, 100, 100)), gsd=1.0)
    lr = Raster(np.zeros((3, 60, 60)), gsd=2.0)
    hr_anchor = GeoAnchor(1.2, 0.0, 1.0, -1.0, "local")
    lr_anchor = GeoAnchor(0.0, 0.0, 2.0, -2.0, "local")
    (hr_crop, hr_crop_anchor), (lr_crop, lr_crop_anchor) = intersect_and_crop(hr, hr_anchor, lr, lr_anchor)

    assert (hr_crop.width, hr_crop.height) == (2 * lr_crop.width, 2 * lr_crop.height)
    assert (lr_crop.width, lr_crop.height) == (49, 50)
    assert lr_crop_anchor.origin_x == 2.0
    assert np.array_equal(hr_crop.data, hr.data[:, 0:100, 1:99])
    assert not any(rec.levelname == "WARNING" for rec in caplog.records)


@pytest.mark.parametrize("hr_origin", [(0.0, 0.0), (1.2, -0.7), (3.9, 2.6), (-0.4, 0.45)])
def test_intersect_and_crop_footprints_agree(hr_origin):
    """Охваты фрагментов HR и LR совпадают с точностью до половины пикселя LR."""
    hr = Raster(np.zeros((1, 90, 80)), gsd=5.0)
    lr = Raster(np.zeros((1, 50, 50)), gsd=10.0)
    hr_anchor = GeoAnchor(hr_origin[0], hr_origin[1], 5.0, -5.0, "local")
    lr_anchor = GeoAnchor(-20.0, 30.0, 10.0, -10.0, "local")
    (hr_crop, hr_crop_anchor), (lr_crop, lr_crop_anchor) = intersect_and_crop(hr, hr_anchor, lr, lr_anchor)

    assert (hr_crop.width, hr_crop.height) == (2 * lr_crop.width, 2 * lr_crop.height)
    hr_bounds = _footprint(hr_crop_anchor, hr_crop)
    lr_bounds = _footprint(lr_crop_anchor, lr_crop)
    assert max(abs(a - b) for a, b in zip(hr_bounds, lr_bounds)) <= 5.0 + 1e-9
    # окно LR целиком лежит внутри снимка HR
    full = _footprint(hr_anchor, hr)
    assert lr_bounds[0] >= full[0] and lr_bounds[1] >= full[1]
    assert lr_bounds[2] <= full[2] and lr_bounds[3] <= full[3]


def test_intersect_and_crop_fractional_gsd_ratio_rounds_hr_down():
    (hr_crop, _), (lr_crop, _) = intersect_and_crop(
        Raster(np.zeros((3, 40, 40))), GeoAnchor(0, 0, 3, -3, "local"),
        Raster(np.zeros((3, 10, 10))), GeoAnchor(0, 0, 10, -10, "local"))
    assert (lr_crop.width, lr_crop.height) == (10, 10)
    assert (hr_crop.width, hr_crop.height) == (33, 33)


def test_reproject_round_trip_restores_interior():
    """Поворот на t и обратно через t^-1 восстанавливает внутренние пиксели."""
    n = 64
    rows, cols = np.mgrid[0:n, 0:n] / n
    data = np.stack([0.2 + 0.3 * cols + 0.2 * rows ** 2 + 0.1 * cols * rows,
                     0.5 - 0.2 * rows + 0.1 * cols ** 2,
                     0.3 + 0.1 * cols + 0.1 * rows])
    anchor = GeoAnchor(0.0, 0.0, 1.0, 1.0, "local")
    t = AffineTransform.rotation(30.0, (32.0, 32.0), "local")

    there = reproject(Raster(data), anchor, t, anchor, n, n)
    back = reproject(there.raster, anchor, t.inverted(), anchor, n, n)

    yy, xx = np.mgrid[0:n, 0:n] + 0.5
    interior = (xx - 32.0) ** 2 + (yy - 32.0) ** 2 <= 20.0 ** 2
    assert back.valid_mask[interior].all()
    assert np.max(np.abs(back.raster.data[:, interior] - data[:, interior])) < 1e-3


def test_affine_inverted_maps_points_back():
    t = AffineTransform([[2.0, 1.0], [0.0, 3.0]], (4.0, -1.0), "A", "B")
    inv = t.inverted()
    xs, ys = inv.forward(*t.forward(np.array([1.0, -2.0]), np.array([0.5, 7.0])))
    assert np.allclose(xs, [1.0, -2.0]) and np.allclose(ys, [0.5, 7.0])
    assert (inv.source_crs, inv.target_crs) == ("B", "A")


def test_intersect_and_crop_disjoint():
    hr_anchor = GeoAnchor(0.0, 0.0, 5.0, -5.0, "local")
    lr_anchor = GeoAnchor(5000.0, 0.0, 10.0, -10.0, "local")
    with pytest.raises(EmptyOverlapError):
        intersect_and_crop(Raster(np.zeros((3, 8, 8))), hr_anchor, Raster(np.zeros((3, 4, 4))), lr_anchor)


def test_intersect_and_crop_requires_same_crs():
    with pytest.raises(ShapeMismatchError):
        intersect_and_crop(Raster(np.zeros((3, 8, 8))), GeoAnchor(0, 0, 5, -5, "A"),
                           Raster(np.zeros((3, 4, 4))), GeoAnchor(0, 0, 10, -10, "B"))
