import logging

import numpy as np
import pytest

from src.errors import ShapeMismatchError
from src.raster.raster_core import (BoxKernelSpec, Histogram, Raster, bicubic_resample, box_filter,
                                    extract_patch_grid, histogram_match, keys_kernel, normalize,
                                    patch_count)


def _box_oracle(data: np.ndarray, n: int) -> np.ndarray:
    """Прямое усреднение окна с повторением краевых пикселей."""
    r = n // 2
    padded = np.pad(data, ((0, 0), (r, r), (r, r)), mode="edge")
    out = np.empty_like(data)
    for b in range(data.shape[0]):
        for y in range(data.shape[1]):
            for x in range(data.shape[2]):
                out[b, y, x] = padded[b, y:y + n, x:x + n].mean()
    return out


def _bicubic_oracle(data: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Прямая оценка сепарабельного ядра Keys для каждого выходного пикселя."""
    bands, h, w = data.shape
    out = np.zeros((bands, out_h, out_w))
    for i in range(out_h):
        sy = (i + 0.5) * h / out_h - 0.5
        for j in range(out_w):
            sx = (j + 0.5) * w / out_w - 0.5
            acc = np.zeros(bands)
            for ty in range(int(np.floor(sy)) - 1, int(np.floor(sy)) + 3):
                wy = keys_kernel(np.array(sy - ty))
                for tx in range(int(np.floor(sx)) - 1, int(np.floor(sx)) + 3):
                    wx = keys_kernel(np.array(sx - tx))
                    acc += wy * wx * data[:, min(max(ty, 0), h - 1), min(max(tx, 0), w - 1)]
            out[:, i, j] = acc
    return out


def test_raster_rejects_wrong_rank():
    """Растр должен иметь форму (bands, height, width)."""
    with pytest.raises(ShapeMismatchError):
        Raster(np.zeros((2, 2, 2, 2)))


def test_raster_is_immutable():
    r = Raster(np.zeros((3, 4, 4)))
    with pytest.raises(ValueError):
        r.data[0, 0, 0] = 1.0


def test_normalize_fixed_range_12_bit():
    r = Raster(np.full((3, 4, 4), 4095.0), nominal_bit_depth=12)
    out = normalize(r, "fixed-range")
    assert np.all(out.data == 1.0)
    assert np.all(r.data == 4095.0)


def test_normalize_fixed_range_clips_with_warning(caplog):
    caplog.set_level(logging.WARNING)
    r = Raster(np.full((1, 2, 2), 300.0), nominal_bit_depth=8)
    out = normalize(r)
    assert out.data.max() == 1.0
    assert any("обрезка" in rec.message for rec in caplog.records)


def test_normalize_minmax_constant_band():
    data = np.stack([np.arange(16.0).reshape(4, 4), np.full((4, 4), 7.0), np.arange(16.0).reshape(4, 4)])
    out = normalize(Raster(data), "per-image-minmax")
    assert out.data[0].min() == 0.0 and out.data[0].max() == 1.0
    assert np.all(out.data[1] == 0.0)
    assert out.metadata["constant_bands"] == [1]


def test_normalize_unknown_bit_depth():
    with pytest.raises(ValueError):
        normalize(Raster(np.zeros((1, 2, 2)), nominal_bit_depth=10))


def test_box_kernel_from_gsd():
    """0.2 м -> 5 м дает ядро 25x25."""
    assert BoxKernelSpec.from_gsd(0.2, 5.0).n == 25


@pytest.mark.parametrize("seed", range(3))
def test_box_filter_matches_direct_oracle(seed):
    rng = np.random.default_rng(seed)
    r = Raster(rng.uniform(size=(2, 64, 64)))
    out = box_filter(r, BoxKernelSpec(25))
    assert np.max(np.abs(out.data - _box_oracle(r.data, 25))) < 1e-9


def test_box_filter_preserves_constant():
    r = Raster(np.full((3, 64, 64), 0.37))
    out = box_filter(r, BoxKernelSpec(25))
    assert np.max(np.abs(out.data - 0.37)) < 1e-12


def test_box_filter_rejects_even_and_oversized_kernels():
    r = Raster(np.zeros((1, 8, 8)))
    with pytest.raises(ValueError):
        box_filter(r, BoxKernelSpec(4))
    with pytest.raises(ValueError):
        box_filter(r, BoxKernelSpec(9))


@pytest.mark.parametrize("target", [(32, 32), (128, 128), (50, 70)])
def test_bicubic_resample_matches_direct_oracle(target):
    rng = np.random.default_rng(7)
    r = Raster(rng.uniform(size=(2, 64, 64)))
    out = bicubic_resample(r, target[1], target[0])
    assert out.data.shape == (2, target[0], target[1])
    assert np.max(np.abs(out.data - _bicubic_oracle(r.data, target[0], target[1]))) < 1e-9


def test_bicubic_resample_preserves_constant():
    r = Raster(np.full((3, 64, 64), 0.61), gsd=5.0)
    out = bicubic_resample(r, 32, 32)
    assert np.max(np.abs(out.data - 0.61)) < 1e-12
    assert out.gsd == pytest.approx(10.0)


def test_bicubic_resample_identity_on_same_grid():
    rng = np.random.default_rng(3)
    r = Raster(rng.uniform(size=(3, 20, 20)))
    out = bicubic_resample(r, 20, 20)
    assert np.max(np.abs(out.data - r.data)) < 1e-12


def test_histogram_cdf_is_normalized():
    hist = Histogram.of(np.random.default_rng(0).uniform(size=1000), 16)
    assert hist.bin_count == 16
    assert hist.cdf[-1] == pytest.approx(1.0)
    assert np.all(np.diff(hist.cdf) >= 0)


def test_histogram_match_cdf_and_monotonicity():
    """CDF результата близка к эталонной на всех границах бинов, отображение монотонно."""
    bins = 16
    edges = np.linspace(0.0, 1.0, bins + 1)
    rng = np.random.default_rng(2024)
    for _ in range(100):
        source = rng.uniform(size=(3, 128, 128))
        u = rng.uniform(size=(3, 128, 128))
        # монотонное отображение [0, 1] на себя с плотностью не выше 1/0.95
        reference = u + 0.05 * np.sin(2 * np.pi * u) / (2 * np.pi)
        out = histogram_match(Raster(source), Raster(reference), bins=bins).data
        for b in range(3):
            out_cdf = np.array([np.mean(out[b] <= e) for e in edges])
            ref_cdf = np.array([np.mean(reference[b] <= e) for e in edges])
            assert np.max(np.abs(out_cdf - ref_cdf)) <= 2.0 / bins
            order = np.argsort(source[b], axis=None)
            assert np.all(np.diff(out[b].ravel()[order]) >= 0)


def test_histogram_match_constant_reference():
    out = histogram_match(Raster(np.random.default_rng(1).uniform(size=(1, 8, 8))),
                          Raster(np.full((1, 8, 8), 0.4)))
    assert np.all(out.data == 0.4)


def test_histogram_match_band_mismatch():
    with pytest.raises(ShapeMismatchError):
        histogram_match(Raster(np.zeros((3, 4, 4))), Raster(np.zeros((1, 4, 4))))


def test_patch_grid_counts_and_order():
    r = Raster(np.zeros((3, 960, 960)))
    patches = extract_patch_grid(r, 96, 96)
    assert len(patches) == 100
    assert patch_count(960, 960, 96, 96) == 100
    assert [(row, col) for row, col, _ in patches[:3]] == [(0, 0), (0, 96), (0, 192)]
    assert patches[-1][0] == 864 and patches[-1][1] == 864


def test_patch_grid_drops_partial_edges():
    r = Raster(np.zeros((1, 100, 130)))
    patches = extract_patch_grid(r, 32, 32)
    assert len(patches) == 3 * 4 == patch_count(130, 100, 32, 32)


def test_patch_grid_rejects_oversized_patch():
    with pytest.raises(ValueError):
        extract_patch_grid(Raster(np.zeros((1, 10, 10))), 11, 11)
