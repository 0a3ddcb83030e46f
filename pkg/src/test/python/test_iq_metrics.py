import json
import math

import numpy as np
import pytest

from src.errors import ShapeMismatchError
from src.metrics.iq_metrics import SsimParams, lpips, psnr, score_pairs, ssim
from src.metrics.metric_report import ItemMetrics, aggregate
from src.models.backbone import build_lpips_extractor
from src.raster.raster_core import Raster


def _psnr_oracle(a: np.ndarray, b: np.ndarray) -> float:
    mse = sum(float(x - y) ** 2 for x, y in zip(a.ravel(), b.ravel())) / a.size
    return 10.0 * math.log10(1.0 / mse)


def _ssim_oracle(a: np.ndarray, b: np.ndarray, window: int = 11, sigma: float = 1.5) -> float:
    """SSIM прямым перебором окон с двумерными гауссовыми весами."""
    c1, c2 = 0.01 ** 2, 0.03 ** 2
    r = window // 2
    g = np.exp(-np.arange(-r, r + 1) ** 2 / (2 * sigma * sigma))
    g /= g.sum()
    w2 = np.outer(g, g)
    values = []
    for band in range(a.shape[0]):
        scores = []
        for y in range(a.shape[1] - window + 1):
            for x in range(a.shape[2] - window + 1):
                pa = a[band, y:y + window, x:x + window]
                pb = b[band, y:y + window, x:x + window]
                mu_a, mu_b = np.sum(w2 * pa), np.sum(w2 * pb)
                var_a = np.sum(w2 * (pa - mu_a) ** 2)
                var_b = np.sum(w2 * (pb - mu_b) ** 2)
                cov = np.sum(w2 * (pa - mu_a) * (pb - mu_b))
                scores.append((2 * mu_a * mu_b + c1) * (2 * cov + c2)
                              / ((mu_a ** 2 + mu_b ** 2 + c1) * (var_a + var_b + c2)))
        values.append(np.mean(scores))
    return float(np.mean(values))


def test_psnr_closed_form():
    """MSE 0.01 при MAX 1 дает ровно 20 дБ."""
    a = Raster(np.zeros((3, 8, 8)))
    assert abs(psnr(a, Raster(np.full((3, 8, 8), 0.1))) - 20.0) < 1e-12
    assert psnr(a, Raster(np.full((3, 8, 8), 0.5))) == pytest.approx(6.0206, abs=1e-4)


def test_psnr_identical_is_infinite():
    a = Raster(np.full((1, 4, 4), 0.3))
    assert psnr(a, a) == float("inf")


def test_psnr_shape_mismatch():
    with pytest.raises(ShapeMismatchError):
        psnr(Raster(np.zeros((3, 4, 4))), Raster(np.zeros((3, 4, 5))))


def test_metrics_match_brute_force_oracles():
    rng = np.random.default_rng(11)
    for _ in range(200):
        a = rng.uniform(size=(3, 16, 16))
        b = np.clip(a + rng.normal(0.0, rng.uniform(0.01, 0.3), size=a.shape), 0.0, 1.0)
        assert abs(psnr(Raster(a), Raster(b)) - _psnr_oracle(a, b)) < 1e-8
        assert abs(ssim(Raster(a), Raster(b)) - _ssim_oracle(a, b)) < 1e-8


def test_ssim_identical_is_one():
    a = Raster(np.random.default_rng(2).uniform(size=(3, 16, 16)))
    assert ssim(a, a) == pytest.approx(1.0, abs=1e-12)


def test_ssim_constant_images():
    """Константы 1 и 0: SSIM = C1 / (1 + C1)."""
    c1 = 0.01 ** 2
    value = ssim(Raster(np.ones((3, 16, 16))), Raster(np.zeros((3, 16, 16))))
    assert value == pytest.approx(c1 / (1.0 + c1), abs=1e-10)


def test_ssim_rejects_small_image():
    with pytest.raises(ShapeMismatchError):
        ssim(Raster(np.zeros((3, 8, 8))), Raster(np.zeros((3, 8, 8))))


def test_ssim_params_validation():
    with pytest.raises(ValueError):
        SsimParams(window=10)
    assert SsimParams().weights_1d().sum() == pytest.approx(1.0)


def test_lpips_properties():
    extractor = build_lpips_extractor()
    rng = np.random.default_rng(4)
    a = Raster(rng.uniform(size=(3, 32, 32)))
    b = Raster(rng.uniform(size=(3, 32, 32)))
    assert lpips(a, a, extractor) == 0.0
    d_ab = lpips(a, b, extractor)
    assert d_ab > 0.0
    assert d_ab == pytest.approx(lpips(b, a, extractor), rel=1e-6)


def test_lpips_extractor_is_deterministic():
    a = Raster(np.random.default_rng(8).uniform(size=(3, 16, 16)))
    b = Raster(np.zeros((3, 16, 16)))
    assert lpips(a, b, build_lpips_extractor()) == lpips(a, b, build_lpips_extractor())


def test_score_pairs_without_lpips():
    a = Raster(np.zeros((3, 16, 16)))
    b = Raster(np.full((3, 16, 16), 0.1))
    scores = score_pairs([a], [b], with_lpips=False)
    assert scores[0]["psnr"] == pytest.approx(20.0)
    assert math.isnan(scores[0]["lpips"])


def test_aggregate_excludes_infinite_psnr():
    items = [ItemMetrics("a", 20.0, 0.5, 0.1), ItemMetrics("b", float("inf"), 1.0, 0.0),
             ItemMetrics("c", 30.0, 0.7, 0.3), ItemMetrics("d", 25.0, 0.9, 0.2)]
    report = aggregate(items, method="Bicubic")
    assert report.aggregates["psnr"]["mean"] == pytest.approx(25.0)
    assert report.aggregates["psnr"]["median"] == pytest.approx(25.0)
    assert report.aggregates["psnr"]["inf_count"] == 1
    assert report.aggregates["ssim"]["median"] == pytest.approx(0.8)
    assert report.aggregates["lpips"]["count"] == 4


def test_aggregate_empty():
    with pytest.raises(ValueError):
        aggregate([])


def test_report_files(tmp_path):
    report = aggregate([ItemMetrics("a", float("inf"), 1.0, 0.0)], method="SRCNN")
    report.write_csv(str(tmp_path / "r.csv"))
    report.write_json(str(tmp_path / "r.json"))
    assert "inf" in (tmp_path / "r.csv").read_text(encoding="utf-8")
    assert '"SRCNN"' in (tmp_path / "r.json").read_text(encoding="utf-8")


def _reject_constant(name):
    raise ValueError(f"недопустимая константа JSON: {name}")


def test_report_json_is_strict_without_lpips_and_finite_psnr(tmp_path):
    """Без LPIPS и при бесконечном PSNR у всех элементов JSON остается строгим."""
    nan, inf = float("nan"), float("inf")
    report = aggregate([ItemMetrics("a", inf, 1.0, nan), ItemMetrics("b", inf, 1.0, nan)], method="Bicubic")
    report.write_json(str(tmp_path / "r.json"))

    data = json.loads((tmp_path / "r.json").read_text(encoding="utf-8"), parse_constant=_reject_constant)
    assert data["aggregates"]["psnr"] == {"mean": "inf", "median": "inf", "count": 0, "inf_count": 2}
    assert data["aggregates"]["lpips"]["mean"] is None
    assert data["aggregates"]["lpips"]["median"] is None
    assert data["per_item"][0]["psnr_db"] == "inf"
    assert data["per_item"][0]["lpips"] is None
    assert math.isnan(report.aggregates["lpips"]["mean"])
