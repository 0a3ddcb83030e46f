import json

import numpy as np
import pytest
import torch
from PIL import ImageFont

from src.config import EvalConfig, InferConfig
from src.dataset.patch_dataset import PatchPairDataset
from src.dataset.synthetic import synthetic_patch_pairs
from src.errors import ConfigError, DatasetError, ShapeMismatchError
from src.evaluation.evaluator import (bicubic_outputs, evaluate_methods, format_table, method_order,
                                      method_outputs, report_for, write_reports)
from src.evaluation.inference import feather_weights, infer_raster, output_anchor, tile_starts
from src.evaluation.montage import (CAPTION_H, HEADER_H, MARGIN, MIN_CELL_W, caption, caption_font,
                                    render_montage, select_patches, write_montage)
from src.geo.geo_register import GeoAnchor
from src.models.model_zoo import ModelSpec, build_model, save_model, super_resolve
from src.raster.raster_core import Raster

NO_LPIPS = EvalConfig(with_lpips=False)


def _reject_constant(name):
    raise ValueError(f"недопустимая константа JSON: {name}")


def _strict_json(path):
    return json.loads(path.read_text(encoding="utf-8"), parse_constant=_reject_constant)


@pytest.fixture(scope="module")
def dataset():
    return PatchPairDataset(synthetic_patch_pairs(4, lr_size=16, seed=11))


def test_tile_starts():
    assert tile_starts(200, 96, 8) == [0, 88, 104]
    assert tile_starts(96, 96, 8) == [0]
    assert tile_starts(50, 96, 8) == [0]


def test_feather_weights():
    assert feather_weights(8, 4, True, False).tolist() == [0.125, 0.375, 0.625, 0.875, 1, 1, 1, 1]
    assert feather_weights(8, 4, False, True).tolist() == [1, 1, 1, 1, 0.875, 0.625, 0.375, 0.125]
    assert feather_weights(5, 0, True, True).tolist() == [1.0] * 5


def test_infer_config_validation():
    with pytest.raises(ConfigError):
        InferConfig(tile=16, overlap=8)
    with pytest.raises(ConfigError):
        InferConfig(tile=0)


def test_tiled_inference_has_no_seams_on_constant_input():
    raster = Raster(np.full((3, 200, 200), 0.4), gsd=10.0)
    out = infer_raster(None, None, raster, InferConfig(tile=96, overlap=8))
    assert out.data.shape == (3, 400, 400)
    assert out.gsd == 5.0
    assert np.max(np.abs(out.data - 0.4)) < 1e-6


def test_single_tile_inference_matches_direct_forward():
    spec = ModelSpec("esrgan_gen", channels=8, n_rrdb=1, growth=4, seed=2)
    model = build_model(spec)
    data = np.random.default_rng(4).uniform(size=(3, 40, 40)).astype(np.float32).astype(np.float64)
    out = infer_raster(model, spec, Raster(data), InferConfig(tile=96, overlap=8))
    with torch.no_grad():
        direct = super_resolve(model, spec, torch.from_numpy(data.astype(np.float32))[None])[0]
    assert np.max(np.abs(out.data - direct.double().numpy())) < 1e-6


def test_tiled_inference_close_to_untiled_on_smooth_input():
    yy, xx = np.mgrid[0:64, 0:64] / 64.0
    data = np.stack([0.5 + 0.2 * np.sin(2 * np.pi * xx), 0.5 + 0.2 * np.cos(2 * np.pi * yy), 0.3 + 0.3 * xx * yy])
    tiled = infer_raster(None, None, Raster(data), InferConfig(tile=32, overlap=8))
    untiled = infer_raster(None, None, Raster(data), InferConfig(tile=96, overlap=8))
    assert np.max(np.abs(tiled.data - untiled.data)) < 2e-3


def test_infer_rejects_non_rgb():
    with pytest.raises(ShapeMismatchError):
        infer_raster(None, None, Raster(np.zeros((4, 8, 8))))


def test_output_anchor_halves_pixel_size():
    anchor = output_anchor(GeoAnchor(10.0, 20.0, 10.0, -10.0, "EPSG:32633"), 2)
    assert (anchor.pixel_size_x, anchor.pixel_size_y) == (5.0, -5.0)
    assert (anchor.origin_x, anchor.origin_y) == (10.0, 20.0)
    assert output_anchor(None, 2) is None


def test_method_order():
    assert method_order({"real_esrgan", "bicubic", "srcnn"}) == ["bicubic", "srcnn", "real_esrgan"]
    with pytest.raises(ValueError):
        method_order(["vdsr"])


def test_bicubic_outputs_are_clipped(dataset):
    outputs = bicubic_outputs(dataset)
    assert len(outputs) == len(dataset)
    assert all(o.data.shape == (3, 32, 32) and o.data.min() >= 0.0 and o.data.max() <= 1.0 for o in outputs)


def test_method_outputs_requires_checkpoint(dataset):
    with pytest.raises(ValueError):
        method_outputs("srcnn", None, dataset, NO_LPIPS)


def test_evaluate_methods_with_checkpoint(tmp_path, dataset):
    spec = ModelSpec("srcnn", seed=1)
    save_model(str(tmp_path / "srcnn"), build_model(spec), spec)
    reports, outputs = evaluate_methods(dataset, {"srcnn": str(tmp_path / "srcnn")}, NO_LPIPS)
    assert list(reports) == ["bicubic", "srcnn"]
    assert reports["srcnn"].method == "SRCNN"
    assert len(outputs["srcnn"]) == 4
    assert [item.item_id for item in reports["bicubic"].per_item] == dataset.item_ids

    table = write_reports(reports, str(tmp_path / "eval"), seed=42)
    lines = table.splitlines()
    assert lines[0].index("Bicubic") < lines[0].index("SRCNN")
    assert lines[1].split() == ["mean", "median", "mean", "median"]
    assert [line.split()[0] for line in lines[2:]] == ["PSNR,", "SSIM", "LPIPS"]
    combined = _strict_json(tmp_path / "eval" / "evaluation.json")
    assert combined["methods"] == ["bicubic", "srcnn"] and combined["seed"] == 42
    assert combined["aggregates"]["srcnn"]["lpips"]["mean"] is None
    assert _strict_json(tmp_path / "eval" / "srcnn.json")["method"] == "SRCNN"
    assert (tmp_path / "eval" / "srcnn.csv").exists()
    assert (tmp_path / "eval" / "table.txt").read_text(encoding="utf-8") == table + "\n"


def test_evaluate_methods_empty_dataset():
    with pytest.raises(DatasetError):
        evaluate_methods(PatchPairDataset([]), {}, NO_LPIPS)


def test_format_table_values(dataset):
    reports, _ = evaluate_methods(dataset, {}, NO_LPIPS)
    agg = reports["bicubic"].aggregates["psnr"]
    assert f"{agg['mean']:.3f}" in format_table(reports).splitlines()[2]


def test_select_patches():
    chosen = select_patches(10, 3, seed=42)
    assert chosen == sorted(chosen) and len(set(chosen)) == 3
    assert chosen == select_patches(10, 3, seed=42)
    with pytest.raises(ValueError):
        select_patches(2, 3, seed=42)
    with pytest.raises(ValueError):
        select_patches(5, 0, seed=42)


def _montage_inputs(dataset):
    outputs = {name: bicubic_outputs(dataset) for name in ("bicubic", "srcnn", "srresnet", "esrgan")}
    reports = {name: report_for(name, outs, dataset, NO_LPIPS) for name, outs in outputs.items()}
    return outputs, reports


def test_montage_grid_size(dataset):
    outputs, reports = _montage_inputs(dataset)
    image = render_montage(dataset.hr_rasters, outputs, reports, [0, 2, 3])
    cell_w = max(MIN_CELL_W, 32)
    assert image.size == (MARGIN + 5 * (cell_w + MARGIN), HEADER_H + 3 * (32 + CAPTION_H + MARGIN) + MARGIN)
    assert image.getpixel((MARGIN, HEADER_H)) != (255, 255, 255)


def test_montage_caption_matches_report(dataset):
    _, reports = _montage_inputs(dataset)
    item = reports["srcnn"].per_item[1]
    assert caption(reports["srcnn"], 1) == f"{item.psnr_db:.2f} / {item.ssim:.3f} / nan"


def test_montage_png_is_deterministic(tmp_path, dataset):
    outputs, reports = _montage_inputs(dataset)
    for name in ("a.png", "b.png"):
        write_montage(str(tmp_path / name), render_montage(dataset.hr_rasters, outputs, reports, [1, 3]))
    assert (tmp_path / "a.png").read_bytes() == (tmp_path / "b.png").read_bytes()


def test_montage_uses_bitmap_font(mocker, dataset):
    truetype = mocker.patch("PIL.ImageFont.truetype", side_effect=AssertionError("FreeType"))
    font = caption_font()
    assert not isinstance(font, ImageFont.FreeTypeFont)
    left, top, right, bottom = font.getbbox("99.99 / 0.999 / 0.999")
    assert bottom - top < CAPTION_H and right > left
    outputs, reports = _montage_inputs(dataset)
    render_montage(dataset.hr_rasters, outputs, reports, [0])
    truetype.assert_not_called()
