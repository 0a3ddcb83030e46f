import argparse
import json
import logging
import math

import numpy as np
import pytest

from src import main as cli
from src.errors import DatasetError, SrForgeError
from src.raster.raster_io import read_srras
from src.training.run_record import read_epochs

SMALL_CONFIG = {
    "seed": 3,
    "dataset": {"lr_patch": 24, "stride": 24, "histogram_bins": 64, "ssim_min": 0.0, "psnr_min": 0.0},
    "model": {"channels": 8, "n_rrdb": 1, "n_resblocks": 2, "disc_channels": 8},
    "schedule": {"pretrain_max_epochs": 2, "gan_total": 1, "batch_size": 4, "checkpoint_every": 1},
}


@pytest.fixture(autouse=True)
def restore_logging():
    """main() добавляет обработчики корневому логгеру; после теста закрываем их"""
    root = logging.getLogger()
    level = root.level
    yield
    for handler in list(root.handlers):
        if isinstance(handler, logging.FileHandler) or isinstance(handler.formatter, cli.ColoredFormatter):
            root.removeHandler(handler)
            handler.close()
    root.setLevel(level)


@pytest.fixture
def config_file(tmp_path):
    path = tmp_path / "config.json"
    path.write_text(json.dumps(SMALL_CONFIG, indent=2), encoding="utf-8")
    return str(path)


def _run(tmp_path, *argv) -> int:
    return cli.main(["--log-file", str(tmp_path / "srforge.log"), *argv])


def _diagnostics(err: str) -> list:
    # консольный лог тоже пишет в stderr
    return [line for line in err.splitlines() if line.startswith("srforge:")]


def test_parse_checkpoints():
    assert cli.parse_checkpoints(["srcnn=runs/a", "esrgan=b=c"]) == {"srcnn": "runs/a", "esrgan": "b=c"}
    assert cli.parse_checkpoints(None) == {}
    for bad in ("srcnn", "=path", "srcnn="):
        with pytest.raises(argparse.ArgumentTypeError):
            cli.parse_checkpoints([bad])


def test_effective_config_applies_flags(config_file):
    parser = cli.build_parser()
    args = parser.parse_args(["--config", config_file, "--seed", "9", "train", "data", "--method", "esrgan",
                              "--phase", "gan", "--epochs", "7", "--batch-size", "2"])
    cfg = cli.effective_config(args)
    assert cfg.seed == 9
    assert cfg.schedule.gan_total == 7 and cfg.schedule.batch_size == 2
    assert cfg.schedule.pretrain_max_epochs == 2
    assert cfg.model.channels == 8

    args = parser.parse_args(["--config", config_file, "train", "data", "--method", "srcnn", "--epochs", "4"])
    cfg = cli.effective_config(args)
    assert cfg.seed == 3 and cfg.schedule.pretrain_max_epochs == 4

    assert not cli.effective_config(parser.parse_args(["evaluate", "m.json", "--no-lpips"])).eval.with_lpips
    cfg = cli.effective_config(parser.parse_args(["infer", "in.json", "-o", "out.json", "--tile", "64",
                                                  "--overlap", "4"]))
    assert (cfg.infer.tile, cfg.infer.overlap) == (64, 4)


def test_usage_error_exits_with_code_2(tmp_path):
    with pytest.raises(SystemExit) as info:
        _run(tmp_path, "train", "data")
    assert info.value.code == 2


def test_error_is_reported_on_one_line(tmp_path, mocker, capsys):
    mocker.patch("src.main.cmd_evaluate", side_effect=DatasetError("нет данных\nв манифесте"))
    assert _run(tmp_path, "evaluate", "manifest_test.json") == 1
    assert _diagnostics(capsys.readouterr().err) == ["srforge: error: stage=dataset: нет данных в манифесте"]
    assert "Traceback" in (tmp_path / "srforge.log").read_text(encoding="utf-8")


@pytest.mark.parametrize("error", [RuntimeError("сбой"), SrForgeError("сбой")])
def test_unstaged_errors_use_command_name(tmp_path, mocker, capsys, error):
    mocker.patch("src.main.cmd_infer", side_effect=error)
    assert _run(tmp_path, "infer", "in.json", "-o", "out.json") == 1
    assert _diagnostics(capsys.readouterr().err) == ["srforge: error: stage=infer: сбой"]


def test_config_error_reports_field(tmp_path, capsys):
    path = tmp_path / "bad.json"
    path.write_text('{\n  "dataset": {\n    "lr_patch": "big"\n  }\n}', encoding="utf-8")
    assert _run(tmp_path, "--config", str(path), "evaluate", "m.json") == 1
    err = capsys.readouterr().err
    assert "stage=config" in err and "dataset.lr_patch" in err and "строка 3" in err


def test_build_dataset_requires_pairing_file(tmp_path, capsys):
    assert _run(tmp_path, "build-dataset", "-o", str(tmp_path / "data")) == 1
    assert "stage=dataset" in capsys.readouterr().err


def test_gan_phase_requires_pretrain_checkpoint(tmp_path, config_file, capsys):
    data = tmp_path / "data"
    assert _run(tmp_path, "--config", config_file, "build-dataset", "-o", str(data),
                "--synthetic", "3", "--synthetic-size", "48") == 0
    assert (data / "manifest_train.json").exists()
    capsys.readouterr()

    assert _run(tmp_path, "--config", config_file, "train", str(data), "--method", "esrgan",
                "--phase", "gan", "-o", str(tmp_path / "runs")) == 1
    diagnostics = _diagnostics(capsys.readouterr().err)
    assert len(diagnostics) == 1
    assert diagnostics[0].startswith("srforge: error: stage=train:") and "pretrain" in diagnostics[0]


def test_bicubic_is_not_trainable(tmp_path, capsys):
    assert _run(tmp_path, "train", str(tmp_path), "--method", "bicubic") == 1
    assert "stage=train" in capsys.readouterr().err


@pytest.mark.slow
def test_desk_scale_end_to_end(tmp_path, config_file, capsys):
    """Сборка синтетического набора, обе фазы обучения, оценка, вывод и сравнительная сетка"""
    data, runs = tmp_path / "data", tmp_path / "runs"
    assert _run(tmp_path, "--config", config_file, "build-dataset", "-o", str(data),
                "--synthetic", "3", "--synthetic-size", "48", "--export-png", "1") == 0
    assert _run(tmp_path, "--config", config_file, "train", str(data), "--method", "esrgan",
                "-o", str(runs)) == 0
    assert (runs / "esrgan" / "pretrain" / "best" / "model.srwt").exists()
    assert _run(tmp_path, "--config", config_file, "train", str(data), "--method", "esrgan",
                "--phase", "gan", "-o", str(runs)) == 0
    generator = runs / "esrgan" / "gan" / "last" / "generator"
    assert (generator / "model.json").exists()

    assert _run(tmp_path, "--config", config_file, "evaluate", str(data / "manifest_test.json"),
                "--checkpoint", f"esrgan={generator}", "--no-lpips", "-o", str(tmp_path / "eval")) == 0
    table = (tmp_path / "eval" / "table.txt").read_text(encoding="utf-8")
    assert "Bicubic" in table and "ESRGAN" in table

    lr_input = sorted((data / "test" / "lr").glob("*.json"))[0]
    assert _run(tmp_path, "--config", config_file, "infer", str(lr_input), "--checkpoint", str(generator),
                "-o", str(tmp_path / "sr.json")) == 0
    sr, anchor, _ = read_srras(str(tmp_path / "sr.json"))
    assert (sr.width, sr.height) == (48, 48)
    assert anchor is not None and abs(anchor.pixel_size_x) == 5.0
    assert float(np.min(sr.data)) >= 0.0 and float(np.max(sr.data)) <= 1.0

    assert _run(tmp_path, "--config", config_file, "compare-figure", str(data / "manifest_test.json"),
                "--checkpoint", f"esrgan={generator}", "-n", "1", "-o", str(tmp_path / "grid.png")) == 0
    assert (tmp_path / "grid.png").stat().st_size > 0


DESK_CONFIG = {
    "seed": 5,
    "dataset": {"lr_patch": 24, "stride": 24, "histogram_bins": 64, "ssim_min": 0.0, "psnr_min": 0.0},
    "model": {"channels": 16, "n_rrdb": 1, "n_resblocks": 2, "disc_channels": 8},
    "schedule": {"pretrain_lr0": 5e-4, "batch_size": 2, "checkpoint_every": 20},
}


def _finite_number(value) -> bool:
    # нечисловые значения сериализуются строками "inf"/"nan"
    return isinstance(value, (int, float)) and math.isfinite(value)


@pytest.mark.slow
def test_desk_scale_training_quality(tmp_path):
    """64 синтетические пары: снижение L1 при предобучении, 20 эпох GAN, выигрыш у Bicubic по PSNR"""
    config = tmp_path / "desk.json"
    config.write_text(json.dumps(DESK_CONFIG), encoding="utf-8")
    data, runs = tmp_path / "data", tmp_path / "runs"

    def run(*argv) -> None:
        assert _run(tmp_path, "--config", str(config), *argv) == 0, argv

    run("build-dataset", "-o", str(data), "--synthetic", "16", "--synthetic-size", "48")
    summary = json.loads((data / "summary.json").read_text(encoding="utf-8"))
    assert summary["total_pairs"] == 64

    for method, epochs in (("srcnn", "50"), ("srresnet", "200")):
        run("train", str(data), "--method", method, "--epochs", epochs, "-o", str(runs))
        pre_dir = runs / method / "pretrain"
        initial = json.loads((pre_dir / "run.json").read_text(encoding="utf-8"))["initial_val_l1"]
        first_50 = [line["val_l1"] for line in read_epochs(str(pre_dir))[:50]]
        assert min(first_50) < 0.5 * initial, method

    for method in ("esrgan", "real_esrgan"):
        run("train", str(data), "--method", method, "--epochs", "10", "-o", str(runs))
        run("train", str(data), "--method", method, "--phase", "gan", "--epochs", "20", "-o", str(runs))
        gan_dir = runs / method / "gan"
        assert json.loads((gan_dir / "run.json").read_text(encoding="utf-8"))["status"] == "completed"
        lines = read_epochs(str(gan_dir))
        assert len(lines) == 20
        for line in lines:
            assert all(_finite_number(v) for v in line["losses"].values()), line

    checkpoints = [f"{m}={runs / m / 'pretrain' / 'best'}" for m in ("srcnn", "srresnet")]
    checkpoints += [f"{m}={runs / m / 'gan' / 'last' / 'generator'}" for m in ("esrgan", "real_esrgan")]
    run("evaluate", str(data / "manifest_test.json"), *[a for c in checkpoints for a in ("--checkpoint", c)],
        "--no-lpips", "-o", str(tmp_path / "eval"))
    aggregates = json.loads((tmp_path / "eval" / "evaluation.json").read_text(encoding="utf-8"))["aggregates"]
    bicubic = aggregates["bicubic"]["psnr"]["mean"]
    trained = {m: aggregates[m]["psnr"]["mean"] for m in ("srcnn", "srresnet", "esrgan", "real_esrgan")}
    assert _finite_number(bicubic)
    assert any(_finite_number(v) and v > bicubic for v in trained.values()), (bicubic, trained)
