import argparse
import logging
import os
import sys
from dataclasses import replace
from typing import Dict, List, Optional

from src.config import DEFAULT_SEED, RunConfig, load_config
from src.errors import SrForgeError
from src.sr_cli import (PHASES, cmd_build_dataset, cmd_compare_figure, cmd_evaluate, cmd_infer,
                        cmd_train)

LOG_FILE = "srforge.log"


class ColoredFormatter(logging.Formatter):
    """Форматтер с цветным выводом для разных уровней логирования"""
    COLORS = {
        'DEBUG': '\033[37m',  # Серый
        'INFO': '\033[32m',  # Зеленый
        'WARNING': '\033[33m',  # Желтый
        'ERROR': '\033[31m',  # Красный
        'CRITICAL': '\033[41m'  # Красный фон
    }
    RESET = '\033[0m'

    def format(self, record):
        color = self.COLORS.get(record.levelname, self.RESET)
        record.levelname_colored = f"{color}{record.levelname:<8}{self.RESET}"
        return super().format(record)


def setup_logging(log_file: str = LOG_FILE, level: str = "INFO", clear: bool = False) -> None:
    """
    Настройка корневого логгера: файл с полным форматом и цветная консоль.

    Args:
        log_file: Путь к лог-файлу
        level: Уровень логирования консоли и файла
        clear: Очистить лог-файл перед запуском
    """
    logger = logging.getLogger()
    logger.setLevel(level)
    for handler in list(logger.handlers):
        logger.removeHandler(handler)

    if clear and os.path.exists(log_file):
        with open(log_file, 'w', encoding='utf-8') as f:
            f.write("")

    file_handler = logging.FileHandler(log_file, encoding='utf-8')
    file_handler.setFormatter(logging.Formatter(
        '%(asctime)s | %(levelname)-8s | %(message)s',
        datefmt='%Y-%m-%d %H:%M:%S'
    ))
    logger.addHandler(file_handler)

    console_handler = logging.StreamHandler()
    console_handler.setFormatter(ColoredFormatter('%(levelname_colored)s | %(message)s'))
    logger.addHandler(console_handler)


def parse_checkpoints(values: Optional[List[str]]) -> Dict[str, str]:
    """Разбирает повторяемый аргумент вида method=path."""
    checkpoints = {}
    for value in values or []:
        method, sep, path = value.partition("=")
        if not sep or not method or not path:
            raise argparse.ArgumentTypeError(f"Ожидается method=path, получено '{value}'")
        checkpoints[method] = path
    return checkpoints


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="srforge",
        description="Наборы пар, обучение и оценка моделей сверхразрешения x2 для ДЗЗ",
        formatter_class=argparse.ArgumentDefaultsHelpFormatter
    )
    parser.add_argument('--config', help="JSON-файл конфигурации")
    parser.add_argument('--seed', type=int,
                        help=f"Единственный источник случайности (по умолчанию {DEFAULT_SEED})")
    parser.add_argument('--log-level', default='INFO',
                        choices=['DEBUG', 'INFO', 'WARNING', 'ERROR', 'CRITICAL'],
                        help="Уровень логирования")
    parser.add_argument('--log-file', default=LOG_FILE, help="Путь к лог-файлу")
    parser.add_argument('--clear-logs', action='store_true', help="Очистить лог-файл перед запуском")
    sub = parser.add_subparsers(dest='command', required=True)

    p = sub.add_parser('build-dataset', help="Сборка набора пар LR/HR")
    p.add_argument('pairing_file', nargs='?', help="JSON-файл сопоставления тайлов")
    p.add_argument('-o', '--output', required=True, help="Каталог набора")
    p.add_argument('--synthetic', type=int, metavar='N', help="Сгенерировать N синтетических пар тайлов")
    p.add_argument('--synthetic-size', type=int, default=192, help="Сторона синтетического LR-тайла")
    p.add_argument('--export-png', type=int, metavar='N', help="Экспортировать N пар в PNG")

    p = sub.add_parser('train', help="Обучение модели")
    p.add_argument('manifest_dir', help="Каталог с manifest_train.json и manifest_validation.json")
    p.add_argument('--method', required=True, help="srcnn, srresnet, esrgan или real_esrgan")
    p.add_argument('--phase', choices=PHASES, default='pretrain')
    p.add_argument('-o', '--output', default='runs', help="Каталог запусков")
    p.add_argument('--pretrain-checkpoint', help="Контрольная точка предобучения для фазы gan")
    p.add_argument('--epochs', type=int, help="Число эпох (максимум для pretrain, всего для gan)")
    p.add_argument('--batch-size', type=int)
    p.add_argument('--checkpoint-every', type=int)

    p = sub.add_parser('evaluate', help="Оценка методов на тестовой выборке")
    p.add_argument('manifest', help="Манифест тестовой выборки")
    p.add_argument('--checkpoint', action='append', metavar='METHOD=PATH', help="Контрольная точка метода")
    p.add_argument('-o', '--output', default='evaluation', help="Каталог отчетов")
    p.add_argument('--no-lpips', action='store_true', help="Не вычислять LPIPS")

    p = sub.add_parser('infer', help="Увеличение растра")
    p.add_argument('input', help="Входной растр (SRRAS .json или PNG)")
    p.add_argument('-o', '--output', required=True, help="Выходной растр (.json или .png)")
    p.add_argument('--checkpoint', help="Каталог модели; без него бикубическое увеличение")
    p.add_argument('--tile', type=int)
    p.add_argument('--overlap', type=int)

    p = sub.add_parser('compare-figure', help="Сравнительная сетка фрагментов")
    p.add_argument('manifest', help="Манифест тестовой выборки")
    p.add_argument('--checkpoint', action='append', metavar='METHOD=PATH', help="Контрольная точка метода")
    p.add_argument('-n', '--n-patches', type=int, default=3)
    p.add_argument('-o', '--output', required=True, help="Выходной PNG")
    return parser


def effective_config(args: argparse.Namespace) -> RunConfig:
    """Конфигурация из файла с приоритетом флагов командной строки."""
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    if args.command == 'build-dataset':
        cfg = cfg.with_overrides("dataset", export_png=args.export_png)
    elif args.command == 'train':
        epochs_field = "pretrain_max_epochs" if args.phase == "pretrain" else "gan_total"
        cfg = cfg.with_overrides("schedule", **{epochs_field: args.epochs, "batch_size": args.batch_size,
                                                "checkpoint_every": args.checkpoint_every})
    elif args.command == 'evaluate' and args.no_lpips:
        cfg = cfg.with_overrides("eval", with_lpips=False)
    elif args.command == 'infer':
        cfg = cfg.with_overrides("infer", tile=args.tile, overlap=args.overlap)
    return cfg


def run_command(args: argparse.Namespace, cfg: RunConfig) -> None:
    if args.command == 'build-dataset':
        cmd_build_dataset(args.pairing_file, args.output, cfg, synthetic=args.synthetic,
                          synthetic_size=args.synthetic_size)
    elif args.command == 'train':
        cmd_train(args.manifest_dir, args.method, args.phase, args.output, cfg,
                  pretrain_checkpoint=args.pretrain_checkpoint)
    elif args.command == 'evaluate':
        cmd_evaluate(args.manifest, parse_checkpoints(args.checkpoint), args.output, cfg)
    elif args.command == 'infer':
        cmd_infer(args.checkpoint, args.input, args.output, cfg)
    elif args.command == 'compare-figure':
        cmd_compare_figure(args.manifest, parse_checkpoints(args.checkpoint), args.n_patches,
                           args.output, cfg)


def error_stage(error: Exception, command: str) -> str:
    if isinstance(error, SrForgeError) and error.stage != SrForgeError.stage:
        return error.stage
    return command


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    setup_logging(args.log_file, args.log_level, args.clear_logs)
    try:
        run_command(args, effective_config(args))
    except Exception as e:
        logging.error(f"Ошибка при выполнении {args.command}: {e}", exc_info=True)
        message = " ".join(str(e).split())
        print(f"srforge: error: stage={error_stage(e, args.command)}: {message}", file=sys.stderr)
        return 1
    return 0


if __name__ == '__main__':
    sys.exit(main())
