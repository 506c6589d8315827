# src/run_experiment.py
"""
Основной файл для запуска экспериментов выбора столбцов.
Подкоманды: gen-synthetic, run, report.
"""

import argparse
import sys
from pathlib import Path

# Добавляем корневую директорию в путь для импортов
sys.path.append(str(Path(__file__).parent.parent))

from dotenv import load_dotenv
from loguru import logger
from pydantic import ValidationError

from src.config.experiment import ExperimentConfig
from src.config.settings import get_settings
from src.core.errors import CSSError
from src.core.experiment import (
    format_summary_text,
    load_metrics,
    run_experiment,
    summarize,
    write_reports
)
from src.utils.datasets import gen_synthetic, save_matrix
from src.utils.logger import setup_logging

# Загрузка переменных окружения
load_dotenv()

# Флаги CLI, перекрывающие ключи ExperimentConfig
_CONFIG_FLAGS = {
    "mode": str,
    "k": int,
    "p": float,
    "dataset": str,
    "dataset_format": str,
    "synthetic_n": int,
    "batch_size": int,
    "coreset_size": int,
    "sketch_rows": int,
    "sketch_rows_factor": float,
    "servers": int,
    "shard_assignment": str,
    "t_prime": int,
    "embedding_rows": int,
    "embedding_sparsity": int,
    "delta": float,
    "greedy_pool_size": int,
    "coreset_delta": float,
    "irls_tol": float,
    "irls_max_iter": int,
    "output_dir": str,
    "workers": int,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="run_experiment",
        description="Потоковый и распределенный выбор столбцов в ℓp-норме"
    )
    parser.add_argument("--log-level", default=None, help="Уровень логгирования")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen-synthetic", help="Сгенерировать синтетическую матрицу")
    gen.add_argument("--n", type=int, required=True)
    gen.add_argument("--k", type=int, required=True)
    gen.add_argument("--out", required=True, help="Путь к файлу")
    gen.add_argument("--format", choices=["csv", "binary"], default="csv")

    run = sub.add_parser("run", help="Запустить эксперимент")
    run.add_argument("--config", default=None, help="JSON файл ExperimentConfig")
    run.add_argument("--algorithms", nargs="+", default=None)
    run.add_argument("--seeds", nargs="+", type=int, default=None)
    run.add_argument("--seed", type=int, default=None, help="Один seed (сокращение для --seeds)")
    run.add_argument("--header", action="store_true", default=None)
    run.add_argument("--transcripts", action="store_true", default=None)
    run.add_argument("--dense-sketch-accounting", action="store_true", default=None)
    run.add_argument("--rescale", action="store_true", default=None, help="Масштабировать левый фактор")
    run.add_argument("--dedup", action="store_true", default=None, help="Убрать повторные индексы")
    for name, kind in _CONFIG_FLAGS.items():
        run.add_argument(f"--{name.replace('_', '-')}", dest=name, type=kind, default=None)

    report = sub.add_parser("report", help="Пересчитать сводку из metrics.csv")
    report.add_argument("--metrics", required=True)
    report.add_argument("--out", default=None, help="Директория для сводки")
    report.add_argument("--irls-tol", type=float, default=1e-8)
    report.add_argument("--irls-max-iter", type=int, default=200)

    return parser


def config_from_args(args: argparse.Namespace) -> ExperimentConfig:
    """Конфигурация из файла с перекрытием флагами командной строки."""
    data = {}
    if args.config:
        data = ExperimentConfig.load(args.config).model_dump()

    overrides = {name: getattr(args, name) for name in _CONFIG_FLAGS}
    overrides.update({
        "algorithms": args.algorithms,
        "seeds": [args.seed] if args.seed is not None else args.seeds,
        "header": args.header,
        "transcripts": args.transcripts,
        "dense_sketch_accounting": args.dense_sketch_accounting,
        "rescale": args.rescale,
        "dedup": args.dedup,
    })
    data.update({key: value for key, value in overrides.items() if value is not None})
    return ExperimentConfig.model_validate(data)


def cmd_gen_synthetic(args: argparse.Namespace) -> int:
    A = gen_synthetic(args.n, args.k)
    save_matrix(A, args.out, args.format)
    print(f"✅ Матрица {A.shape[0]}×{A.shape[1]} сохранена: {args.out}")
    return 0


def cmd_run(args: argparse.Namespace) -> int:
    settings = get_settings()
    cfg = config_from_args(args)
    if args.output_dir is None and not args.config:
        cfg = cfg.model_copy(update={"output_dir": settings.output_dir})
    if args.workers is None and settings.workers > 1:
        cfg = cfg.model_copy(update={"workers": settings.workers})

    print("=" * 70)
    print("ВЫБОР СТОЛБЦОВ В ℓp-НОРМЕ")
    print(f"Режим: {cfg.mode} | k={cfg.k} | p={cfg.p} | алгоритмы: {', '.join(cfg.algorithms)}")
    print("=" * 70)

    rows, summary = run_experiment(cfg)
    paths = write_reports(rows, summary, cfg.output_dir, cfg.irls_tol, cfg.irls_max_iter)

    print("\n📊 СВОДКА")
    print("-" * 70)
    print(format_summary_text(summary, cfg.irls_tol, cfg.irls_max_iter))
    print(f"📁 Метрики: {paths['metrics']}")
    print(f"📁 Сводка: {paths['summary_txt']}")

    failed = sum(1 for row in rows if row.status != "ok")
    if failed:
        print(f"⚠️  Ячеек с ошибками: {failed}")
    return 0


def cmd_report(args: argparse.Namespace) -> int:
    rows = load_metrics(args.metrics)
    summary = summarize(rows)
    out = args.out or str(Path(args.metrics).parent)
    paths = write_reports([], summary, out, args.irls_tol, args.irls_max_iter)
    print(format_summary_text(summary, args.irls_tol, args.irls_max_iter))
    print(f"📁 Сводка: {paths['summary_txt']}")
    return 0


def main(argv=None) -> int:
    """Главная функция."""
    parser = build_parser()
    args = parser.parse_args(argv)

    settings = get_settings()
    setup_logging(args.log_level or settings.log_level, settings.log_file, settings.json_log_file)

    commands = {
        "gen-synthetic": cmd_gen_synthetic,
        "run": cmd_run,
        "report": cmd_report,
    }
    try:
        return commands[args.command](args)
    except (CSSError, ValidationError, OSError) as e:
        logger.error(f"Команда {args.command} завершилась ошибкой: {e}")
        print(f"❌ ОШИБКА: {e}")
        return 1


if __name__ == "__main__":
    sys.exit(main())
