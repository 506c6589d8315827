"""
Настройка системы логгирования для экспериментов.
"""

import sys
from pathlib import Path
from typing import Optional

from loguru import logger

# Значение поля cell для записей вне ячейки эксперимента
_NO_CELL = "-"


def setup_logging(
    log_level: str = "INFO",
    log_file: str = "logs/css_experiments.log",
    json_log_file: Optional[str] = None
) -> None:
    """
    Настройка системы логгирования.

    Args:
        log_level: Уровень логгирования (DEBUG, INFO, WARNING, ERROR)
        log_file: Файл для текстовых логов
        json_log_file: Файл для структурированных логов (по записи JSON на строку)
    """
    Path(log_file).parent.mkdir(parents=True, exist_ok=True)

    logger.remove()  # Удаляем дефолтный handler
    logger.configure(extra={"cell": _NO_CELL})

    # Console handler
    logger.add(
        sys.stdout,
        level=log_level,
        format="<green>{time:HH:mm:ss}</green> | <level>{level: <8}</level> | <magenta>{extra[cell]}</magenta> | <cyan>{name}</cyan>:<cyan>{function}</cyan> - <level>{message}</level>",
        colorize=True
    )

    # File handler
    logger.add(
        log_file,
        level=log_level,
        format="{time:YYYY-MM-DD HH:mm:ss} | {level: <8} | {extra[cell]} | {name}:{function} - {message}",
        rotation="10 MB",
        retention="30 days"
    )

    if json_log_file:
        Path(json_log_file).parent.mkdir(parents=True, exist_ok=True)
        logger.add(json_log_file, level=log_level, serialize=True, rotation="10 MB")

    logger.info(f"Логгирование настроено. Уровень: {log_level}")


def cell_logger(mode: str, algorithm: str, seed: int):
    """Логгер с привязанной ячейкой эксперимента (режим/алгоритм/seed)."""
    return logger.bind(cell=f"{mode}/{algorithm}/{seed}")
