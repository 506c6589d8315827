# src/core/experiment.py
"""
Оркестрация экспериментов: запуск (алгоритм, seed) ячеек, метрики и отчеты.

Ошибка всегда оценивается по точной исходной матрице A, которую держит
харнесс, а не алгоритм.
"""

import csv
import math
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np
from loguru import logger
from pydantic import BaseModel, Field

from .coordinator import partition_columns, partition_from_assignment, load_assignment, run_protocol
from .css import uniform_column_sample
from .numerics import column_subset_lp_error, entrywise_lp_norm, svd_rank_k_error
from .rng import derive_seed, make_generator
from .streaming import run_streaming, select_offline, stream_columns, uniform_streaming_baseline
from ..config.experiment import ExperimentConfig
from ..utils.datasets import gen_synthetic, load_matrix
from ..utils.logger import cell_logger


class MetricsRow(BaseModel):
    """Результат одной ячейки (алгоритм, seed)."""
    mode: str
    algorithm: str
    seed: int
    status: str = "ok"
    err_ratio: Optional[float] = Field(default=None, ge=0.0)
    error_p: Optional[float] = Field(default=None, ge=0.0)
    wall_time: float = 0.0
    space_words: Optional[int] = None
    comm_words: Optional[int] = None
    selected: int = 0
    message: str = ""


class SummaryRow(BaseModel):
    """Среднее и стандартное отклонение по seed для одного алгоритма."""
    mode: str
    algorithm: str
    runs: int
    failed: int
    err_ratio_mean: Optional[float] = None
    err_ratio_std: Optional[float] = None
    wall_time_mean: Optional[float] = None
    words_mean: Optional[float] = None


def load_dataset(cfg: ExperimentConfig) -> np.ndarray:
    """Синтетическая матрица или матрица из файла по конфигурации."""
    if cfg.dataset == "synthetic":
        return gen_synthetic(cfg.synthetic_n, cfg.k)
    return load_matrix(cfg.dataset, cfg.dataset_format, header=cfg.header)


def _stream_permutation(n: int, seed: int) -> np.ndarray:
    return make_generator(seed, "permutation").permutation(n)


def _select(A: np.ndarray, cfg: ExperimentConfig, algorithm: str, seed: int) -> Tuple[np.ndarray, Dict]:
    """Выбор столбцов; возвращает глобальные индексы и учет ресурсов."""
    d, n = A.shape
    k = cfg.k

    if cfg.mode in ("streaming", "offline"):
        perm = _stream_permutation(n, seed)
        permuted = A[:, perm]
        if algorithm == "uniform":
            if cfg.mode == "streaming":
                result = uniform_streaming_baseline(
                    stream_columns(permuted), k, derive_seed(seed, "uniform")
                )
                return perm[result.indices], {"space_words": result.indices.size * (d + 1)}
            return uniform_column_sample(n, k, derive_seed(seed, "uniform")), {}

        stream_cfg = cfg.streaming_config(algorithm)
        if cfg.mode == "streaming":
            result = run_streaming(stream_columns(permuted), d, k, cfg.p, stream_cfg, seed)
            return perm[result.indices], {"space_words": result.meta["space"]["peak_words"]}
        result = select_offline(permuted, k, cfg.p, stream_cfg, seed)
        return perm[result.indices], {}

    # distributed
    if algorithm == "uniform":
        return uniform_column_sample(n, k, derive_seed(seed, "uniform")), {}

    if cfg.shard_assignment:
        shards = partition_from_assignment(A, load_assignment(cfg.shard_assignment), cfg.servers)
    else:
        shards = partition_columns(A, cfg.servers)

    protocol_cfg = cfg.protocol_config(algorithm).model_copy(update={"compute_errors": False})
    result, transcript = run_protocol(shards, k, cfg.p, protocol_cfg, seed)
    if cfg.transcripts:
        path = Path(cfg.output_dir) / "transcripts" / f"{algorithm}_seed{seed}.jsonl"
        transcript.to_logger(f"{algorithm}-{seed}").save_jsonl(str(path))
    return result.indices, {"comm_words": transcript.total_words}


def run_cell(A: np.ndarray, cfg: ExperimentConfig, algorithm: str, seed: int) -> MetricsRow:
    """Одна ячейка эксперимента; сбой записывается в строку, а не пробрасывается."""
    log = cell_logger(cfg.mode, algorithm, seed)
    norm_A = entrywise_lp_norm(A, cfg.p)
    row = MetricsRow(mode=cfg.mode, algorithm=algorithm, seed=seed)

    try:
        if algorithm == "svd":
            start = time.perf_counter()
            error = svd_rank_k_error(A, cfg.k, cfg.p)
            row.wall_time = time.perf_counter() - start
            row.selected = cfg.k
        else:
            start = time.perf_counter()
            indices, resources = _select(A, cfg, algorithm, seed)
            row.wall_time = time.perf_counter() - start
            row.selected = int(indices.size)
            row.space_words = resources.get("space_words")
            row.comm_words = resources.get("comm_words")
            error = column_subset_lp_error(
                A[:, indices], A, cfg.p, tol=cfg.irls_tol, max_iter=cfg.irls_max_iter
            )

        if not math.isfinite(error):
            raise FloatingPointError(f"Неконечная ошибка: {error}")

        row.error_p = float(error)
        row.err_ratio = float(error / norm_A) if norm_A > 0 else 0.0
        log.info(f"err_ratio={row.err_ratio:.6f}, время {row.wall_time:.3f} с")
    except Exception as e:
        row.status = "failed"
        row.message = f"{type(e).__name__}: {e}"
        log.error(f"Ячейка завершилась ошибкой: {e}")

    return row


def summarize(rows: List[MetricsRow]) -> List[SummaryRow]:
    """Сводка mean ± std (ddof=1 при двух и более запусках) по алгоритмам."""
    groups: Dict[Tuple[str, str], List[MetricsRow]] = {}
    for row in rows:
        groups.setdefault((row.mode, row.algorithm), []).append(row)

    summary = []
    for (mode, algorithm), group in groups.items():
        ok = [row for row in group if row.status == "ok" and row.err_ratio is not None]
        item = SummaryRow(mode=mode, algorithm=algorithm, runs=len(ok), failed=len(group) - len(ok))
        if ok:
            ratios = np.array([row.err_ratio for row in ok])
            item.err_ratio_mean = float(np.mean(ratios))
            item.err_ratio_std = float(np.std(ratios, ddof=1)) if ratios.size >= 2 else 0.0
            item.wall_time_mean = float(np.mean([row.wall_time for row in ok]))
            words = [
                row.space_words if row.space_words is not None else row.comm_words
                for row in ok
            ]
            words = [w for w in words if w is not None]
            item.words_mean = float(np.mean(words)) if words else None
        summary.append(item)
    return summary


def run_experiment(cfg: ExperimentConfig, A: Optional[np.ndarray] = None) -> Tuple[List[MetricsRow], List[SummaryRow]]:
    """
    Запуск всех ячеек (алгоритм, seed).

    Args:
        cfg: Конфигурация эксперимента
        A: Матрица (если не задана, загружается по cfg)

    Returns:
        (строки метрик в порядке алгоритмов и seed, сводка)
    """
    if A is None:
        A = load_dataset(cfg)
    logger.info(
        f"Эксперимент {cfg.mode}: матрица {A.shape[0]}×{A.shape[1]}, k={cfg.k}, p={cfg.p}, "
        f"алгоритмы {cfg.algorithms}, seeds {cfg.seeds}"
    )

    cells = [(algorithm, seed) for algorithm in cfg.algorithms for seed in cfg.seeds]
    if cfg.workers > 1:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            rows = list(pool.map(lambda cell: run_cell(A, cfg, *cell), cells))
    else:
        rows = [run_cell(A, cfg, algorithm, seed) for algorithm, seed in cells]

    return rows, summarize(rows)


def _format_value(value, digits: int = 6) -> str:
    if value is None:
        return "-"
    if isinstance(value, float):
        return f"{value:.{digits}f}"
    return str(value)


def format_summary_text(summary: List[SummaryRow], irls_tol: float, irls_max_iter: int) -> str:
    """Выровненная текстовая таблица сводки с заголовком о методе регрессии."""
    header = [
        f"# ℓp-регрессия для err_ratio: IRLS, tol={irls_tol:g}, max_iter={irls_max_iter}",
        ""
    ]
    columns = ["mode", "algorithm", "runs", "failed", "err_ratio_mean", "err_ratio_std",
               "wall_time_mean", "words_mean"]
    table = [columns] + [
        [_format_value(getattr(item, name)) for name in columns] for item in summary
    ]
    widths = [max(len(row[i]) for row in table) for i in range(len(columns))]
    lines = ["  ".join(cell.ljust(width) for cell, width in zip(row, widths)).rstrip() for row in table]
    return "\n".join(header + lines) + "\n"


def _write_csv(path: Path, models: List[BaseModel], fields: List[str]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=fields)
        writer.writeheader()
        for model in models:
            writer.writerow({
                key: ("" if value is None else value)
                for key, value in model.model_dump().items()
            })


def write_reports(
    rows: List[MetricsRow],
    summary: List[SummaryRow],
    output_dir: str,
    irls_tol: float = 1e-8,
    irls_max_iter: int = 200
) -> Dict[str, str]:
    """Запись metrics.csv, summary.csv и summary.txt."""
    out = Path(output_dir)
    out.mkdir(parents=True, exist_ok=True)

    paths = {
        "metrics": out / "metrics.csv",
        "summary_csv": out / "summary.csv",
        "summary_txt": out / "summary.txt"
    }
    if rows:
        _write_csv(paths["metrics"], rows, list(MetricsRow.model_fields))
    _write_csv(paths["summary_csv"], summary, list(SummaryRow.model_fields))
    paths["summary_txt"].write_text(
        format_summary_text(summary, irls_tol, irls_max_iter), encoding="utf-8"
    )
    logger.info(f"Отчеты сохранены в {out}")
    return {key: str(path) for key, path in paths.items()}


def load_metrics(path: str) -> List[MetricsRow]:
    """Чтение metrics.csv обратно в строки метрик."""
    rows = []
    with open(path, "r", encoding="utf-8", newline="") as f:
        for record in csv.DictReader(f):
            cleaned = {key: value for key, value in record.items() if value != ""}
            rows.append(MetricsRow.model_validate(cleaned))
    return rows


def affine_word_count(s: int, t_c: int, d: int, sketch_rows: int, selected: int, dense: bool = False) -> int:
    """Замкнутая формула числа слов протокола при n_i ≥ t_c на каждом сервере."""
    seed_words = sketch_rows * d if dense else 1
    return s * seed_words + s * t_c * (sketch_rows + d + 2) + s * selected * d


def certificate_error(n: int, k: int, p: float = 1.0) -> float:
    """Ошибка подмножества {первые k-1 столбцов единичного блока, один столбец единиц}."""
    A = gen_synthetic(n, k)
    subset = list(range(k - 1)) + [k]
    return column_subset_lp_error(A[:, subset], A, p)


def expected_svd_ratio(n: int, k: int) -> float:
    """n² / (k·n^{3/2} + n²) для синтетической матрицы при p = 1."""
    return n ** 2 / (k * n ** 1.5 + n ** 2)
