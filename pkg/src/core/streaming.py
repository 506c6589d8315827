# src/core/streaming.py
"""
Однопроходный выбор столбцов в модели потока столбцов (merge-and-reduce)
и равномерный потоковый бейзлайн.
"""

from typing import Iterable, Iterator, Optional

import numpy as np
from loguru import logger
from pydantic import BaseModel, ConfigDict, Field

from .coreset import WeightedColumnSet, boosted_coreset_size, merge_coresets, reduce_to_coreset
from .css import CSSConfig, SelectionResult, select_from_coreset
from .errors import DimensionMismatchError, EmptyInputError, InvalidParameterError
from .memory_manager import LevelledCoresetStack
from .numerics import PNormLike, as_column_matrix, as_p
from .rng import derive_seed, make_generator
from .sketching import apply_sketch, experiment_sketch_rows, make_p_stable_sketch


class StreamingConfig(BaseModel):
    """Параметры потокового конвейера (по умолчанию r = 5k, t_c = 2k, t = ⌈0.5d⌉)."""
    model_config = ConfigDict(extra="forbid")

    batch_size: Optional[int] = Field(default=None, ge=1)
    coreset_size: Optional[int] = Field(default=None, ge=1)
    sketch_rows: Optional[int] = Field(default=None, ge=1)
    sketch_rows_factor: float = Field(default=0.5, gt=0.0)
    scale_c: float = Field(default=1.0, gt=0.0)
    coreset_delta: Optional[float] = Field(default=None, gt=0.0, lt=1.0)
    css: CSSConfig = Field(default_factory=CSSConfig)

    def resolve_batch_size(self, k: int) -> int:
        return self.batch_size or 5 * k

    def resolve_coreset_size(self, k: int, delta: Optional[float] = None) -> int:
        base = self.coreset_size or 2 * k
        return boosted_coreset_size(base, delta if delta is not None else self.coreset_delta)

    def resolve_sketch_rows(self, d: int) -> int:
        return self.sketch_rows or experiment_sketch_rows(d, self.sketch_rows_factor)


def create_stream_state(
    d: int,
    k: int,
    p: PNormLike,
    cfg: Optional[StreamingConfig] = None,
    seed: int = 0
) -> LevelledCoresetStack:
    """Начальное состояние потока: общий скетч и пустой стек коресетов."""
    p = as_p(p)
    cfg = cfg or StreamingConfig()
    if k < 1:
        raise InvalidParameterError(f"k должно быть ≥ 1, получено {k}")

    sketch = make_p_stable_sketch(
        cfg.resolve_sketch_rows(d), d, p, derive_seed(seed, "sketch"), cfg.scale_c
    )
    state = LevelledCoresetStack(
        sketch=sketch,
        batch_size=cfg.resolve_batch_size(k),
        coreset_size=cfg.resolve_coreset_size(k),
        seed=seed
    )
    logger.debug(
        f"Поток: d={d}, r={state.batch_size}, t_c={state.coreset_size}, t={sketch.t}"
    )
    return state


def _flush_batch(state: LevelledCoresetStack) -> None:
    batch = state.take_buffer()
    if batch is None:
        return
    batch_id = state.batches
    coreset = reduce_to_coreset(
        batch, state.coreset_size, derive_seed(state.seed, "coreset", 0, batch_id)
    )
    state.batches += 1
    state.push(coreset, 0)
    recursive_merge(state)


def stream_ingest(state: LevelledCoresetStack, column) -> LevelledCoresetStack:
    """
    Прием очередного столбца потока.

    Скетч столбца добавляется в M, оригинал в L. При заполнении партии
    она сжимается в коресет уровня 0 и запускается рекурсивное слияние.
    """
    column = np.asarray(column, dtype=np.float64).ravel()
    if column.size != state.d:
        raise DimensionMismatchError(
            f"Длина столбца ({column.size}) не совпадает с d={state.d}"
        )

    sketched = apply_sketch(state.sketch, column)[:, 0]
    state.append_to_buffer(sketched, column.copy(), state.seen)
    state.seen += 1

    if state.buffered_columns == state.batch_size:
        _flush_batch(state)
        state.record_quiescent()
    return state


def recursive_merge(state: LevelledCoresetStack) -> LevelledCoresetStack:
    """Пока два последних коресета на одном уровне, заменять их слиянием уровнем выше."""
    while state.last_two_share_level():
        right, level = state.pop()
        left, _ = state.pop()
        counter = state.next_merge_counter(level)
        merged = merge_coresets(
            left, right, state.coreset_size, derive_seed(state.seed, "merge", level, counter)
        )
        state.merge_count += 1
        state.push(merged, level + 1)
        logger.debug(f"Слияние на уровне {level} -> {level + 1}, уровни {state.levels}")
    return state


def stream_finalize(
    state: LevelledCoresetStack,
    k: int,
    css_cfg: Optional[CSSConfig] = None
) -> SelectionResult:
    """
    Завершение потока: сброс неполной партии, слияние и CSS на конкатенации
    всех оставшихся коресетов.

    Returns:
        SelectionResult с глобальными индексами и исходными столбцами A
    """
    if state.seen == 0:
        raise EmptyInputError("Поток пуст: нет ни одного столбца")
    css_cfg = css_cfg or CSSConfig()

    _flush_batch(state)
    combined = WeightedColumnSet.concat(state.stored_coresets())
    logger.info(
        f"Поток завершен: {state.seen} столбцов, уровни {state.levels}, "
        f"в коресетах {combined.cols} столбцов"
    )

    result = select_from_coreset(combined, k, css_cfg, state.seed)
    result.meta.update({
        "mode": "streaming",
        "space": state.space_report().model_dump()
    })
    return result


def stream_columns(A) -> Iterator[np.ndarray]:
    """Одноразовый итератор по столбцам матрицы."""
    A = as_column_matrix(A)
    for j in range(A.shape[1]):
        yield A[:, j]


def run_streaming(
    stream: Iterable,
    d: int,
    k: int,
    p: PNormLike,
    cfg: Optional[StreamingConfig] = None,
    seed: int = 0
) -> SelectionResult:
    """Полный проход: создание состояния, прием всех столбцов и завершение."""
    cfg = cfg or StreamingConfig()
    state = create_stream_state(d, k, p, cfg, seed)
    for column in stream:
        stream_ingest(state, column)
    return stream_finalize(state, k, cfg.css)


def select_offline(
    A,
    k: int,
    p: PNormLike,
    cfg: Optional[StreamingConfig] = None,
    seed: int = 0
) -> SelectionResult:
    """
    Офлайн-конвейер: скетч, один сильный коресет и k-CSS_{p,2}.

    Использует те же подпотоки seed, что и поток из одной партии.
    """
    p = as_p(p)
    cfg = cfg or StreamingConfig()
    A = as_column_matrix(A)
    d, n = A.shape
    if n == 0:
        raise EmptyInputError("Матрица не содержит столбцов")

    sketch = make_p_stable_sketch(
        cfg.resolve_sketch_rows(d), d, p, derive_seed(seed, "sketch"), cfg.scale_c
    )
    batch = WeightedColumnSet.from_columns(apply_sketch(sketch, A), A, np.arange(n), p)
    coreset = reduce_to_coreset(
        batch, cfg.resolve_coreset_size(k), derive_seed(seed, "coreset", 0, 0)
    )
    result = select_from_coreset(coreset, k, cfg.css, seed)
    result.meta["mode"] = "offline"
    return result


def uniform_streaming_baseline(stream: Iterable, k: int, seed: int) -> SelectionResult:
    """
    Равномерный потоковый бейзлайн: первые k столбцов сохраняются, каждый
    следующий с вероятностью 1/2 заменяет равномерно выбранный сохраненный.
    """
    if k < 1:
        raise InvalidParameterError(f"k должно быть ≥ 1, получено {k}")
    rng = make_generator(seed)
    kept_indices = []
    kept_columns = []

    index = -1
    for index, column in enumerate(stream):
        column = np.asarray(column, dtype=np.float64).ravel()
        if len(kept_indices) < k:
            kept_indices.append(index)
            kept_columns.append(column.copy())
        elif rng.random() < 0.5:
            slot = int(rng.integers(k))
            kept_indices[slot] = index
            kept_columns[slot] = column.copy()

    if index < 0:
        raise EmptyInputError("Поток пуст: нет ни одного столбца")

    return SelectionResult(
        indices=np.asarray(kept_indices, dtype=np.int64),
        left_factor=np.column_stack(kept_columns),
        meta={"algorithm": "uniform", "mode": "streaming", "seed": int(seed), "seen": index + 1}
    )
