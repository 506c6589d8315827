# src/core/memory_manager.py
"""
Память потокового алгоритма: стек коресетов по уровням (merge-and-reduce),
буфер текущей партии и учет занимаемого пространства в словах.
"""

import json
import math
from collections import defaultdict
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np
from pydantic import BaseModel

from .coreset import WeightedColumnSet
from .sketching import PStableSketch


class SpaceReport(BaseModel):
    """Сводка по пространству, занятому за время потока."""
    peak_columns: int
    peak_words: int
    sketch_words: int
    merge_count: int
    final_list_length: int
    seen: int
    batches: int
    batch_size: int
    coreset_size: int

    @property
    def column_bound(self) -> int:
        """(⌈log₂(max(n/r, 1))⌉ + 1)·t_c + r."""
        ratio = max(self.seen / self.batch_size, 1.0)
        return (math.ceil(math.log2(ratio)) + 1) * self.coreset_size + self.batch_size


class LevelledCoresetStack:
    """
    Список (коресет, уровень) с убывающими уровнями и буфер партии.

    Между вызовами ingest на каждом уровне хранится не больше одного
    коресета, а буфер содержит меньше r столбцов.
    """

    def __init__(
        self,
        sketch: PStableSketch,
        batch_size: int,
        coreset_size: int,
        seed: int
    ):
        """
        Args:
            sketch: Общий p-устойчивый скетч t×d
            batch_size: Размер партии r
            coreset_size: Размер коресета t_c
            seed: Мастер-seed потока
        """
        self.sketch = sketch
        self.batch_size = batch_size
        self.coreset_size = coreset_size
        self.seed = seed
        self.p = sketch.p

        self.entries: List[Tuple[WeightedColumnSet, int]] = []

        # Буфер текущей партии: M (скетчи) и L (оригиналы)
        self.buffer_sketched: List[np.ndarray] = []
        self.buffer_originals: List[np.ndarray] = []
        self.buffer_indices: List[int] = []

        self.seen = 0
        self.batches = 0
        self.merge_count = 0
        self.merge_counters: Dict[int, int] = defaultdict(int)

        self.peak_columns = 0
        self.peak_words = 0
        # (число партий, число хранимых коресетов) в моменты покоя
        self.quiescent_history: List[Tuple[int, int]] = []

    @property
    def d(self) -> int:
        return self.sketch.d

    @property
    def t(self) -> int:
        return self.sketch.t

    @property
    def levels(self) -> List[int]:
        return [level for _, level in self.entries]

    @property
    def buffered_columns(self) -> int:
        return len(self.buffer_indices)

    @property
    def stored_columns(self) -> int:
        return sum(coreset.cols for coreset, _ in self.entries) + self.buffered_columns

    @property
    def stored_words(self) -> int:
        words = sum(coreset.word_count for coreset, _ in self.entries)
        return words + self.buffered_columns * (self.t + self.d + 1)

    def record_peak(self) -> None:
        self.peak_columns = max(self.peak_columns, self.stored_columns)
        self.peak_words = max(self.peak_words, self.stored_words)

    def record_quiescent(self) -> None:
        self.quiescent_history.append((self.batches, len(self.entries)))

    def append_to_buffer(self, sketched: np.ndarray, original: np.ndarray, index: int) -> None:
        self.buffer_sketched.append(sketched)
        self.buffer_originals.append(original)
        self.buffer_indices.append(index)
        self.record_peak()

    def take_buffer(self) -> Optional[WeightedColumnSet]:
        """Буфер как невзвешенный набор столбцов; буфер очищается."""
        if not self.buffer_indices:
            return None
        batch = WeightedColumnSet.from_columns(
            np.column_stack(self.buffer_sketched),
            np.column_stack(self.buffer_originals),
            self.buffer_indices,
            self.p
        )
        self.buffer_sketched.clear()
        self.buffer_originals.clear()
        self.buffer_indices.clear()
        return batch

    def push(self, coreset: WeightedColumnSet, level: int) -> None:
        self.entries.append((coreset, level))
        self.record_peak()

    def pop(self) -> Tuple[WeightedColumnSet, int]:
        return self.entries.pop()

    def last_two_share_level(self) -> bool:
        return len(self.entries) >= 2 and self.entries[-1][1] == self.entries[-2][1]

    def next_merge_counter(self, level: int) -> int:
        counter = self.merge_counters[level]
        self.merge_counters[level] += 1
        return counter

    def stored_coresets(self) -> List[WeightedColumnSet]:
        return [coreset for coreset, _ in self.entries]

    def space_report(self) -> SpaceReport:
        return SpaceReport(
            peak_columns=self.peak_columns,
            peak_words=self.peak_words,
            sketch_words=self.t * self.d,
            merge_count=self.merge_count,
            final_list_length=len(self.entries),
            seen=self.seen,
            batches=self.batches,
            batch_size=self.batch_size,
            coreset_size=self.coreset_size
        )

    def get_summary(self) -> Dict[str, object]:
        """Краткая сводка состояния для логов и отчетов."""
        return {
            "levels": self.levels,
            "buffered": self.buffered_columns,
            "stored_columns": self.stored_columns,
            "stored_words": self.stored_words,
            **self.space_report().model_dump()
        }

    def save_to_file(self, filepath: str) -> None:
        """Сохранение сводки по пространству в JSON."""
        Path(filepath).parent.mkdir(parents=True, exist_ok=True)
        with open(filepath, "w", encoding="utf-8") as f:
            json.dump(self.get_summary(), f, ensure_ascii=False, indent=2)
