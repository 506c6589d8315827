"""
Воспроизводимые генераторы случайных чисел.

Все рандомизированные компоненты получают явный 64-битный seed. Подпотоки
выводятся из мастер-seed через SeedSequence, генератор - счетчиковый Philox.
"""

import zlib
from typing import Union

import numpy as np

Label = Union[int, str]


def _label_to_int(label: Label) -> int:
    if isinstance(label, (int, np.integer)):
        if label < 0:
            raise ValueError(f"Метка подпотока должна быть неотрицательной: {label}")
        return int(label)
    return zlib.crc32(str(label).encode("utf-8"))


def derive_seed(master: int, *labels: Label) -> int:
    """
    Детерминированный 64-битный seed подпотока.

    Args:
        master: Мастер-seed
        *labels: Путь подпотока, например ("coreset", 0, 3)

    Returns:
        Целое число в диапазоне [0, 2^64)
    """
    seq = np.random.SeedSequence(
        entropy=int(master),
        spawn_key=tuple(_label_to_int(label) for label in labels)
    )
    return int(seq.generate_state(1, dtype=np.uint64)[0])


def make_generator(seed: int, *labels: Label) -> np.random.Generator:
    """Генератор Philox для seed (и, опционально, подпотока labels)."""
    if labels:
        seed = derive_seed(seed, *labels)
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed))))
