# src/core/sketching.py
"""
p-устойчивые случайные величины, плотные p-устойчивые скетчи и разреженные
OSNAP-вложения.

Скетчи никогда не хранятся в сериализованном виде плотно: они восстанавливаются
из кортежа параметров (kind, rows, cols, p, s, seed, c).
"""

import math
from dataclasses import dataclass, field
from typing import Tuple, Union

import numpy as np
import scipy.sparse
from loguru import logger

from .errors import DimensionMismatchError, InvalidParameterError
from .numerics import PNormLike, as_column_matrix, as_p
from .rng import make_generator

SketchSpec = Tuple[str, int, int, float, int, int, float]

_HALF_PI = math.pi / 2.0


def cms_transform(p: float, theta, r):
    """
    Формула Chambers-Mallows-Stuck для симметричного p-устойчивого закона.

    X = sin(pθ) / cos(θ)^{1/p} · (cos(θ(1-p)) / ln(1/r))^{(1-p)/p}
    При p = 1 сводится к tan(θ).
    """
    theta = np.asarray(theta, dtype=np.float64)
    r = np.asarray(r, dtype=np.float64)
    head = np.sin(p * theta) / np.cos(theta) ** (1.0 / p)
    if p == 1.0:
        return head
    tail = (np.cos(theta * (1.0 - p)) / -np.log(r)) ** ((1.0 - p) / p)
    return head * tail


def _valid_draw(theta, r) -> np.ndarray:
    return (np.abs(theta) < _HALF_PI) & (r > 0.0)


def sample_p_stable(p: PNormLike, rng: np.random.Generator) -> float:
    """
    Одна стандартная p-устойчивая величина.

    Сначала извлекается θ ~ U[-π/2, π/2], затем r ~ U[0, 1). Граничные
    значения θ = ±π/2 и r = 0 перевыбираются.
    """
    p = as_p(p)
    while True:
        theta = rng.uniform(-_HALF_PI, _HALF_PI)
        r = rng.random()
        if _valid_draw(theta, r):
            return float(cms_transform(p, theta, r))


def sample_p_stable_array(p: PNormLike, rng: np.random.Generator, size) -> np.ndarray:
    """Массив i.i.d. стандартных p-устойчивых величин формы size."""
    p = as_p(p)
    theta = rng.uniform(-_HALF_PI, _HALF_PI, size=size)
    r = rng.random(size=size)

    bad = ~_valid_draw(theta, r)
    while np.any(bad):
        count = int(np.sum(bad))
        theta[bad] = rng.uniform(-_HALF_PI, _HALF_PI, size=count)
        r[bad] = rng.random(size=count)
        bad = ~_valid_draw(theta, r)

    return cms_transform(p, theta, r)


@dataclass(frozen=True)
class PStableSketch:
    """Плотный скетч t×d: c·X_ij / t^{1/p}, X_ij - i.i.d. p-устойчивые."""
    t: int
    d: int
    p: float
    seed: int
    scale_c: float = 1.0
    entries: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.t < 1 or self.d < 1:
            raise InvalidParameterError(f"Размеры скетча должны быть ≥ 1: t={self.t}, d={self.d}")
        p = as_p(self.p)
        X = sample_p_stable_array(p, make_generator(self.seed), (self.t, self.d))
        object.__setattr__(self, "entries", self.scale_c * X / self.t ** (1.0 / p))

    @property
    def shape(self) -> Tuple[int, int]:
        return self.t, self.d

    def to_spec(self) -> SketchSpec:
        return ("p-stable", self.t, self.d, float(self.p), 0, int(self.seed), float(self.scale_c))


@dataclass(frozen=True)
class SparseEmbedding:
    """
    OSNAP-вложение m×n: в каждом столбце ровно s ненулей ±1/√s
    в различных случайных строках.
    """
    m: int
    n: int
    s: int
    seed: int
    matrix: scipy.sparse.csc_matrix = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.m < 1 or self.n < 1:
            raise InvalidParameterError(f"Размеры вложения должны быть ≥ 1: m={self.m}, n={self.n}")
        if not 1 <= self.s <= self.m:
            raise InvalidParameterError(f"Разреженность s={self.s} должна лежать в [1, m={self.m}]")

        rng = make_generator(self.seed)
        rows = rng.random((self.m, self.n)).argsort(axis=0)[: self.s]
        signs = rng.integers(0, 2, size=(self.s, self.n)) * 2 - 1
        values = signs / math.sqrt(self.s)
        cols = np.broadcast_to(np.arange(self.n), (self.s, self.n))

        matrix = scipy.sparse.csc_matrix(
            (values.ravel(), (rows.ravel(), cols.ravel())),
            shape=(self.m, self.n)
        )
        object.__setattr__(self, "matrix", matrix)

    @property
    def shape(self) -> Tuple[int, int]:
        return self.m, self.n

    def to_spec(self) -> SketchSpec:
        return ("sparse", self.m, self.n, 0.0, self.s, int(self.seed), 1.0)


Sketch = Union[PStableSketch, SparseEmbedding, np.ndarray]


def make_p_stable_sketch(t: int, d: int, p: PNormLike, seed: int, scale_c: float = 1.0) -> PStableSketch:
    """Построение плотного p-устойчивого скетча, детерминированного по seed."""
    sketch = PStableSketch(t=t, d=d, p=as_p(p), seed=int(seed), scale_c=float(scale_c))
    logger.debug(f"p-устойчивый скетч {t}×{d} (p={sketch.p}, seed={seed}) построен")
    return sketch


def make_sparse_embedding(m: int, n: int, s: int, seed: int) -> SparseEmbedding:
    """Построение разреженного вложения m×n с s ненулями на столбец."""
    return SparseEmbedding(m=m, n=n, s=s, seed=int(seed))


def sketch_from_spec(spec: SketchSpec) -> Union[PStableSketch, SparseEmbedding]:
    """Восстановление скетча из кортежа (kind, rows, cols, p, s, seed, c)."""
    kind, rows, cols, p, s, seed, c = spec
    if kind == "p-stable":
        return make_p_stable_sketch(rows, cols, p, seed, c)
    if kind == "sparse":
        return make_sparse_embedding(rows, cols, s, seed)
    raise InvalidParameterError(f"Неизвестный тип скетча: {kind}")


def apply_sketch(S: Sketch, A) -> np.ndarray:
    """
    Точное произведение S·A.

    Args:
        S: PStableSketch, SparseEmbedding или явная матрица
        A: Матрица d×n (вектор трактуется как d×1)

    Returns:
        Матрица rows(S)×n
    """
    A = as_column_matrix(A)
    if isinstance(S, PStableSketch):
        dense = S.entries
    elif isinstance(S, SparseEmbedding):
        if S.n != A.shape[0]:
            raise DimensionMismatchError(
                f"Число столбцов вложения ({S.n}) не совпадает с числом строк A ({A.shape[0]})"
            )
        return np.asarray(S.matrix @ A)
    else:
        dense = np.asarray(S, dtype=np.float64)

    if dense.shape[1] != A.shape[0]:
        raise DimensionMismatchError(
            f"Число столбцов скетча ({dense.shape[1]}) не совпадает с числом строк A ({A.shape[0]})"
        )
    return dense @ A


def default_sketch_rows(n: int, d: int, k: int) -> int:
    """Библиотечное значение по умолчанию t = k·⌈log₂(nd)⌉²."""
    log_term = max(1, math.ceil(math.log2(max(2, n * d))))
    return k * log_term ** 2


def experiment_sketch_rows(d: int, factor: float = 0.5) -> int:
    """Экспериментальное значение t = ⌈factor·d⌉."""
    return max(1, math.ceil(factor * d))
