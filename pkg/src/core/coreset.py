# src/core/coreset.py
"""
ℓp веса Льюиса, выборка по весам Льюиса и сильные ℓ_{p,2}-коресеты столбцов.

Коресет хранит перевзвешенные скетчированные столбцы и ссылки на исходные
(нескетчированные) столбцы вместе с их глобальными индексами.
"""

import io
import json
import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
import scipy.linalg
from loguru import logger

from .errors import DimensionMismatchError, EmptyInputError, InvalidParameterError
from .numerics import as_column_matrix, leverage_scores
from .rng import make_generator


@dataclass
class LewisWeights:
    """Веса Льюиса строк матрицы и диагностика итерации."""
    w: np.ndarray
    p: float
    residual: float
    iterations: int
    converged: bool
    ridge_used: bool = False

    @property
    def total(self) -> float:
        return float(np.sum(self.w))


def _check_lewis_p(p: float) -> float:
    p = float(p)
    if not 1.0 <= p <= 2.0:
        raise InvalidParameterError(f"Для весов Льюиса p должно лежать в [1, 2], получено {p}")
    return p


def lewis_fixed_point_residual(M: np.ndarray, w: np.ndarray, p: float) -> float:
    """max_i |w_i - ℓ_i(diag(w)^{1/2-1/p} M)|; строки с нулевым весом исключаются из масштаба."""
    scale = np.zeros_like(w)
    positive = w > 0
    scale[positive] = w[positive] ** (0.5 - 1.0 / p)
    scores = leverage_scores(M * scale[:, None])
    return float(np.max(np.abs(w - scores))) if w.size else 0.0


def lewis_weights(M, p: float, tol: float = 1e-8, max_iter: int = 100) -> LewisWeights:
    """
    ℓp веса Льюиса строк M итерацией неподвижной точки.

    Обновление: w_i ← (m_iᵀ (Mᵀ W^{1-2/p} M)⁻¹ m_i)^{p/2}, старт w = 1.
    Перед итерацией M заменяется на ее часть ранга r из thin SVD, поэтому
    матрица Грама невырождена и Σw = rank(M).

    Args:
        M: Матрица n×t (строки - объекты, например (SA)ᵀ)
        p: Показатель, 1 ≤ p ≤ 2
        tol: Порог максимального относительного изменения весов
        max_iter: Максимальное число итераций

    Returns:
        LewisWeights
    """
    p = _check_lewis_p(p)
    M = as_column_matrix(M, "M")
    n = M.shape[0]

    if p == 2.0:
        w = leverage_scores(M)
        return LewisWeights(w=w, p=p, residual=0.0, iterations=0, converged=True)

    if M.shape[1] == 0:
        return LewisWeights(w=np.zeros(n), p=p, residual=0.0, iterations=0, converged=True)

    U, s, _ = np.linalg.svd(M, full_matrices=False)
    if s[0] == 0.0:
        return LewisWeights(w=np.zeros(n), p=p, residual=0.0, iterations=0, converged=True)
    rank = int(np.sum(s > max(M.shape) * np.finfo(np.float64).eps * s[0]))
    R = U[:, :rank] * s[:rank]

    nonzero = np.linalg.norm(R, axis=1) > 0.0
    w = np.where(nonzero, 1.0, 0.0)
    ridge_used = False
    converged = False
    iterations = 0

    for iterations in range(1, max_iter + 1):
        scale = np.zeros(n)
        scale[nonzero] = w[nonzero] ** (1.0 - 2.0 / p)
        G = R.T @ (R * scale[:, None])

        try:
            factor = scipy.linalg.cho_factor(G)
        except scipy.linalg.LinAlgError:
            ridge = 1e-12 * np.trace(G)
            G = G + ridge * np.eye(rank)
            factor = scipy.linalg.cho_factor(G)
            if not ridge_used:
                logger.warning(f"Матрица Грама вырождена, добавлен ridge {ridge:.3e}")
            ridge_used = True

        tau = np.sum(R * scipy.linalg.cho_solve(factor, R.T).T, axis=1)
        w_new = np.where(nonzero, np.maximum(tau, 0.0) ** (p / 2.0), 0.0)

        change = np.max(np.abs(w_new - w) / np.maximum(w, np.finfo(np.float64).tiny))
        w = w_new
        logger.debug(f"Lewis итерация {iterations}: изменение {change:.3e}")
        if change < tol:
            converged = True
            break

    residual = lewis_fixed_point_residual(M, w, p)
    if not converged:
        logger.warning(
            f"Веса Льюиса не сошлись за {max_iter} итераций (остаток {residual:.3e})"
        )

    return LewisWeights(
        w=w,
        p=p,
        residual=residual,
        iterations=iterations,
        converged=converged,
        ridge_used=ridge_used
    )


def lewis_sample(M, lw: LewisWeights, t_c: int, seed: int) -> Tuple[np.ndarray, np.ndarray]:
    """
    t_c независимых выборок с вероятностями λ_i = w_i / Σw.

    Returns:
        (индексы, веса 1/(t_c·λ_i)^{1/p})
    """
    if t_c < 1:
        raise InvalidParameterError(f"Размер выборки t_c должен быть ≥ 1, получено {t_c}")
    M = as_column_matrix(M, "M")
    if lw.w.size != M.shape[0]:
        raise DimensionMismatchError(
            f"Число весов ({lw.w.size}) не совпадает с числом строк M ({M.shape[0]})"
        )

    total = lw.total
    if total <= 0.0:
        raise EmptyInputError("Все веса Льюиса нулевые, выборка невозможна")

    lam = lw.w / total
    rng = make_generator(seed)
    indices = rng.choice(lam.size, size=t_c, replace=True, p=lam)
    weights = 1.0 / (t_c * lam[indices]) ** (1.0 / lw.p)
    return indices, weights


@dataclass
class WeightedColumnSet:
    """
    Коресет: перевзвешенные скетчированные столбцы и исходные столбцы.

    sketched[:, j] = weights[j] · (скетч исходного столбца global_indices[j]).
    originals хранит исходные столбцы без перевзвешивания.
    """
    sketched: np.ndarray
    originals: np.ndarray
    global_indices: np.ndarray
    weights: np.ndarray
    p: float
    lineage: List[str] = field(default_factory=list)

    def __post_init__(self):
        self.global_indices = np.asarray(self.global_indices, dtype=np.int64)
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.validate()

    @classmethod
    def empty(cls, t: int, d: int, p: float) -> "WeightedColumnSet":
        return cls(
            sketched=np.zeros((t, 0)),
            originals=np.zeros((d, 0)),
            global_indices=np.zeros(0, dtype=np.int64),
            weights=np.zeros(0),
            p=p
        )

    @classmethod
    def from_columns(
        cls,
        sketched,
        originals,
        global_indices: Sequence[int],
        p: float
    ) -> "WeightedColumnSet":
        """Набор исходных (невзвешенных) столбцов: все веса равны 1."""
        sketched = np.asarray(sketched, dtype=np.float64)
        return cls(
            sketched=sketched,
            originals=np.asarray(originals, dtype=np.float64),
            global_indices=np.asarray(global_indices, dtype=np.int64),
            weights=np.ones(sketched.shape[1]),
            p=p
        )

    @property
    def cols(self) -> int:
        return int(self.sketched.shape[1])

    @property
    def sketch_rows(self) -> int:
        return int(self.sketched.shape[0])

    @property
    def d(self) -> int:
        return int(self.originals.shape[0])

    @property
    def word_count(self) -> int:
        """Слова: скетч и оригинал столбца плюс индекс и вес."""
        return self.cols * (self.sketch_rows + self.d + 2)

    def validate(self) -> None:
        """Проверка согласованности размеров и весов."""
        c = self.sketched.shape[1]
        if not (self.originals.shape[1] == c == self.global_indices.size == self.weights.size):
            raise DimensionMismatchError(
                f"Несогласованные размеры коресета: sketched={self.sketched.shape}, "
                f"originals={self.originals.shape}, indices={self.global_indices.size}, "
                f"weights={self.weights.size}"
            )
        if c and not (np.all(np.isfinite(self.weights)) and np.all(self.weights > 0)):
            raise InvalidParameterError("Веса коресета должны быть положительными и конечными")

    def subset(self, positions: np.ndarray, extra_weights: Optional[np.ndarray] = None) -> "WeightedColumnSet":
        """Столбцы на позициях positions, веса домножаются на extra_weights."""
        positions = np.asarray(positions, dtype=np.int64)
        factor = np.ones(positions.size) if extra_weights is None else np.asarray(extra_weights)
        return WeightedColumnSet(
            sketched=self.sketched[:, positions] * factor[None, :],
            originals=self.originals[:, positions],
            global_indices=self.global_indices[positions],
            weights=self.weights[positions] * factor,
            p=self.p,
            lineage=list(self.lineage)
        )

    @staticmethod
    def concat(sets: Sequence["WeightedColumnSet"]) -> "WeightedColumnSet":
        """Конкатенация коресетов по столбцам."""
        if not sets:
            raise EmptyInputError("Нечего конкатенировать: список коресетов пуст")
        first = sets[0]
        for other in sets[1:]:
            if other.p != first.p:
                raise InvalidParameterError(f"Разные p у коресетов: {first.p} и {other.p}")
            if other.sketch_rows != first.sketch_rows or other.d != first.d:
                raise DimensionMismatchError(
                    f"Разные размеры коресетов: ({first.sketch_rows}, {first.d}) "
                    f"и ({other.sketch_rows}, {other.d})"
                )
        lineage: List[str] = []
        for item in sets:
            lineage.extend(item.lineage)
        return WeightedColumnSet(
            sketched=np.hstack([item.sketched for item in sets]),
            originals=np.hstack([item.originals for item in sets]),
            global_indices=np.concatenate([item.global_indices for item in sets]),
            weights=np.concatenate([item.weights for item in sets]),
            p=first.p,
            lineage=lineage
        )

    def to_bytes(self) -> bytes:
        """Самоописывающая бинарная запись (npz)."""
        buffer = io.BytesIO()
        np.savez(
            buffer,
            sketched=self.sketched,
            originals=self.originals,
            global_indices=self.global_indices,
            weights=self.weights,
            p=np.array(self.p),
            lineage=np.array(json.dumps(self.lineage))
        )
        return buffer.getvalue()

    @classmethod
    def from_bytes(cls, data: bytes) -> "WeightedColumnSet":
        with np.load(io.BytesIO(data), allow_pickle=False) as record:
            return cls(
                sketched=record["sketched"],
                originals=record["originals"],
                global_indices=record["global_indices"],
                weights=record["weights"],
                p=float(record["p"]),
                lineage=json.loads(str(record["lineage"]))
            )


def boosted_coreset_size(t_c: int, delta: Optional[float] = None) -> int:
    """t_c·⌈log₂(1/δ)⌉ для вероятности неудачи δ; без δ возвращает t_c."""
    if t_c < 1:
        raise InvalidParameterError(f"t_c должно быть ≥ 1, получено {t_c}")
    if delta is None:
        return t_c
    if not 0.0 < delta < 1.0:
        raise InvalidParameterError(f"δ должно лежать в (0, 1), получено {delta}")
    return t_c * max(1, math.ceil(math.log2(1.0 / delta)))


def sample_coreset(source: WeightedColumnSet, t_c: int, seed: int) -> WeightedColumnSet:
    """
    Сильный коресет взвешенного набора: выборка t_c столбцов по весам
    Льюиса матрицы source.sketchedᵀ с возвращением.
    """
    if source.cols == 0:
        raise EmptyInputError("Коресет пустого набора столбцов не определен")

    lw = lewis_weights(source.sketched.T, source.p)
    if lw.total <= 0.0:
        logger.warning(
            f"Все {source.cols} скетчированных столбцов нулевые, используется равномерная выборка"
        )
        lw = LewisWeights(
            w=np.ones(source.cols), p=source.p, residual=0.0, iterations=0, converged=True
        )

    positions, weights = lewis_sample(source.sketched.T, lw, t_c, seed)
    result = source.subset(positions, weights)
    result.lineage.append(f"sample:{int(seed)}:{t_c}")
    return result


def build_strong_coreset(
    sketched,
    originals,
    global_indices: Sequence[int],
    p: float,
    t_c: int,
    seed: int
) -> WeightedColumnSet:
    """
    Сильный коресет столбцов по скетчированной матрице.

    Args:
        sketched: Скетч SA (t×n)
        originals: Исходные столбцы A (d×n)
        global_indices: Глобальные индексы столбцов
        p: Показатель нормы
        t_c: Число выборок (с повторениями)
        seed: Seed выборки

    Returns:
        WeightedColumnSet из t_c столбцов
    """
    sketched = np.asarray(sketched, dtype=np.float64)
    originals = np.asarray(originals, dtype=np.float64)
    if sketched.shape[1] != originals.shape[1]:
        raise DimensionMismatchError(
            f"Число столбцов скетча ({sketched.shape[1]}) и оригиналов ({originals.shape[1]}) различается"
        )
    source = WeightedColumnSet.from_columns(sketched, originals, global_indices, p)
    return sample_coreset(source, t_c, seed)


def reduce_to_coreset(source: WeightedColumnSet, t_c: int, seed: int) -> WeightedColumnSet:
    """Коресет размера t_c; набор не больше t_c столбцов возвращается без выборки."""
    if source.cols <= t_c:
        return source
    return sample_coreset(source, t_c, seed)


def merge_coresets(a: WeightedColumnSet, b: WeightedColumnSet, t_c: int, seed: int) -> WeightedColumnSet:
    """
    Коресет объединения двух коресетов.

    Индексы и оригиналы переносятся через выборку, веса перемножаются.
    """
    if a.p != b.p:
        raise InvalidParameterError(f"Разные p у коресетов: {a.p} и {b.p}")
    if a.sketch_rows != b.sketch_rows or a.d != b.d:
        raise DimensionMismatchError(
            f"Разные размеры коресетов: ({a.sketch_rows}, {a.d}) и ({b.sketch_rows}, {b.d})"
        )
    union = WeightedColumnSet.concat([a, b])
    merged = sample_coreset(union, t_c, seed)
    logger.debug(f"Слияние коресетов {a.cols} + {b.cols} -> {merged.cols}")
    return merged
