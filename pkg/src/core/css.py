# src/core/css.py
"""
Подпрограммы k-CSS_{p,2}: регулярный бикритериальный выбор по весам Льюиса
и ленивый жадный выбор с функцией полезности Φ.
"""

import math
from dataclasses import dataclass, field
from typing import Any, Dict, List, Literal, Optional

import numpy as np
from loguru import logger
from pydantic import BaseModel, ConfigDict, Field, model_validator

from .coreset import LewisWeights, WeightedColumnSet, lewis_sample, lewis_weights
from .errors import InvalidParameterError
from .numerics import (
    PNormLike,
    as_column_matrix,
    as_p,
    lp2_norm,
    projection_cost_p2,
    pseudoinverse
)
from .rng import derive_seed, make_generator
from .sketching import apply_sketch, make_sparse_embedding

# Столбец с остатком меньше этой доли своей нормы считается лежащим в span
IN_SPAN_TOL = 1e-10
CANDIDATE_CHUNK = 256


class CSSConfig(BaseModel):
    """Параметры подпрограммы k-CSS_{p,2}."""
    model_config = ConfigDict(extra="forbid")

    algorithm: Literal["regular", "greedy"] = "regular"
    embedding_rows: Optional[int] = Field(default=None, ge=1, description="m; по умолчанию ⌈k/2⌉")
    embedding_sparsity: Optional[int] = Field(default=None, ge=1, description="s; по умолчанию m")
    t_prime: Optional[int] = Field(default=None, ge=1, description="Число выборок; по умолчанию k")
    rescale: bool = False
    dedup: bool = False
    output_count: Optional[int] = Field(default=None, ge=1, description="r для жадного выбора")
    delta: float = Field(default=0.1, gt=0.0, lt=1.0)
    pool_size: Optional[int] = Field(default=None, ge=1)

    @model_validator(mode="after")
    def _check_sparsity(self) -> "CSSConfig":
        if (
            self.embedding_rows is not None
            and self.embedding_sparsity is not None
            and self.embedding_sparsity > self.embedding_rows
        ):
            raise ValueError(
                f"Разреженность ({self.embedding_sparsity}) больше числа строк вложения ({self.embedding_rows})"
            )
        return self

    def resolve_embedding(self, k: int) -> tuple:
        m = self.embedding_rows or max(1, math.ceil(k / 2))
        s = self.embedding_sparsity or min(m, max(1, math.ceil(k / 2)))
        return m, s

    def resolve_t_prime(self, k: int) -> int:
        return self.t_prime or k

    def resolve_output_count(self, k: int) -> int:
        return self.output_count or k


@dataclass
class SelectionResult:
    """
    Выбранные столбцы, факторы и достигнутые ошибки.

    err_p2 и right_factor заполняются, только когда CSS вызван прямо на
    целевой матрице (regular_css_p2, greedy_css_p2). Выбор по коресету
    (поток, протокол, офлайн-конвейер) не видит A целиком: там err_p2
    равно None, а ошибка на коресете лежит в meta["coreset_err_p2"].
    """
    indices: np.ndarray
    left_factor: np.ndarray
    right_factor: Optional[np.ndarray] = None
    err_p2: Optional[float] = None
    err_p: Optional[float] = None
    meta: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        self.indices = np.asarray(self.indices, dtype=np.int64)
        if self.indices.size != self.left_factor.shape[1]:
            raise InvalidParameterError(
                f"Число индексов ({self.indices.size}) не совпадает с числом столбцов U "
                f"({self.left_factor.shape[1]})"
            )

    def to_record(self) -> Dict[str, Any]:
        """Запись для отчета: индексы, ошибки, параметры, seed."""
        return {
            "indices": [int(i) for i in self.indices],
            "err_p2": self.err_p2,
            "err_p": self.err_p,
            "meta": {
                key: value for key, value in self.meta.items()
                if isinstance(value, (str, int, float, bool, list, dict, type(None)))
            }
        }


def _finish_selection(
    A: np.ndarray,
    indices: np.ndarray,
    U: np.ndarray,
    p: float,
    meta: Dict[str, Any]
) -> SelectionResult:
    V = pseudoinverse(U) @ A
    return SelectionResult(
        indices=indices,
        left_factor=U,
        right_factor=V,
        err_p2=projection_cost_p2(U, A, p),
        meta=meta
    )


def _check_k(k: int, n: int) -> None:
    if not 1 <= k <= n:
        raise InvalidParameterError(f"k должно лежать в [1, n={n}], получено {k}")


def regular_css_p2(
    A,
    k: int,
    p: PNormLike,
    cfg: Optional[CSSConfig] = None,
    seed: int = 0
) -> SelectionResult:
    """
    Бикритериальный k-CSS_{p,2}: выборка t′ столбцов A по ℓp весам Льюиса
    столбцов разреженно вложенной матрицы SA.

    Индексы всегда ссылаются на настоящие столбцы A; повторы сохраняются,
    если не включен dedup. V = U⁺A, err_p2 вычисляется точно.
    """
    p = as_p(p)
    cfg = cfg or CSSConfig()
    A = as_column_matrix(A)
    d, n = A.shape
    _check_k(k, n)

    m, s = cfg.resolve_embedding(k)
    t_prime = cfg.resolve_t_prime(k)

    S = make_sparse_embedding(m, d, s, derive_seed(seed, "embedding"))
    SA = apply_sketch(S, A)

    lw = lewis_weights(SA.T, p)
    if lw.total <= 0.0:
        logger.warning("Вложенная матрица нулевая, выборка столбцов равномерная")
        lw = LewisWeights(w=np.ones(n), p=p, residual=0.0, iterations=0, converged=True)

    indices, weights = lewis_sample(SA.T, lw, t_prime, derive_seed(seed, "sample"))

    if cfg.dedup:
        _, first = np.unique(indices, return_index=True)
        keep = np.sort(first)
        indices, weights = indices[keep], weights[keep]

    U = A[:, indices]
    if cfg.rescale:
        U = U * weights[None, :]

    meta = {
        "algorithm": "regular",
        "seed": int(seed),
        "k": int(k),
        "p": p,
        "embedding_rows": m,
        "embedding_sparsity": s,
        "t_prime": t_prime,
        "rescale": cfg.rescale,
        "dedup": cfg.dedup,
        "lewis_converged": lw.converged
    }
    result = _finish_selection(A, indices, U, p, meta)
    logger.debug(f"Регулярный CSS: {indices.size} столбцов, err_p2={result.err_p2:.6g}")
    return result


@dataclass
class GreedyUtilityState:
    """Состояние жадного выбора: T, базис span(A_T) и остатки столбцов."""
    selected: List[int]
    Q: np.ndarray
    residual: np.ndarray
    res_sq: np.ndarray
    total: float
    p: float

    @property
    def residual_norms(self) -> np.ndarray:
        return np.sqrt(self.res_sq)

    @property
    def cost(self) -> float:
        """||A - π_T A||_{p,2}^p."""
        return float(np.sum(self.res_sq ** (self.p / 2.0)))

    @property
    def phi(self) -> float:
        return self.total - self.cost

    @property
    def err_p2(self) -> float:
        return self.cost ** (1.0 / self.p)


class GreedySelector:
    """
    Ленивый жадный выбор столбцов.

    На каждом шаге из невыбранных столбцов без возвращения выбирается пул
    из ⌈(n/k)·ln(1/δ)⌉ кандидатов, и добавляется кандидат с минимальной
    точной стоимостью проекции (при равенстве - меньший индекс).
    """

    def __init__(
        self,
        A,
        k: int,
        p: PNormLike,
        delta: float = 0.1,
        pool_size: Optional[int] = None,
        seed: int = 0
    ):
        self.A = as_column_matrix(A)
        self.p = as_p(p)
        d, n = self.A.shape
        _check_k(k, n)
        if not 0.0 < delta < 1.0:
            raise InvalidParameterError(f"δ должно лежать в (0, 1), получено {delta}")

        self.k = k
        self.seed = seed
        self.pool_size = pool_size or max(1, math.ceil((n / k) * math.log(1.0 / delta)))
        self.rng = make_generator(seed)
        self.column_norms = np.linalg.norm(self.A, axis=0)
        self.exhausted = False

        res_sq = self.column_norms ** 2
        self.state = GreedyUtilityState(
            selected=[],
            Q=np.zeros((d, 0)),
            residual=self.A.copy(),
            res_sq=res_sq,
            total=float(np.sum(res_sq ** (self.p / 2.0))),
            p=self.p
        )
        self.phi_history: List[float] = [0.0]
        self.err_history: List[float] = [self.state.err_p2]

    def candidate_costs(self, pool: np.ndarray) -> np.ndarray:
        """Стоимость ||A - π_{T∪j} A||_{p,2}^p для каждого кандидата j."""
        state = self.state
        costs = np.empty(pool.size)
        current = state.cost

        for start in range(0, pool.size, CANDIDATE_CHUNK):
            chunk = pool[start:start + CANDIDATE_CHUNK]
            norms = np.sqrt(state.res_sq[chunk])
            in_span = norms <= IN_SPAN_TOL * self.column_norms[chunk]
            safe = np.where(in_span, 1.0, norms)

            directions = state.residual[:, chunk] / safe[None, :]
            coef = directions.T @ state.residual
            remaining = np.maximum(state.res_sq[None, :] - coef ** 2, 0.0)
            chunk_costs = np.sum(remaining ** (self.p / 2.0), axis=1)
            costs[start:start + chunk.size] = np.where(in_span, current, chunk_costs)

        return costs

    def _commit(self, j: int) -> None:
        state = self.state
        q = state.residual[:, j].copy()

        # Модифицированный Грам-Шмидт с повторной ортогонализацией
        for _ in range(2):
            for i in range(state.Q.shape[1]):
                q -= (state.Q[:, i] @ q) * state.Q[:, i]

        norm = np.linalg.norm(q)
        state.selected.append(int(j))
        if norm <= IN_SPAN_TOL * self.column_norms[j] or norm == 0.0:
            return

        q /= norm
        state.Q = np.hstack([state.Q, q[:, None]])
        state.residual -= np.outer(q, q @ state.residual)
        state.res_sq = np.minimum(state.res_sq, np.sum(state.residual ** 2, axis=0))

    def step(self) -> Optional[int]:
        """Один шаг выбора; None, если пул кандидатов пуст."""
        n = self.A.shape[1]
        unselected = np.setdiff1d(np.arange(n), np.asarray(self.state.selected, dtype=np.int64))
        if unselected.size == 0:
            self.exhausted = True
            return None

        size = min(self.pool_size, unselected.size)
        pool = np.sort(self.rng.choice(unselected, size=size, replace=False))
        costs = self.candidate_costs(pool)
        best = int(pool[int(np.argmin(costs))])

        self._commit(best)
        self.phi_history.append(self.state.phi)
        self.err_history.append(self.state.err_p2)
        logger.debug(f"Жадный шаг {len(self.state.selected)}: столбец {best}, Φ={self.state.phi:.6g}")
        return best


def greedy_css_p2(
    A,
    k: int,
    p: PNormLike,
    r: Optional[int] = None,
    delta: float = 0.1,
    seed: int = 0,
    pool_size: Optional[int] = None
) -> SelectionResult:
    """
    Жадный k-CSS_{p,2}: r шагов ленивого жадного выбора.

    Args:
        A: Матрица d×n
        k: Целевой ранг (определяет размер пула)
        p: Показатель нормы
        r: Число выбираемых столбцов (по умолчанию k)
        delta: Параметр вероятности неудачи для размера пула
        seed: Seed выборки пулов
        pool_size: Явный размер пула (перекрывает формулу)

    Returns:
        SelectionResult; meta содержит истории Φ и err_p2
    """
    selector = GreedySelector(A, k, p, delta=delta, pool_size=pool_size, seed=seed)
    r = r or k

    for _ in range(r):
        if selector.step() is None:
            logger.warning(
                f"Пул кандидатов пуст после {len(selector.state.selected)} шагов из {r}, остановка"
            )
            break

    indices = np.asarray(selector.state.selected, dtype=np.int64)
    meta = {
        "algorithm": "greedy",
        "seed": int(seed),
        "k": int(k),
        "p": selector.p,
        "output_count": int(r),
        "pool_size": int(selector.pool_size),
        "delta": float(delta),
        "early_stop": selector.exhausted,
        "phi_history": list(selector.phi_history),
        "err_history": list(selector.err_history)
    }
    return _finish_selection(selector.A, indices, selector.A[:, indices], selector.p, meta)


def phi_utility(A, T, p: PNormLike) -> float:
    """Φ_A(T) = ||A||_{p,2}^p - ||A - π_T A||_{p,2}^p."""
    p = as_p(p)
    A = as_column_matrix(A)
    T = [int(j) for j in T]
    if not T:
        return 0.0
    return lp2_norm(A, p) ** p - projection_cost_p2(A[:, T], A, p) ** p


def run_css(A, k: int, p: PNormLike, cfg: Optional[CSSConfig] = None, seed: int = 0) -> SelectionResult:
    """Запуск подпрограммы, выбранной в cfg.algorithm."""
    cfg = cfg or CSSConfig()
    if cfg.algorithm == "greedy":
        return greedy_css_p2(
            A, k, p,
            r=cfg.resolve_output_count(k),
            delta=cfg.delta,
            seed=seed,
            pool_size=cfg.pool_size
        )
    return regular_css_p2(A, k, p, cfg=cfg, seed=seed)


def select_from_coreset(
    combined: WeightedColumnSet,
    k: int,
    cfg: Optional[CSSConfig] = None,
    seed: int = 0
) -> SelectionResult:
    """
    CSS на скетчированных столбцах коресета.

    Позиции внутри коресета переводятся в глобальные индексы, левый фактор
    составляется из исходных столбцов A. Ошибка на уровне коресета
    сохраняется в meta["coreset_err_p2"].
    """
    selection = run_css(combined.sketched, k, combined.p, cfg, derive_seed(seed, "css"))
    positions = selection.indices
    meta = dict(selection.meta)
    meta.update({
        "positions": [int(i) for i in positions],
        "coreset_columns": combined.cols,
        "coreset_err_p2": selection.err_p2
    })
    return SelectionResult(
        indices=combined.global_indices[positions],
        left_factor=combined.originals[:, positions],
        meta=meta
    )


def uniform_column_sample(n: int, k: int, seed: int) -> np.ndarray:
    """k различных индексов из [0, n), выбранных равномерно."""
    if n < 1:
        raise InvalidParameterError("Нельзя выбрать столбцы из пустой матрицы")
    rng = make_generator(seed)
    return np.sort(rng.choice(n, size=min(k, n), replace=False))
