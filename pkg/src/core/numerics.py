# src/core/numerics.py
"""
Базовые матричные примитивы: нормы, точная стоимость проекции на подпространство,
псевдообратная, leverage scores, ℓp-регрессия (IRLS) и SVD-бейзлайн.

Матрица A ∈ ℝ^{d×n} хранится как numpy-массив и адресуется по столбцам.
Все функции модуля детерминированы и не имеют разделяемого состояния.
"""

from dataclasses import dataclass
from typing import Union

import numpy as np
import scipy.linalg
from loguru import logger
from pydantic import BaseModel, ConfigDict, field_validator

from .errors import DimensionMismatchError, InvalidParameterError

ColumnMatrix = np.ndarray

# Нижняя граница для |r| в весах IRLS и коэффициент сглаживания обновления весов
IRLS_WEIGHT_FLOOR = 1e-10
IRLS_DAMPING = 0.5


class PNorm(BaseModel):
    """Показатель p энтри-нормы, 1 ≤ p < 2."""
    model_config = ConfigDict(frozen=True)

    p: float

    @field_validator("p")
    @classmethod
    def _check_range(cls, value: float) -> float:
        if not (1.0 <= value < 2.0) or not np.isfinite(value):
            raise ValueError(f"p должно лежать в [1, 2), получено {value}")
        return float(value)

    def __float__(self) -> float:
        return self.p


PNormLike = Union[float, int, PNorm]


def as_p(p: PNormLike) -> float:
    """Приведение p к float с проверкой диапазона [1, 2)."""
    if isinstance(p, PNorm):
        return p.p
    value = float(p)
    if not (1.0 <= value < 2.0):
        raise InvalidParameterError(f"p должно лежать в [1, 2), получено {value}")
    return value


def as_column_matrix(A, name: str = "A") -> ColumnMatrix:
    """
    Приведение входа к матрице d×n (float64).

    Вектор длины d интерпретируется как матрица d×1.
    """
    M = np.asarray(A, dtype=np.float64)
    if M.ndim == 1:
        M = M.reshape(-1, 1)
    if M.ndim != 2:
        raise DimensionMismatchError(f"{name}: ожидается матрица, получен массив ndim={M.ndim}")
    if M.shape[0] < 1:
        raise DimensionMismatchError(f"{name}: число строк должно быть ≥ 1")
    if not np.all(np.isfinite(M)):
        raise InvalidParameterError(f"{name}: все элементы должны быть конечными")
    return M


def column(A: ColumnMatrix, j: int) -> np.ndarray:
    """Столбец j матрицы A (0 ≤ j < n)."""
    if not 0 <= j < A.shape[1]:
        raise IndexError(f"Индекс столбца {j} вне диапазона [0, {A.shape[1]})")
    return A[:, j]


def column_norms(A: ColumnMatrix) -> np.ndarray:
    """Евклидовы нормы столбцов."""
    return np.linalg.norm(A, axis=0)


def entrywise_lp_norm(A: ColumnMatrix, p: PNormLike) -> float:
    """(Σ_{i,j} |A_ij|^p)^{1/p}."""
    p = as_p(p)
    A = as_column_matrix(A)
    if A.size == 0:
        return 0.0
    return float(np.sum(np.abs(A) ** p) ** (1.0 / p))


def lp2_norm(A: ColumnMatrix, p: PNormLike) -> float:
    """ℓ_{p,2}-норма: p-норма вектора евклидовых норм столбцов."""
    p = as_p(p)
    A = as_column_matrix(A)
    if A.shape[1] == 0:
        return 0.0
    return float(np.sum(column_norms(A) ** p) ** (1.0 / p))


def orthonormal_basis(U: ColumnMatrix) -> np.ndarray:
    """
    Ортонормированный базис colspan(U) через QR с выбором ведущего столбца.

    Порог ранга: max(d, n)·eps·σ_max.
    """
    U = as_column_matrix(U, "U")
    d, n = U.shape
    if n == 0:
        return np.zeros((d, 0))

    sigma_max = np.linalg.norm(U, 2)
    if sigma_max == 0.0:
        return np.zeros((d, 0))

    Q, R, _ = scipy.linalg.qr(U, mode="economic", pivoting=True)
    tol = max(d, n) * np.finfo(np.float64).eps * sigma_max
    rank = int(np.sum(np.abs(np.diag(R)) > tol))
    return Q[:, :rank]


def projection_residuals(U: ColumnMatrix, A: ColumnMatrix) -> np.ndarray:
    """Евклидовы расстояния от столбцов A до colspan(U)."""
    U = as_column_matrix(U, "U")
    A = as_column_matrix(A)
    if U.shape[0] != A.shape[0]:
        raise DimensionMismatchError(
            f"Число строк U ({U.shape[0]}) и A ({A.shape[0]}) не совпадает"
        )
    Q = orthonormal_basis(U)
    residual = A - Q @ (Q.T @ A)
    return column_norms(residual)


def projection_cost_p2(U: ColumnMatrix, A: ColumnMatrix, p: PNormLike) -> float:
    """
    Точная стоимость min_V ||UV - A||_{p,2}.

    Стоимость раскладывается по столбцам, поэтому достаточно расстояний
    от каждого столбца A до colspan(U).
    """
    p = as_p(p)
    dist = projection_residuals(U, A)
    if dist.size == 0:
        return 0.0
    return float(np.sum(dist ** p) ** (1.0 / p))


def numerical_rank(A: ColumnMatrix) -> int:
    """Численный ранг по сингулярным числам."""
    A = as_column_matrix(A)
    if A.size == 0:
        return 0
    s = np.linalg.svd(A, compute_uv=False)
    if s.size == 0 or s[0] == 0.0:
        return 0
    tol = max(A.shape) * np.finfo(np.float64).eps * s[0]
    return int(np.sum(s > tol))


def leverage_scores(M: ColumnMatrix) -> np.ndarray:
    """
    Leverage scores строк M: ℓ_i = ||U_{i,*}||², U - левый фактор thin SVD.

    Для оценок столбцов матрицы A вызывается на A.T.
    """
    M = as_column_matrix(M, "M")
    if M.shape[1] == 0:
        return np.zeros(M.shape[0])
    U, s, _ = np.linalg.svd(M, full_matrices=False)
    if s[0] == 0.0:
        return np.zeros(M.shape[0])
    tol = max(M.shape) * np.finfo(np.float64).eps * s[0]
    rank = int(np.sum(s > tol))
    return np.sum(U[:, :rank] ** 2, axis=1)


def pseudoinverse(M: ColumnMatrix) -> np.ndarray:
    """Псевдообратная Мура-Пенроуза через SVD (нулевая матрица -> нулевая)."""
    M = as_column_matrix(M, "M")
    d, n = M.shape
    if M.size == 0:
        return np.zeros((n, d))
    U, s, Vt = np.linalg.svd(M, full_matrices=False)
    if s[0] == 0.0:
        return np.zeros((n, d))
    tol = max(d, n) * np.finfo(np.float64).eps * s[0]
    s_inv = np.where(s > tol, 1.0 / np.where(s > tol, s, 1.0), 0.0)
    return (Vt.T * s_inv) @ U.T


@dataclass
class LpRegressionResult:
    """Результат ℓp-регрессии для одного или нескольких правых частей."""
    solution: np.ndarray
    objective: Union[float, np.ndarray]
    iterations: int
    converged: Union[bool, np.ndarray]


def irls_step(B: ColumnMatrix, y: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """
    Один шаг IRLS: взвешенный МНК min_v Σ_i w_i (Bv - y)_i².

    При единичных весах совпадает с обычным МНК.
    """
    B = as_column_matrix(B, "B")
    y = np.asarray(y, dtype=np.float64).ravel()
    w = np.sqrt(np.asarray(weights, dtype=np.float64).ravel())
    if B.shape[0] != y.size or w.size != y.size:
        raise DimensionMismatchError("Размеры B, y и весов не согласованы")
    v, *_ = np.linalg.lstsq(B * w[:, None], y * w, rcond=None)
    return v


def _lp_power(R: np.ndarray, p: float) -> np.ndarray:
    return np.sum(np.abs(R) ** p, axis=0)


def lp_regression_columns(
    B: ColumnMatrix,
    Y: ColumnMatrix,
    p: PNormLike,
    tol: float = 1e-6,
    max_iter: int = 100
) -> LpRegressionResult:
    """
    Пакетная ℓp-регрессия min_V ||BV - Y||_p по столбцам методом IRLS.

    Задача решается в ортонормированном базисе colspan(B), поэтому линейно
    зависимые и повторяющиеся столбцы B допустимы. Стартовая точка - МНК,
    лучший найденный итерат не хуже МНК по ℓp-цели.

    Args:
        B: Матрица d×k
        Y: Правые части d×m
        p: Показатель нормы
        tol: Порог относительного изменения цели
        max_iter: Максимальное число итераций

    Returns:
        LpRegressionResult: solution k×m, objective (m,), converged (m,)
    """
    p = as_p(p)
    B = as_column_matrix(B, "B")
    Y = as_column_matrix(Y, "Y")
    if B.shape[0] != Y.shape[0]:
        raise DimensionMismatchError(
            f"Число строк B ({B.shape[0]}) и Y ({Y.shape[0]}) не совпадает"
        )

    m = Y.shape[1]
    Q = orthonormal_basis(B) if B.shape[1] > 0 else np.zeros((B.shape[0], 0))
    r = Q.shape[1]

    if r == 0:
        objective = _lp_power(Y, p) ** (1.0 / p)
        return LpRegressionResult(
            solution=np.zeros((B.shape[1], m)),
            objective=objective,
            iterations=0,
            converged=np.ones(m, dtype=bool)
        )

    # Старт с решения МНК
    Z = Q.T @ Y
    R = Y - Q @ Z
    obj = _lp_power(R, p)
    best_Z = Z.copy()
    best_obj = obj.copy()

    converged = obj <= 0.0
    W = np.maximum(np.abs(R), IRLS_WEIGHT_FLOOR) ** (p - 2.0)
    iterations = 0

    for iterations in range(1, max_iter + 1):
        active = np.flatnonzero(~converged)
        if active.size == 0:
            iterations -= 1
            break

        W_a = W[:, active]
        Y_a = Y[:, active]
        G = np.einsum("ia,ij,ib->jab", Q, W_a, Q)
        rhs = np.einsum("ia,ij->ja", Q, W_a * Y_a)
        ridge = 1e-14 * np.trace(G, axis1=1, axis2=2)
        G = G + ridge[:, None, None] * np.eye(r)[None, :, :]
        Z_a = np.linalg.solve(G, rhs[:, :, None])[:, :, 0].T

        R_a = Y_a - Q @ Z_a
        obj_a = _lp_power(R_a, p)

        improved = obj_a < best_obj[active]
        best_obj[active[improved]] = obj_a[improved]
        best_Z[:, active[improved]] = Z_a[:, improved]

        change = np.abs(obj[active] - obj_a)
        done = (change <= tol * np.maximum(obj[active], np.finfo(np.float64).tiny)) | (obj_a <= 0.0)
        converged[active[done]] = True

        obj[active] = obj_a
        W_new = np.maximum(np.abs(R_a), IRLS_WEIGHT_FLOOR) ** (p - 2.0)
        W[:, active] = IRLS_DAMPING * W_a + (1.0 - IRLS_DAMPING) * W_new

    if not np.all(converged):
        logger.warning(
            f"IRLS не сошелся за {max_iter} итераций для {int(np.sum(~converged))} "
            f"из {m} столбцов; возвращаю лучший итерат"
        )

    V = pseudoinverse(B) @ (Q @ best_Z)
    return LpRegressionResult(
        solution=V,
        objective=best_obj ** (1.0 / p),
        iterations=iterations,
        converged=converged
    )


def lp_regression(
    B: ColumnMatrix,
    y: np.ndarray,
    p: PNormLike,
    tol: float = 1e-6,
    max_iter: int = 100
) -> LpRegressionResult:
    """
    Приближенное решение min_v ||Bv - y||_p методом IRLS.

    Цель результата не хуже ℓp-цели решения МНК. При отсутствии сходимости
    возвращается лучший итерат с converged=False.
    """
    y = np.asarray(y, dtype=np.float64).ravel()
    B = as_column_matrix(B, "B")
    if B.shape[0] != y.size:
        raise DimensionMismatchError(
            f"Число строк B ({B.shape[0]}) не совпадает с длиной y ({y.size})"
        )
    result = lp_regression_columns(B, y.reshape(-1, 1), p, tol=tol, max_iter=max_iter)
    return LpRegressionResult(
        solution=result.solution[:, 0],
        objective=float(result.objective[0]),
        iterations=result.iterations,
        converged=bool(result.converged[0])
    )


def column_subset_lp_error(
    A_I: ColumnMatrix,
    A: ColumnMatrix,
    p: PNormLike,
    tol: float = 1e-8,
    max_iter: int = 200
) -> float:
    """min_V ||A_I V - A||_p, вычисленная по столбцам через IRLS."""
    p = as_p(p)
    A = as_column_matrix(A)
    if A.shape[1] == 0:
        return 0.0
    A_I = np.asarray(A_I, dtype=np.float64).reshape(A.shape[0], -1)
    result = lp_regression_columns(A_I, A, p, tol=tol, max_iter=max_iter)
    return float(np.sum(result.objective ** p) ** (1.0 / p))


def svd_rank_k(A: ColumnMatrix, k: int) -> np.ndarray:
    """Оптимальное по Фробениусу приближение ранга k (усеченный SVD)."""
    A = as_column_matrix(A)
    if not 1 <= k <= min(A.shape):
        raise InvalidParameterError(f"k должно лежать в [1, {min(A.shape)}], получено {k}")
    U, s, Vt = np.linalg.svd(A, full_matrices=False)
    return (U[:, :k] * s[:k]) @ Vt[:k, :]


def svd_rank_k_error(A: ColumnMatrix, k: int, p: PNormLike) -> float:
    """||A_k - A||_p для усеченного SVD ранга k."""
    A = as_column_matrix(A)
    return entrywise_lp_norm(svd_rank_k(A, k) - A, p)
