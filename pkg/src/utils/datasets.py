"""
Синтетические данные и чтение/запись матриц.

CSV: каждая строка файла - один столбец A. Бинарный формат (little-endian):
два uint64 d и n, затем d·n значений float64 по столбцам.
"""

import csv
from pathlib import Path
from typing import Literal

import numpy as np
from loguru import logger

from ..core.errors import InvalidParameterError, MatrixFormatError
from ..core.numerics import as_column_matrix

MatrixFormat = Literal["csv", "binary"]

_HEADER = np.dtype("<u8")
_VALUE = np.dtype("<f8")
_HEADER_BYTES = 2 * _HEADER.itemsize


def gen_synthetic(n: int, k: int) -> np.ndarray:
    """
    Матрица (k+n)×(k+n): левый верхний блок k×k равен n^{3/2}·I,
    правый нижний блок n×n состоит из единиц, остальное нули.
    """
    if n < 1 or k < 1:
        raise InvalidParameterError(f"n и k должны быть ≥ 1: n={n}, k={k}")
    A = np.zeros((k + n, k + n))
    A[:k, :k] = n ** 1.5 * np.eye(k)
    A[k:, k:] = 1.0
    return A


def _load_csv(path: str, header: bool) -> np.ndarray:
    rows = []
    width = None
    header_pending = header

    with open(path, "r", encoding="utf-8", newline="") as f:
        for line_no, row in enumerate(csv.reader(f), start=1):
            cells = [cell.strip() for cell in row]
            if not cells or all(not cell for cell in cells):
                continue
            if header_pending:
                header_pending = False
                continue
            try:
                values = [float(cell) for cell in cells]
            except ValueError:
                hint = " (заголовок допускается только с --header)" if not rows else ""
                raise MatrixFormatError(f"Нечисловое значение в CSV{hint}", path=path, line=line_no)

            if width is None:
                width = len(values)
            elif len(values) != width:
                raise MatrixFormatError(
                    f"Ожидалось {width} значений, получено {len(values)}", path=path, line=line_no
                )
            if not np.all(np.isfinite(values)):
                raise MatrixFormatError("Неконечное значение в CSV", path=path, line=line_no)
            rows.append(values)

    if not rows:
        raise MatrixFormatError("CSV файл не содержит данных", path=path)
    return np.asarray(rows, dtype=np.float64).T


def _load_binary(path: str) -> np.ndarray:
    data = Path(path).read_bytes()
    if len(data) < _HEADER_BYTES:
        raise MatrixFormatError("Файл короче заголовка (d, n)", path=path, offset=len(data))

    d, n = (int(x) for x in np.frombuffer(data, dtype=_HEADER, count=2))
    if d < 1:
        raise MatrixFormatError(f"Некорректное число строк d={d}", path=path, offset=0)

    expected = _HEADER_BYTES + d * n * _VALUE.itemsize
    if len(data) != expected:
        raise MatrixFormatError(
            f"Ожидалось {expected} байт для d={d}, n={n}, получено {len(data)}",
            path=path,
            offset=min(len(data), expected)
        )

    values = np.frombuffer(data, dtype=_VALUE, count=d * n, offset=_HEADER_BYTES)
    bad = np.flatnonzero(~np.isfinite(values))
    if bad.size:
        raise MatrixFormatError(
            "Неконечное значение в бинарном файле",
            path=path,
            offset=_HEADER_BYTES + int(bad[0]) * _VALUE.itemsize
        )
    return values.reshape((d, n), order="F").astype(np.float64)


def load_matrix(path: str, format: MatrixFormat = "csv", header: bool = False) -> np.ndarray:
    """
    Загрузка матрицы из файла.

    Args:
        path: Путь к файлу
        format: csv или binary
        header: Пропустить первую строку CSV

    Returns:
        Матрица d×n
    """
    if format == "csv":
        A = _load_csv(path, header)
    elif format == "binary":
        A = _load_binary(path)
    else:
        raise InvalidParameterError(f"Неизвестный формат матрицы: {format}")
    logger.debug(f"Загружена матрица {A.shape[0]}×{A.shape[1]} из {path}")
    return A


def save_matrix(A, path: str, format: MatrixFormat = "csv") -> str:
    """Сохранение матрицы; бинарный формат восстанавливается побитово."""
    A = as_column_matrix(A)
    Path(path).parent.mkdir(parents=True, exist_ok=True)

    if format == "csv":
        with open(path, "w", encoding="utf-8", newline="") as f:
            writer = csv.writer(f)
            for j in range(A.shape[1]):
                writer.writerow([repr(float(x)) for x in A[:, j]])
    elif format == "binary":
        with open(path, "wb") as f:
            f.write(np.asarray(A.shape, dtype=_HEADER).tobytes())
            f.write(np.asarray(A, dtype=_VALUE).tobytes(order="F"))
    else:
        raise InvalidParameterError(f"Неизвестный формат матрицы: {format}")
    return path
