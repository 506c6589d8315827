"""
Иерархия исключений библиотеки.
"""

from typing import Optional


class CSSError(Exception):
    """Базовое исключение для всех ошибок библиотеки."""


class DimensionMismatchError(CSSError, ValueError):
    """Несовпадение размерностей (скетч и матрица, столбец потока, шарды)."""


class InvalidParameterError(CSSError, ValueError):
    """Параметр вне допустимого диапазона (p, k, t_c, разреженность и т.д.)."""


class EmptyInputError(CSSError, ValueError):
    """Пустой поток или вход, состоящий только из нулевых весов."""


class MatrixFormatError(CSSError, ValueError):
    """Ошибка формата файла с матрицей (CSV или бинарный)."""

    def __init__(
        self,
        message: str,
        path: Optional[str] = None,
        line: Optional[int] = None,
        offset: Optional[int] = None
    ):
        self.path = path
        self.line = line
        self.offset = offset

        location = []
        if path is not None:
            location.append(str(path))
        if line is not None:
            location.append(f"строка {line}")
        if offset is not None:
            location.append(f"смещение {offset}")

        if location:
            message = f"{message} ({', '.join(location)})"
        super().__init__(message)
