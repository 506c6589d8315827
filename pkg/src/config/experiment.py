"""
Схема конфигурации эксперимента: один плоский JSON файл на эксперимент.
Неизвестные ключи отклоняются.
"""

import json
from pathlib import Path
from typing import List, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, field_validator

from ..core.coordinator import ProtocolConfig
from ..core.css import CSSConfig
from ..core.streaming import StreamingConfig

Mode = Literal["streaming", "distributed", "offline"]
Algorithm = Literal["regular", "greedy", "uniform", "svd"]


class ExperimentConfig(BaseModel):
    """Параметры эксперимента (значения по умолчанию - настольный масштаб)."""
    model_config = ConfigDict(extra="forbid")

    mode: Mode = "streaming"
    algorithms: List[Algorithm] = Field(default_factory=lambda: ["regular", "greedy", "uniform", "svd"])
    k: int = Field(default=10, ge=1)
    p: float = 1.0
    seeds: List[int] = Field(default_factory=lambda: list(range(10)))

    # Данные: "synthetic" или путь к файлу
    dataset: str = "synthetic"
    dataset_format: Literal["csv", "binary"] = "csv"
    header: bool = False
    synthetic_n: int = Field(default=200, ge=1)

    # Поток и коресеты
    batch_size: Optional[int] = Field(default=None, ge=1)
    coreset_size: Optional[int] = Field(default=None, ge=1)
    sketch_rows: Optional[int] = Field(default=None, ge=1)
    sketch_rows_factor: float = Field(default=0.5, gt=0.0)
    coreset_delta: Optional[float] = Field(default=None, gt=0.0, lt=1.0)

    # Распределенный режим
    servers: int = Field(default=5, ge=1)
    shard_assignment: Optional[str] = None
    dense_sketch_accounting: bool = False

    # Подпрограмма CSS
    t_prime: Optional[int] = Field(default=None, ge=1)
    embedding_rows: Optional[int] = Field(default=None, ge=1)
    embedding_sparsity: Optional[int] = Field(default=None, ge=1)
    delta: float = Field(default=0.1, gt=0.0, lt=1.0)
    greedy_pool_size: Optional[int] = Field(default=None, ge=1)
    rescale: bool = False
    dedup: bool = False

    # Оценка ошибки
    irls_tol: float = Field(default=1e-8, gt=0.0)
    irls_max_iter: int = Field(default=200, ge=1)

    output_dir: str = "results"
    transcripts: bool = False
    workers: int = Field(default=1, ge=1)

    @field_validator("p")
    @classmethod
    def _check_p(cls, value: float) -> float:
        if not 1.0 <= value < 2.0:
            raise ValueError(f"p должно лежать в [1, 2), получено {value}")
        return value

    @field_validator("seeds")
    @classmethod
    def _check_seeds(cls, value: List[int]) -> List[int]:
        if not value:
            raise ValueError("Список seeds не должен быть пустым")
        if any(seed < 0 for seed in value):
            raise ValueError("seeds должны быть неотрицательными")
        return value

    @classmethod
    def load(cls, path: str) -> "ExperimentConfig":
        with open(path, "r", encoding="utf-8") as f:
            return cls.model_validate(json.load(f))

    def save(self, path: str) -> None:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8") as f:
            json.dump(self.model_dump(), f, ensure_ascii=False, indent=2)

    def css_config(self, algorithm: str) -> CSSConfig:
        return CSSConfig(
            algorithm="greedy" if algorithm == "greedy" else "regular",
            embedding_rows=self.embedding_rows,
            embedding_sparsity=self.embedding_sparsity,
            t_prime=self.t_prime,
            rescale=self.rescale,
            dedup=self.dedup,
            delta=self.delta,
            pool_size=self.greedy_pool_size
        )

    def streaming_config(self, algorithm: str) -> StreamingConfig:
        return StreamingConfig(
            batch_size=self.batch_size,
            coreset_size=self.coreset_size,
            sketch_rows=self.sketch_rows,
            sketch_rows_factor=self.sketch_rows_factor,
            coreset_delta=self.coreset_delta,
            css=self.css_config(algorithm)
        )

    def protocol_config(self, algorithm: str) -> ProtocolConfig:
        return ProtocolConfig(
            coreset_size=self.coreset_size,
            sketch_rows=self.sketch_rows,
            sketch_rows_factor=self.sketch_rows_factor,
            coreset_delta=self.coreset_delta,
            dense_sketch_accounting=self.dense_sketch_accounting,
            irls_tol=self.irls_tol,
            irls_max_iter=self.irls_max_iter,
            css=self.css_config(algorithm)
        )
