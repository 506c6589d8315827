"""
Координатор распределенного протокола выбора столбцов.
Координатор получает данные серверов только через записанные сообщения.
"""

import asyncio
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np
from loguru import logger
from pydantic import BaseModel, ConfigDict, Field, computed_field

from .coreset import WeightedColumnSet, boosted_coreset_size
from .css import CSSConfig, SelectionResult, select_from_coreset
from .errors import DimensionMismatchError, EmptyInputError, InvalidParameterError, MatrixFormatError
from .json_logger import TranscriptJSONLogger
from .numerics import PNormLike, as_column_matrix, as_p
from .rng import derive_seed
from .sketching import experiment_sketch_rows
from ..agents.base_agent import COORDINATOR, ProtocolAgent, ProtocolMessage
from ..agents.server import ServerAgent, ServerShard, server_name


class ProtocolConfig(BaseModel):
    """Параметры протокола (по умолчанию t_c = 2k, t = ⌈0.5d⌉)."""
    model_config = ConfigDict(extra="forbid")

    coreset_size: Optional[int] = Field(default=None, ge=1)
    sketch_rows: Optional[int] = Field(default=None, ge=1)
    sketch_rows_factor: float = Field(default=0.5, gt=0.0)
    scale_c: float = Field(default=1.0, gt=0.0)
    coreset_delta: Optional[float] = Field(default=None, gt=0.0, lt=1.0)
    dense_sketch_accounting: bool = False
    parallel: bool = False
    compute_errors: bool = True
    irls_tol: float = Field(default=1e-8, gt=0.0)
    irls_max_iter: int = Field(default=200, ge=1)
    css: CSSConfig = Field(default_factory=CSSConfig)

    def resolve_coreset_size(self, k: int, s: int) -> int:
        base = self.coreset_size or 2 * k
        delta = None if self.coreset_delta is None else self.coreset_delta / s
        return boosted_coreset_size(base, delta)

    def resolve_sketch_rows(self, d: int) -> int:
        return self.sketch_rows or experiment_sketch_rows(d, self.sketch_rows_factor)


class TranscriptEntry(BaseModel):
    """Запись о переданном сообщении."""
    sender: str
    recipient: str
    kind: str
    word_count: int


class ProtocolTranscript(BaseModel):
    """Упорядоченный список сообщений одного запуска протокола."""
    s: int
    rounds: int = 1
    messages: List[TranscriptEntry] = Field(default_factory=list)

    @computed_field
    @property
    def total_words(self) -> int:
        return sum(entry.word_count for entry in self.messages)

    def words_by_kind(self, kind: str) -> int:
        return sum(entry.word_count for entry in self.messages if entry.kind == kind)

    def to_logger(self, run_id: str = "protocol") -> TranscriptJSONLogger:
        json_logger = TranscriptJSONLogger(run_id=run_id)
        for entry in self.messages:
            json_logger.add_message(entry.model_dump())
        json_logger.add_summary({"s": self.s, "rounds": self.rounds})
        return json_logger

    def to_jsonl(self) -> str:
        return self.to_logger().to_jsonl()


def partition_columns(A, s: int) -> List[ServerShard]:
    """Разбиение столбцов A на s последовательных блоков."""
    A = as_column_matrix(A)
    if s < 1:
        raise InvalidParameterError(f"Число серверов должно быть ≥ 1, получено {s}")
    blocks = np.array_split(np.arange(A.shape[1]), s)
    return [
        ServerShard(
            server_id=i,
            columns=A[:, block],
            global_indices=block,
            offset=int(block[0]) if block.size else 0
        )
        for i, block in enumerate(blocks)
    ]


def partition_from_assignment(A, assignment: Sequence[int], s: Optional[int] = None) -> List[ServerShard]:
    """Разбиение по явному назначению: assignment[j] - номер сервера столбца j."""
    A = as_column_matrix(A)
    assignment = np.asarray(assignment, dtype=np.int64)
    if assignment.size != A.shape[1]:
        raise DimensionMismatchError(
            f"Назначение задано для {assignment.size} столбцов, а в матрице {A.shape[1]}"
        )
    if assignment.size and assignment.min() < 0:
        raise InvalidParameterError("Номера серверов должны быть неотрицательными")

    s = s or (int(assignment.max()) + 1 if assignment.size else 1)
    if assignment.size and assignment.max() >= s:
        raise InvalidParameterError(f"Номер сервера {int(assignment.max())} ≥ s={s}")

    shards = []
    for i in range(s):
        block = np.flatnonzero(assignment == i)
        shards.append(ServerShard(
            server_id=i,
            columns=A[:, block],
            global_indices=block,
            offset=int(block[0]) if block.size else 0
        ))
    return shards


def load_assignment(path: str) -> np.ndarray:
    """Чтение файла назначения: по одному номеру сервера на строку."""
    values = []
    with open(path, "r", encoding="utf-8") as f:
        for line_no, line in enumerate(f, start=1):
            text = line.strip()
            if not text or text.startswith("#"):
                continue
            try:
                values.append(int(text))
            except ValueError:
                raise MatrixFormatError(
                    f"Ожидался номер сервера, получено {text!r}", path=str(path), line=line_no
                )
    return np.asarray(values, dtype=np.int64)


class DistributedCoordinator(ProtocolAgent):
    """
    Координатор однораундового протокола.

    Серверы доступны координатору только как адресаты сообщений; порядок
    сообщений в транскрипте нормализуется по номеру сервера.
    """

    def __init__(
        self,
        shards: List[ServerShard],
        k: int,
        p: PNormLike,
        cfg: Optional[ProtocolConfig] = None,
        master_seed: int = 0
    ):
        """
        Args:
            shards: Блоки столбцов серверов
            k: Целевой ранг
            p: Показатель нормы
            cfg: Параметры протокола
            master_seed: Мастер-seed
        """
        super().__init__(name=COORDINATOR, role="coordinator")
        if not shards:
            raise InvalidParameterError("Нужен хотя бы один сервер")
        dims = {shard.d for shard in shards}
        if len(dims) != 1:
            raise DimensionMismatchError(f"У серверов разное число строк: {sorted(dims)}")

        self.k = k
        self.p = as_p(p)
        self.cfg = cfg or ProtocolConfig()
        self.master_seed = master_seed
        self.d = dims.pop()
        self.s = len(shards)
        self.coreset_size = self.cfg.resolve_coreset_size(k, self.s)

        self.servers = {
            shard.server_id: ServerAgent(
                shard,
                coreset_size=self.coreset_size,
                master_seed=master_seed,
                irls_tol=self.cfg.irls_tol,
                irls_max_iter=self.cfg.irls_max_iter,
                compute_errors=self.cfg.compute_errors,
                parallel=self.cfg.parallel
            )
            for shard in shards
        }
        if len(self.servers) != self.s:
            raise InvalidParameterError("Номера серверов должны быть уникальными")

        self.transcript = ProtocolTranscript(s=self.s)
        self.coresets: List[WeightedColumnSet] = []
        self.error_reports: List[float] = []

        logger.info(
            f"Координатор инициализирован: s={self.s}, d={self.d}, k={k}, t_c={self.coreset_size}"
        )

    def _record(self, message: ProtocolMessage) -> None:
        self.transcript.messages.append(TranscriptEntry(
            sender=message.sender,
            recipient=message.recipient,
            kind=message.kind,
            word_count=message.word_count
        ))

    async def handle(self, message: ProtocolMessage) -> Optional[ProtocolMessage]:
        self.receive_message(message)
        if message.kind == "coreset":
            self.coresets.append(message.payload["coreset"])
        elif message.kind == "error-report":
            self.error_reports.append(float(message.payload["error_pth"]))
        return None

    async def _broadcast(self, kind: str, payload: dict) -> List[ProtocolMessage]:
        """Рассылка всем серверам и сбор ответов в порядке номеров серверов."""
        ids = sorted(self.servers)
        outgoing = [self.send_message(server_name(i), kind, payload) for i in ids]
        for message in outgoing:
            if message.kind != "error-report":
                self._record(message)

        replies = await asyncio.gather(
            *(self.servers[i].handle(message) for i, message in zip(ids, outgoing))
        )
        return [reply for reply in replies if reply is not None]

    async def run(self) -> Tuple[SelectionResult, ProtocolTranscript]:
        """Три фазы протокола: seed скетча, коресеты, выбранные столбцы."""
        t = self.cfg.resolve_sketch_rows(self.d)
        spec = ("p-stable", t, self.d, self.p, 0, derive_seed(self.master_seed, "sketch"), self.cfg.scale_c)

        logger.info(f"Фаза 1: рассылка seed скетча {t}×{self.d}")
        replies = await self._broadcast(
            "sketch-seed", {"spec": spec, "dense": self.cfg.dense_sketch_accounting}
        )
        for reply in replies:
            self._record(reply)
            await self.handle(reply)

        nonempty = [coreset for coreset in self.coresets if coreset.cols > 0]
        if not nonempty:
            raise EmptyInputError("Все серверы пусты: нет столбцов для выбора")
        combined = WeightedColumnSet.concat(nonempty)

        logger.info(f"Фаза 2: CSS на {combined.cols} столбцах коресетов")
        selection = select_from_coreset(combined, self.k, self.cfg.css, self.master_seed)

        logger.info(f"Фаза 3: рассылка {selection.indices.size} выбранных столбцов")
        reports = await self._broadcast(
            "selection", {"columns": selection.left_factor, "indices": selection.indices}
        )
        for report in reports:
            await self.handle(report)

        err_p = None
        if self.cfg.compute_errors:
            err_p = float(sum(self.error_reports) ** (1.0 / self.p))

        selection.err_p = err_p
        selection.meta.update({
            "mode": "distributed",
            "servers": self.s,
            "coreset_size": self.coreset_size,
            "sketch_rows": t,
            "total_words": self.transcript.total_words,
            "rounds": self.transcript.rounds
        })
        logger.info(
            f"Протокол завершен: {self.transcript.total_words} слов, err_p={err_p}"
        )
        return selection, self.transcript

    def save_transcript(self, filepath: str, run_id: str = "protocol") -> str:
        """Экспорт транскрипта в line-delimited JSON."""
        Path(filepath).parent.mkdir(parents=True, exist_ok=True)
        return self.transcript.to_logger(run_id).save_jsonl(filepath)


def run_protocol(
    shards: List[ServerShard],
    k: int,
    p: PNormLike,
    cfg: Optional[ProtocolConfig] = None,
    master_seed: int = 0
) -> Tuple[SelectionResult, ProtocolTranscript]:
    """Синхронный запуск протокола."""
    coordinator = DistributedCoordinator(shards, k, p, cfg, master_seed)
    return asyncio.run(coordinator.run())
