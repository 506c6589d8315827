"""
Сервер распределенного протокола: хранит свой блок столбцов и общается
с координатором только сообщениями.
"""

import asyncio
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from loguru import logger

from .base_agent import COORDINATOR, ProtocolAgent, ProtocolMessage
from ..core.coreset import WeightedColumnSet, reduce_to_coreset
from ..core.errors import DimensionMismatchError
from ..core.numerics import as_column_matrix, lp_regression_columns
from ..core.rng import derive_seed
from ..core.sketching import apply_sketch, sketch_from_spec


@dataclass
class ServerShard:
    """Блок столбцов A_i сервера и их глобальные индексы."""
    server_id: int
    columns: np.ndarray
    global_indices: np.ndarray = field(default=None)
    offset: int = 0

    def __post_init__(self):
        self.columns = as_column_matrix(self.columns, f"A_{self.server_id}")
        if self.global_indices is None:
            self.global_indices = self.offset + np.arange(self.columns.shape[1])
        self.global_indices = np.asarray(self.global_indices, dtype=np.int64)
        if self.global_indices.size != self.columns.shape[1]:
            raise DimensionMismatchError(
                f"Сервер {self.server_id}: {self.global_indices.size} индексов на "
                f"{self.columns.shape[1]} столбцов"
            )

    @property
    def d(self) -> int:
        return int(self.columns.shape[0])

    @property
    def n_i(self) -> int:
        return int(self.columns.shape[1])


def server_name(server_id: int) -> str:
    return f"server-{server_id}"


class ServerAgent(ProtocolAgent):
    """
    Сервер: по seed скетча строит сильный коресет своего блока, по выбранным
    столбцам A_I решает ℓp-регрессию для своих столбцов и хранит V_i локально.
    """

    def __init__(
        self,
        shard: ServerShard,
        coreset_size: int,
        master_seed: int,
        irls_tol: float = 1e-8,
        irls_max_iter: int = 200,
        compute_errors: bool = True,
        parallel: bool = False
    ):
        super().__init__(name=server_name(shard.server_id), role="server")
        self._shard = shard
        self.server_id = shard.server_id
        self.coreset_size = coreset_size
        self.master_seed = master_seed
        self.irls_tol = irls_tol
        self.irls_max_iter = irls_max_iter
        self.compute_errors = compute_errors
        self.parallel = parallel

        self.p: Optional[float] = None
        self.local_factor: Optional[np.ndarray] = None
        self.local_error_pth: Optional[float] = None

    async def handle(self, message: ProtocolMessage) -> Optional[ProtocolMessage]:
        if self.parallel:
            return await asyncio.to_thread(self.process, message)
        return self.process(message)

    def process(self, message: ProtocolMessage) -> Optional[ProtocolMessage]:
        """Синхронная обработка сообщения координатора."""
        self.receive_message(message)
        if message.kind == "sketch-seed":
            return self._build_coreset(message)
        if message.kind == "selection":
            return self._solve_local(message)
        logger.warning(f"{self.name}: неожиданное сообщение {message.kind}")
        return None

    def _build_coreset(self, message: ProtocolMessage) -> ProtocolMessage:
        sketch = sketch_from_spec(tuple(message.payload["spec"]))
        self.p = float(sketch.p)
        shard = self._shard

        if shard.n_i == 0:
            coreset = WeightedColumnSet.empty(sketch.t, shard.d, self.p)
        else:
            batch = WeightedColumnSet.from_columns(
                apply_sketch(sketch, shard.columns), shard.columns, shard.global_indices, self.p
            )
            coreset = reduce_to_coreset(
                batch,
                self.coreset_size,
                derive_seed(self.master_seed, "coreset", 0, self.server_id)
            )
        logger.debug(f"{self.name}: коресет {coreset.cols} из {shard.n_i} столбцов")
        return self.send_message(COORDINATOR, "coreset", {"coreset": coreset})

    def _solve_local(self, message: ProtocolMessage) -> Optional[ProtocolMessage]:
        shard = self._shard
        if not self.compute_errors or shard.n_i == 0:
            self.local_error_pth = 0.0
            return self.send_message(COORDINATOR, "error-report", {"error_pth": 0.0})

        columns = np.asarray(message.payload["columns"], dtype=np.float64)
        result = lp_regression_columns(
            columns, shard.columns, self.p, tol=self.irls_tol, max_iter=self.irls_max_iter
        )
        # V_i остается на сервере, наверх уходит только скалярная ошибка
        self.local_factor = result.solution
        self.local_error_pth = float(np.sum(result.objective ** self.p))
        return self.send_message(COORDINATOR, "error-report", {"error_pth": self.local_error_pth})
