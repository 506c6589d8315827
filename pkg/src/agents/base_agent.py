"""
Базовый класс для всех участников распределенного протокола.
"""

from abc import ABC, abstractmethod
from typing import Any, Dict, List, Literal, Optional

import numpy as np
from loguru import logger
from pydantic import BaseModel, ConfigDict, Field

MessageKind = Literal["sketch-seed", "coreset", "selection", "error-report"]

COORDINATOR = "coordinator"


class ProtocolMessage(BaseModel):
    """Модель для сообщений между участниками протокола."""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    sender: str = Field(description="Отправитель")
    recipient: str = Field(description="Получатель")
    kind: MessageKind = Field(description="Тип сообщения")
    payload: Dict[str, Any] = Field(default_factory=dict)
    word_count: int = Field(default=0, ge=0)


def count_words(kind: str, payload: Dict[str, Any]) -> int:
    """
    Число слов в сообщении: одно слово на вещественное число или индекс.

    Args:
        kind: Тип сообщения
        payload: Содержимое

    Returns:
        sketch-seed: 1 слово (или t·d при учете плотного скетча);
        coreset: cols·(t + d + 2); selection: |I|·d; error-report: 1
    """
    if kind == "sketch-seed":
        if payload.get("dense"):
            _, t, d, *_ = payload["spec"]
            return int(t) * int(d)
        return 1
    if kind == "coreset":
        return int(payload["coreset"].word_count)
    if kind == "selection":
        columns = np.asarray(payload["columns"])
        return int(columns.shape[0] * columns.shape[1])
    if kind == "error-report":
        return 1
    raise ValueError(f"Неизвестный тип сообщения: {kind}")


def account_words(message: ProtocolMessage) -> int:
    """Повторный подсчет слов сообщения по его содержимому."""
    return count_words(message.kind, message.payload)


class ProtocolAgent(ABC):
    """
    Абстрактный участник протокола.
    Каждый участник умеет отправлять, принимать и обрабатывать сообщения.
    """

    def __init__(self, name: str, role: str):
        """
        Args:
            name: Уникальное имя участника
            role: Роль в протоколе (coordinator, server)
        """
        self.name = name
        self.role = role

        # История сообщений
        self.message_history: List[ProtocolMessage] = []

        logger.debug(f"Участник {name} ({role}) инициализирован")

    def send_message(self, recipient: str, kind: str, payload: Dict[str, Any]) -> ProtocolMessage:
        """Создание сообщения с подсчетом слов."""
        message = ProtocolMessage(
            sender=self.name,
            recipient=recipient,
            kind=kind,
            payload=payload,
            word_count=count_words(kind, payload)
        )
        self.message_history.append(message)
        return message

    def receive_message(self, message: ProtocolMessage) -> None:
        if message.recipient != self.name:
            raise ValueError(f"Сообщение для {message.recipient} доставлено {self.name}")
        self.message_history.append(message)

    @abstractmethod
    async def handle(self, message: ProtocolMessage) -> Optional[ProtocolMessage]:
        """
        Обработка входящего сообщения.

        Returns:
            Ответное сообщение или None
        """
        pass
