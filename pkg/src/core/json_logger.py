# src/core/json_logger.py
"""
Логгер транскрипта распределенного протокола в JSON формате.

Записи не содержат временных меток, поэтому транскрипты двух одинаковых
запусков совпадают побайтно.
"""

import json
from pathlib import Path
from typing import Any, Dict, List, Optional


class TranscriptJSONLogger:
    """Логгер сообщений протокола: построчный JSON и итоговая сводка."""

    def __init__(self, run_id: str = "protocol"):
        """
        Args:
            run_id: Идентификатор запуска (алгоритм и seed)
        """
        self.run_id = run_id
        self.records: List[Dict[str, Any]] = []
        self.summary: Dict[str, Any] = {}

    def add_message(self, record: Dict[str, Any]) -> int:
        """
        Добавление записи о сообщении.

        Returns:
            Порядковый номер записи
        """
        self.records.append(dict(record))
        return len(self.records)

    def add_summary(self, summary: Dict[str, Any]) -> None:
        self.summary = dict(summary)

    @property
    def total_words(self) -> int:
        return sum(int(record.get("word_count", 0)) for record in self.records)

    def to_jsonl(self) -> str:
        """Записи в виде line-delimited JSON (по одной на строку)."""
        lines = [
            json.dumps(record, ensure_ascii=False, sort_keys=True)
            for record in self.records
        ]
        return "\n".join(lines) + ("\n" if lines else "")

    def save_jsonl(self, filepath: str) -> str:
        Path(filepath).parent.mkdir(parents=True, exist_ok=True)
        with open(filepath, "w", encoding="utf-8") as f:
            f.write(self.to_jsonl())
        return filepath

    def save_to_file(self, filepath: str, extra: Optional[Dict[str, Any]] = None) -> str:
        """Сохранение сводки и всех записей в один JSON файл."""
        data = {
            "run_id": self.run_id,
            "summary": {**self.summary, "total_words": self.total_words},
            "messages": self.records
        }
        if extra:
            data.update(extra)

        Path(filepath).parent.mkdir(parents=True, exist_ok=True)
        with open(filepath, "w", encoding="utf-8") as f:
            json.dump(data, f, ensure_ascii=False, indent=2)
        return filepath

    @staticmethod
    def load_jsonl(filepath: str) -> List[Dict[str, Any]]:
        """Чтение записей из line-delimited JSON для аудита."""
        with open(filepath, "r", encoding="utf-8") as f:
            return [json.loads(line) for line in f if line.strip()]
