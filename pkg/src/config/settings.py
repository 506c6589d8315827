"""
Настройки окружения (переменные CSS_* и файл .env).
"""

from typing import Optional

from pydantic_settings import BaseSettings, SettingsConfigDict


class CSSSettings(BaseSettings):
    """Настройки запуска, не относящиеся к конкретному эксперименту."""
    model_config = SettingsConfigDict(
        env_prefix="CSS_",
        env_file=".env",
        env_file_encoding="utf-8",
        extra="ignore"
    )

    log_level: str = "INFO"
    log_file: str = "logs/css_experiments.log"
    json_log_file: Optional[str] = None
    output_dir: str = "results"
    workers: int = 1


def get_settings() -> CSSSettings:
    return CSSSettings()
