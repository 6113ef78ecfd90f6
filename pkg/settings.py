"""
Process-level settings read from the environment and `.env`.
"""

import os
from functools import lru_cache
from pathlib import Path

from dotenv import load_dotenv
from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    """Environment settings; CLI flags and config files take precedence"""
    model_config = SettingsConfigDict(env_prefix="SPIKEFRONT_", env_file=".env", extra="ignore")

    database_path: Path = Field(Path("./spikefront_runs.db"), description="Run registry location")
    threads: int = Field(1, ge=1)
    out_dir: Path = Path("runs")


@lru_cache
def get_settings() -> Settings:
    """
    Get or create the process settings.

    Returns:
        Settings instance
    """
    load_dotenv()
    return Settings()


def log_level() -> str:
    """Log level from LOG_LEVEL, defaulting to INFO"""
    load_dotenv()
    return os.getenv("LOG_LEVEL", "INFO").upper()
