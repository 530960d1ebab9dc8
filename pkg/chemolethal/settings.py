from functools import lru_cache
from pathlib import Path
from typing import Optional

from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    """Process-level settings, read from CHEMOLETHAL_* variables and .env"""

    model_config = SettingsConfigDict(
        env_prefix="CHEMOLETHAL_",
        env_file=".env",
        env_file_encoding="utf-8",
        extra="ignore",
    )

    database_url: str = "sqlite:///./chemolethal.db"
    output_root: Path = Path("runs")
    sweep_max_runs: int = 400
    sweep_workers: Optional[int] = None
    # CG iteration cap is this factor times the number of unknowns
    cg_max_iterations: int = 20
    log_level: str = "INFO"
    record_runs: bool = False


@lru_cache
def get_settings() -> Settings:
    return Settings()
