from pydantic_settings import BaseSettings, SettingsConfigDict
from functools import lru_cache
from pathlib import Path

# Get the package directory and project root
PACKAGE_DIR = Path(__file__).resolve().parent
PROJECT_ROOT = PACKAGE_DIR.parent


class Settings(BaseSettings):
    """Process-level settings, read from the environment and `.env`."""

    # App
    app_name: str = "consequential"
    debug: bool = False

    # Logging
    log_level: str = "INFO"

    # Execution
    workers: int = 1  # threads for independent experiment cells
    progress: bool = True  # tqdm bars on long loops

    # Output
    output_dir: str = str(PROJECT_ROOT / "runs")

    model_config = SettingsConfigDict(
        env_file=str(PROJECT_ROOT / ".env"),
        env_file_encoding="utf-8",
        extra="ignore",
    )


@lru_cache()
def get_settings() -> Settings:
    """Get cached settings instance."""
    return Settings()
