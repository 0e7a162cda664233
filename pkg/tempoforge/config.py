"""
Configuration management for TempoForge.
"""
import logging
import os
from pathlib import Path
from typing import Optional

from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict

logger = logging.getLogger(__name__)


class Settings(BaseSettings):
    """Process-wide settings with environment variable support."""

    model_config = SettingsConfigDict(
        env_prefix="TEMPOFORGE_",
        env_file=".env",
        env_file_encoding="utf-8",
        case_sensitive=False,
        extra="ignore",
    )

    # Runtime
    debug: bool = Field(False, description="Debug mode (verbose logging, no log file)")
    log_level: str = Field("INFO", description="Root log level")
    log_file: Optional[str] = Field(
        "tempoforge.log",
        description="Log file written next to stdout logging (ignored in debug mode)",
    )
    progress: bool = Field(True, description="Show tqdm progress bars during training")

    # Data
    data_dir: Optional[str] = Field(
        None,
        description="Default directory holding the MNIST IDX files",
    )
    train_images: str = Field("train-images-idx3-ubyte", description="Training images file name")
    train_labels: str = Field("train-labels-idx1-ubyte", description="Training labels file name")
    test_images: str = Field("t10k-images-idx3-ubyte", description="Test images file name")
    test_labels: str = Field("t10k-labels-idx1-ubyte", description="Test labels file name")

    # Outputs
    output_dir: str = Field("runs", description="Default directory for checkpoints and metrics")

    # Parallelism
    workers: int = Field(
        1,
        ge=1,
        le=256,
        description="Worker processes for per-sample forward/backward passes",
    )


# Global settings instance
settings = Settings()


def get_settings() -> Settings:
    """Get settings instance."""
    return settings


def resolve_data_path(name: str, data_dir: Optional[str] = None) -> Path:
    """Resolve a dataset file name against the configured data directory."""
    base = data_dir or settings.data_dir
    path = Path(name)
    if base and not path.is_absolute():
        path = Path(base) / path
    return path


def validate_settings() -> None:
    """Validate critical settings and raise errors if misconfigured."""
    if settings.data_dir and not Path(settings.data_dir).is_dir():
        raise ValueError(
            f"Data directory {settings.data_dir!r} does not exist. "
            "Set TEMPOFORGE_DATA_DIR to the folder holding the MNIST IDX files."
        )

    if not isinstance(logging.getLevelName(settings.log_level.upper()), int):
        raise ValueError(f"Unknown log level {settings.log_level!r}")

    if settings.workers > (os.cpu_count() or 1):
        logger.warning(
            f"workers={settings.workers} exceeds the {os.cpu_count()} available CPUs"
        )
