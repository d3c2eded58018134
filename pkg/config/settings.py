"""
Configuration management for the LAB-BNN toolkit.

This module defines the process-wide settings using Pydantic's BaseSettings.
It handles environment variable loading and provides default values for
logging, dataset discovery, reproducibility and benchmarking. Per-run
experiment settings (network, training, analysis) live in the run config
file instead, see `config.run_config`.
"""

from typing import Optional

from pydantic_settings import BaseSettings


class Settings(BaseSettings):
    """
    Toolkit settings loaded from environment variables.

    Values here apply to every command of a process. Anything that changes
    the numbers an experiment produces belongs in the run config, so that
    the echoed config reproduces the artifacts on its own.
    """

    # Application
    APP_NAME: str = "LAB-BNN Toolkit"
    APP_VERSION: str = "1.0.0"
    DEBUG: bool = False  # Full tracebacks on command failure

    # Datasets
    LABNN_DATA_DIR: Optional[str] = None  # Dataset root when no path is given on the command line

    # Reproducibility
    DEFAULT_SEED: int = 0
    DEFAULT_THREADS: int = 1  # Determinism is only guaranteed single-threaded

    # Benchmarking
    BENCH_RUNS: int = 50
    BENCH_WARMUP: int = 5

    # Artifacts
    CHECKPOINT_NAME: str = "model.labc"

    # Logging
    LOG_LEVEL: str = "INFO"  # DEBUG, INFO, WARNING, ERROR, CRITICAL

    class Config:
        """Pydantic configuration options."""
        env_file = ".env"
        case_sensitive = True


# Global settings instance
settings = Settings()
