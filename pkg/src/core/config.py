from dotenv import load_dotenv, dotenv_values
load_dotenv() # Load environment variables from .env file

import logging
import os
import sys
from pathlib import Path
from typing import Any, Dict, Optional

from pydantic import BaseModel

from src.core.errors import ConfigurationError

VERSION = "1.0.0"


class Settings(BaseModel):
    log_level: str = "INFO"
    k_max: int = 50
    block_size: int = 1024
    fingerprint_dim: int = 4093
    bootstrap_resamples: int = 10_000


def get_settings() -> Settings:
    """Build settings from the environment. The seed is never read from the environment."""
    try:
        return Settings(
            log_level=os.getenv("RANKFUSION_LOG_LEVEL", "INFO").upper(),
            k_max=int(os.getenv("RANKFUSION_K_MAX", "50")),
            block_size=int(os.getenv("RANKFUSION_BLOCK_SIZE", "1024")),
            fingerprint_dim=int(os.getenv("RANKFUSION_FINGERPRINT_DIM", "4093")),
            bootstrap_resamples=int(os.getenv("RANKFUSION_BOOTSTRAP_RESAMPLES", "10000")),
        )
    except ValueError as e:
        raise ConfigurationError(f"Invalid RANKFUSION_* environment value: {e}")


def configure_logging(level: Optional[str] = None) -> None:
    level = (level or get_settings().log_level).upper()
    logging.basicConfig(
        level=getattr(logging, level, logging.INFO),
        format="%(levelname)s: %(name)s: %(message)s",
        stream=sys.stderr,
        force=True,
    )


def load_config_file(path: Path) -> Dict[str, Any]:
    """Read a dotenv-style config file into flag destinations (lower-case, underscores)."""
    if not Path(path).is_file():
        raise ConfigurationError(f"Config file not found: {path}")
    values = dotenv_values(path)
    return {
        key.strip().lower().replace("-", "_"): value
        for key, value in values.items()
        if value is not None
    }
