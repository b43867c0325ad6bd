"""
Runtime settings

Values come from the environment, optionally seeded by a .env file in the
working directory.
"""

import logging
import os
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

from dotenv import load_dotenv

load_dotenv()

DEFAULT_SEED = 20240607


@dataclass(frozen=True)
class Settings:
    results_dir: Path
    seed: int
    workers: int
    log_level: str
    burn_in_factor: int


@lru_cache(maxsize=1)
def get_settings():
    """Read settings once per process."""
    return Settings(
        results_dir=Path(os.getenv("ISORADIAL_RESULTS_DIR", "results")),
        seed=int(os.getenv("ISORADIAL_SEED", str(DEFAULT_SEED))),
        workers=max(1, int(os.getenv("ISORADIAL_WORKERS", "1"))),
        log_level=os.getenv("ISORADIAL_LOG_LEVEL", "WARNING").upper(),
        burn_in_factor=max(0, int(os.getenv("ISORADIAL_BURN_IN_FACTOR", "64"))),
    )


def configure_logging(level=None):
    """Console logging for command-line use; library code only creates loggers."""
    level = level or get_settings().log_level
    logging.basicConfig(
        level=getattr(logging, level, logging.WARNING),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
