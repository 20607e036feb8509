# app/config.py
import logging
import os
import sys

from pydantic import BaseModel, Field, field_validator


class Settings(BaseModel):
    """Process-wide defaults, overridable from the environment."""

    workers: int = Field(1, ge=1, description="Default evaluation threads for the ensemble search")
    log_level: str = "INFO"

    @field_validator("log_level")
    @classmethod
    def upper_level(cls, v: str) -> str:
        v = v.upper()
        if v not in {"DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"}:
            raise ValueError(f"unknown log level {v!r}")
        return v


def load_settings() -> Settings:
    return Settings(
        workers=int(os.getenv("BME_WORKERS", "1")),
        log_level=os.getenv("BME_LOG_LEVEL", "INFO"),
    )


def configure_logging(level: str) -> None:
    """Diagnostics go to stderr; stdout is reserved for data."""
    logger = logging.getLogger("bme-spot")
    for handler in list(logger.handlers):
        logger.removeHandler(handler)
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter("%(asctime)s %(name)s %(levelname)s %(message)s"))
    logger.addHandler(handler)
    logger.setLevel(level)
