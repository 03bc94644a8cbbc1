"""Console logging for the CLI and the scripts."""
from __future__ import annotations

import logging
from logging.config import dictConfig

from .config import LogSettings
from .errors import ConfigError

FORMAT = "%(asctime)s [%(levelname)s] %(name)s :: %(message)s"


def resolve_level(name: str) -> int:
    level = logging.getLevelName(name.strip().upper())
    if not isinstance(level, int):
        raise ConfigError(f"unknown log level {name!r}")
    return level


def configure_logging(settings: LogSettings | None = None) -> int:
    """Install one stderr handler at the configured level; returns the numeric level."""
    level = resolve_level((settings or LogSettings()).level)
    dictConfig(
        {
            "version": 1,
            "disable_existing_loggers": False,
            "formatters": {"default": {"format": FORMAT}},
            "handlers": {
                "console": {
                    "class": "logging.StreamHandler",
                    "formatter": "default",
                    "level": level,
                }
            },
            # library modules log through riemann_flow.*; third-party stays at WARNING
            "loggers": {"riemann_flow": {"level": level}},
            "root": {"handlers": ["console"], "level": logging.WARNING},
        }
    )
    return level


__all__ = ["configure_logging", "resolve_level"]
