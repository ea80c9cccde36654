from __future__ import annotations

import logging

from app.core import settings

_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"


def configure_logging(level: str | None = None) -> None:
    """Root logger setup shared by the CLI, scripts and the service."""
    logging.basicConfig(
        level=(level or settings.log_level()),
        format=_FORMAT,
        force=True,
    )


def get_logger(name: str) -> logging.Logger:
    return logging.getLogger(name)
