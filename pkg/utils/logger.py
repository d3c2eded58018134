"""
Logging configuration module.

Every toolkit module logs through `get_logger(__name__)`. All of them share
one stdout handler, so a command's progress lines, the uniqueness workers'
DEBUG lines and the benchmark summary interleave in a single stream. The
machine-readable output of `eval` goes to stdout too, as a bare JSON line
without the log prefix.
"""

import logging
import sys
from typing import Optional

from config.settings import settings

LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"
BANNER_WIDTH = 70


class _StdoutHandler(logging.StreamHandler):
    """Writes to whatever `sys.stdout` is at emit time."""

    @property
    def stream(self):
        return sys.stdout

    @stream.setter
    def stream(self, value):
        pass


_handler: Optional[logging.Handler] = None


def _shared_handler() -> logging.Handler:
    global _handler
    if _handler is None:
        _handler = _StdoutHandler()
        _handler.setFormatter(logging.Formatter(LOG_FORMAT))
    return _handler


def _level() -> int:
    if settings.DEBUG:
        return logging.DEBUG
    return getattr(logging, settings.LOG_LEVEL.upper(), logging.INFO)


def get_logger(name: str) -> logging.Logger:
    """
    Get configured logger instance.

    Args:
        name (str): The name of the logger, typically `__name__`.

    Returns:
        logging.Logger: A logger on the shared stdout handler, at LOG_LEVEL
        (DEBUG when the DEBUG setting is on).
    """
    logger = logging.getLogger(name)
    if not logger.handlers:
        logger.addHandler(_shared_handler())
        logger.setLevel(_level())
        logger.propagate = False
    return logger


def log_banner(logger: logging.Logger, message: str) -> None:
    """Log `message` between two rules, as at command start and end."""
    logger.info("=" * BANNER_WIDTH)
    logger.info(message)
    logger.info("=" * BANNER_WIDTH)
