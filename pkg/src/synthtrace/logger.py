"""Structured logging with an optional rotating file handler.

Console output goes to stderr so that stdout stays free for
machine-readable results (JSON reports, score listings).
File logs, when requested, are verbose for diagnostics.
"""

import logging
import sys
from logging.handlers import RotatingFileHandler
from pathlib import Path
from typing import Optional

from synthtrace.constants import APP_NAME, LOG_BACKUP_COUNT, LOG_MAX_BYTES

_CONSOLE_LEVELS = {
    "quiet": logging.WARNING,
    "info": logging.INFO,
    "debug": logging.DEBUG,
}


def setup_logging(level: str = "info", log_file: Optional[Path] = None) -> logging.Logger:
    """Configure and return the application logger.

    Args:
        level: Console verbosity, one of quiet/info/debug.
        log_file: Optional path of a rotating debug log.

    Returns:
        The root 'synthtrace' logger.
    """
    logger = logging.getLogger(APP_NAME)
    if logger.handlers:
        return logger  # Already configured

    logger.setLevel(logging.DEBUG)

    console_handler = logging.StreamHandler(sys.stderr)
    console_handler.setLevel(_CONSOLE_LEVELS.get(level, logging.INFO))
    console_handler.setFormatter(logging.Formatter(
        fmt="%(asctime)s | %(levelname)-8s | %(message)s",
        datefmt="%H:%M:%S",
    ))
    logger.addHandler(console_handler)

    if log_file is not None:
        log_file = Path(log_file)
        log_file.parent.mkdir(parents=True, exist_ok=True)
        # File handler: verbose, rotating (5MB x 3 backups)
        file_handler = RotatingFileHandler(
            log_file,
            maxBytes=LOG_MAX_BYTES,
            backupCount=LOG_BACKUP_COUNT,
            encoding="utf-8",
        )
        file_handler.setLevel(logging.DEBUG)
        file_handler.setFormatter(logging.Formatter(
            fmt="%(asctime)s | %(levelname)-8s | %(name)s | %(message)s",
            datefmt="%Y-%m-%d %H:%M:%S",
        ))
        logger.addHandler(file_handler)

    return logger


def reset_logging() -> None:
    """Drop all handlers so the next setup_logging() call reconfigures."""
    logger = logging.getLogger(APP_NAME)
    for handler in list(logger.handlers):
        logger.removeHandler(handler)
        handler.close()
