"""Logger factory shared by the simulator, the CLI and the services."""

from __future__ import annotations

import logging
import os
from pathlib import Path

_FORMAT = "[%(name)s] %(message)s"
_configured: set[str] = set()


def get_logger(component: str) -> logging.Logger:
    """Return the logger for a component, e.g. ``get_logger("netsim")``.

    Level comes from ``LOG_LEVEL``; when ``LOG_DIR`` is set a file handler
    writes ``<LOG_DIR>/<component>.log`` next to the console output.
    """
    logger = logging.getLogger(component)
    if component in _configured:
        return logger

    logger.setLevel(os.getenv("LOG_LEVEL", "INFO").upper())
    logger.propagate = False

    console = logging.StreamHandler()
    console.setFormatter(logging.Formatter(_FORMAT))
    logger.addHandler(console)

    log_dir = os.getenv("LOG_DIR")
    if log_dir:
        Path(log_dir).mkdir(parents=True, exist_ok=True)
        file_handler = logging.FileHandler(Path(log_dir) / f"{component}.log", encoding="utf-8")
        file_handler.setFormatter(logging.Formatter("%(asctime)s " + _FORMAT))
        logger.addHandler(file_handler)

    _configured.add(component)
    return logger
