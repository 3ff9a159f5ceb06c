import logging
import os
from typing import Dict

_LOGGER: Dict[str, logging.Logger] = {}

DEFAULT_LOG_LEVEL = os.environ.get("FLYCAP_LOG_LEVEL", "INFO").upper()


def resolve_level(level: int | str | None) -> int:
    if level is None:
        level = DEFAULT_LOG_LEVEL
    if isinstance(level, str):
        resolved = logging.getLevelName(level.upper())
        if not isinstance(resolved, int):
            raise ValueError(f"Unknown log level {level!r}")
        return resolved
    return level


def get_logger(name: str, level: int | str | None = None) -> logging.Logger:
    if name in _LOGGER:
        logger = _LOGGER[name]
        if level is not None:
            logger.setLevel(resolve_level(level))
        return logger

    # stderr keeps stdout free for reports
    console = logging.StreamHandler()
    console.setFormatter(
        logging.Formatter(
            fmt="%(asctime)s %(levelname)s %(name)s:%(filename)s:%(lineno)s] "
            "%(message)s",
            datefmt="%Y-%m-%d %H:%M:%S",
        )
    )
    logger = logging.getLogger(name)
    logger.addHandler(console)
    logger.setLevel(resolve_level(level))
    logger.propagate = False

    _LOGGER[name] = logger
    return logger


def format_headline(value: float) -> str:
    """Fixed 4-decimal rendering used for human-readable averages."""
    return f"{value:.4f}"
